// Copyright 2026 The hadc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "had/expr.hpp"
#include "had/interval.hpp"

namespace had {

/// Raised when interval propagation hits an operation that is undefined
/// somewhere in the box (division by an interval containing zero, log or
/// sqrt of a negative part). Names the offending node and sub-box.
struct DomainViolation : std::runtime_error {
  DomainViolation(const std::string& msg, NodeId at, std::string box_text)
      : std::runtime_error(msg), node(at), box(std::move(box_text)) {}
  NodeId node = kNoNode;
  std::string box;
};

std::string describe_box(const Box& box);

/// Sound enclosure of `root` over `box`: every assignment inside the box
/// evaluates inside the returned interval. A piecewise node contributes the
/// hull of both branches unless the guard is decidable from the operand
/// intervals, in which case only the live branch counts. The box must bound
/// every variable in root's support.
Interval propagate_bounds(const ExprGraph& graph, NodeId root, const Box& box);

/// Same sweep, exposing the per-node enclosures (indexed by node id; nodes
/// outside root's cone keep {0,0}). Used by the branch-and-bound splitter.
Interval propagate_bounds(const ExprGraph& graph, NodeId root, const Box& box,
                          std::vector<Interval>& node_bounds);

}  // namespace had
