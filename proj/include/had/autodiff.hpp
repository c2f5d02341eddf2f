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

#include <span>
#include <string>
#include <vector>

#include "had/expr.hpp"

namespace had {

/// Symbolic partial derivatives of one root with respect to an ordered list
/// of variables. All node refs live in the graph the bundle was built from.
struct GradientBundle {
  NodeId source_root = kNoNode;
  std::vector<VarSpec> wrt;
  std::vector<NodeId> partials;
  NodeId norm_root = kNoNode;  // set by grad_norm
};

/// Reverse sweep over the graph in reverse dependency order, accumulating
/// symbolic adjoints. Shared nodes contribute by summation; piecewise nodes
/// differentiate branch-wise under the same guard; a variable absent from
/// the root's support gets the literal constant 0.
GradientBundle grad(ExprGraph& graph, NodeId root, std::span<const VarSpec> wrt);
GradientBundle grad(ExprGraph& graph, NodeId root, std::span<const std::string> wrt_names);

/// Interns sqrt(sum of squared partials), simplified, and records it on the
/// bundle. Numerically equal to the Euclidean norm of the partials at every
/// assignment.
NodeId grad_norm(ExprGraph& graph, GradientBundle& bundle);

/// Identical to grad; the name states the contract: the resulting kernel,
/// run over a batch, yields one gradient per row with no cross-row
/// interaction.
GradientBundle per_sample_grads(ExprGraph& graph, NodeId loss_root,
                                std::span<const VarSpec> weights);

/// Balanced pairwise sum (keeps graph depth logarithmic in the term count).
NodeId balanced_sum(ExprGraph& graph, std::span<const NodeId> terms);

}  // namespace had
