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

#include <nlohmann/json.hpp>

#include "had/autodiff.hpp"
#include "had/bounds.hpp"
#include "had/expr.hpp"

namespace had {

/// The function is not locally Lipschitz over the requested box: interval
/// analysis found a sub-region where the gradient norm is unbounded or
/// undefined.
struct NotLipschitzError : std::runtime_error {
  NotLipschitzError(const std::string& msg, NodeId at, std::string region)
      : std::runtime_error("not locally Lipschitz: " + msg), node(at),
        singular_region(std::move(region)) {}
  NodeId node = kNoNode;
  std::string singular_region;
};

struct LipschitzOptions {
  double tolerance = 1e-3;      // relative gap target
  std::size_t budget = 100000;  // node expansions before giving up
  int multistart = 64;          // low-discrepancy initial samples
};

/// Certified sandwich K-lower <= sup <= K-upper with a witness point
/// attaining K-lower.
struct LipschitzReport {
  double k_upper = 0.0;
  double k_lower = 0.0;
  Assignment witness;
  std::size_t iterations = 0;
  double tolerance = 0.0;
  std::string closed_form;
  bool budget_exhausted = false;
  bool converged = false;

  double gap() const { return (k_upper - k_lower) / std::max(k_lower, 1.0); }
  nlohmann::json to_json() const;
};

/// Certified upper/lower bounds on sup of an arbitrary scalar expression
/// over a box, by deterministic interval branch-and-bound: split the box
/// with the worst upper bound along the dimension with the largest
/// width-times-gradient-interval magnitude, prune boxes that cannot beat
/// the best sampled value, stop at the relative-gap tolerance or when the
/// expansion budget runs out (certified but loose, flagged).
LipschitzReport sup_over_box(ExprGraph& graph, NodeId root, const Box& box,
                             const LipschitzOptions& opts = {});

/// Local Lipschitz constant over a box: builds the symbolic gradient-norm
/// expression for `root` and bounds its supremum. `wrt_names` selects the
/// differentiation variables; empty means every variable in the root's
/// support (they must all be covered by the box).
LipschitzReport lipschitz_constant(ExprGraph& graph, NodeId root, const Box& box,
                                   const LipschitzOptions& opts = {},
                                   std::span<const std::string> wrt_names = {});

/// Box assigning [-radius, radius] to every listed variable.
Box make_weight_box(std::span<const VarSpec> params, double radius);
Box make_weight_box(std::span<const VarSpec> params, std::span<const double> radii);

}  // namespace had
