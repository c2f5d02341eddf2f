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

#include "had/lipschitz.hpp"

#include <algorithm>
#include <queue>

#include "had/compile.hpp"
#include "had/parser.hpp"

namespace had {
namespace {

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,  43,  47,  53,
                           59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

// Radical-inverse (van der Corput) value of index in the given base.
double radical_inverse(std::uint64_t index, int base) {
  double inv = 1.0 / base;
  double factor = inv;
  double value = 0.0;
  while (index > 0) {
    value += static_cast<double>(index % static_cast<std::uint64_t>(base)) * factor;
    index /= static_cast<std::uint64_t>(base);
    factor *= inv;
  }
  return value;
}

struct WorkItem {
  double upper = 0.0;
  std::uint64_t seq = 0;  // insertion order; deterministic tie-break
  int split_dim = 0;
  std::vector<Interval> dims;
};

struct WorkItemLess {
  bool operator()(const WorkItem& a, const WorkItem& b) const {
    if (a.upper != b.upper) return a.upper < b.upper;
    return a.seq > b.seq;  // earlier items first on ties
  }
};

}  // namespace

nlohmann::json LipschitzReport::to_json() const {
  nlohmann::json witness_json = nlohmann::json::object();
  for (const auto& [name, value] : witness) witness_json[name] = value;
  return nlohmann::json{{"k_upper", k_upper},
                        {"k_lower", k_lower},
                        {"witness", witness_json},
                        {"iterations", iterations},
                        {"tolerance", tolerance},
                        {"closed_form", closed_form},
                        {"flags", {{"budget_exhausted", budget_exhausted},
                                   {"converged", converged}}}};
}

LipschitzReport sup_over_box(ExprGraph& graph, NodeId root, const Box& box,
                             const LipschitzOptions& opts) {
  if (opts.tolerance <= 0.0) throw ConstructionError("tolerance must be positive");

  // Only dimensions the expression actually reads are worth splitting.
  std::vector<std::string> dim_names;
  for (std::uint32_t idx : graph.support(root)) {
    dim_names.push_back(graph.var_spec(idx).name);
  }
  const std::size_t ndims = dim_names.size();

  // Smear nodes: the symbolic partial of the objective's source function
  // for each dimension, when the caller attached them as graph roots named
  // "smear:<var>". Used only to pick split dimensions.
  std::vector<NodeId> smear(ndims, kNoNode);
  bool full_smear = ndims > 0;
  for (std::size_t d = 0; d < ndims; ++d) {
    for (const auto& [label, id] : graph.roots()) {
      if (label == "smear:" + dim_names[d]) smear[d] = id;
    }
    if (smear[d] == kNoNode) full_smear = false;
  }

  Box working = box;  // validates coverage on first propagate
  std::vector<std::map<std::string, Interval>::iterator> dim_iters;
  for (const std::string& name : dim_names) {
    auto it = working.dims.find(name);
    if (it == working.dims.end()) {
      throw ConstructionError("box does not bound variable \"" + name + "\"");
    }
    dim_iters.push_back(it);
  }

  LipschitzReport report;
  report.tolerance = opts.tolerance;

  // Point evaluations run through a compiled kernel.
  std::vector<std::pair<std::string, NodeId>> kernel_roots{{"value", root}};
  KernelProgram kernel = lower(graph, kernel_roots, CompileOptions::aot());
  std::vector<std::size_t> layout_dim(kernel.input_layout.size(), 0);
  for (std::size_t i = 0; i < kernel.input_layout.size(); ++i) {
    auto it = std::find(dim_names.begin(), dim_names.end(), kernel.input_layout[i]);
    if (it == dim_names.end()) {
      throw ConstructionError("kernel input not in expression support");
    }
    layout_dim[i] = static_cast<std::size_t>(it - dim_names.begin());
  }

  double best_lower = -std::numeric_limits<double>::infinity();
  std::vector<double> best_point(ndims, 0.0);
  std::vector<double> row(kernel.input_layout.size(), 0.0);
  auto try_point = [&](const std::vector<double>& point) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = point[layout_dim[i]];
    double value = kernel.execute(row, 1)[0];
    if (value > best_lower) {
      best_lower = value;
      best_point = point;
    }
  };

  std::vector<Interval> whole(ndims);
  for (std::size_t d = 0; d < ndims; ++d) whole[d] = box.at(dim_names[d]);

  auto set_box = [&](const std::vector<Interval>& dims) {
    for (std::size_t d = 0; d < ndims; ++d) dim_iters[d]->second = dims[d];
  };

  std::vector<Interval> node_bounds;
  // Bound a sub-box and pick its split dimension. Wraps domain violations
  // into the not-locally-Lipschitz error on the initial whole-box pass; on
  // sub-boxes inclusion monotonicity makes them impossible.
  auto bound_item = [&](const std::vector<Interval>& dims, bool initial) -> WorkItem {
    set_box(dims);
    Interval enclosure;
    try {
      enclosure = propagate_bounds(graph, root, working, node_bounds);
    } catch (const DomainViolation& e) {
      if (initial) {
        throw NotLipschitzError(e.what(), e.node, e.box);
      }
      throw;
    }
    WorkItem item;
    item.upper = enclosure.hi;
    item.dims = dims;
    item.split_dim = -1;  // stays -1 when no dimension can be bisected
    double best_score = -1.0;
    for (std::size_t d = 0; d < ndims; ++d) {
      double mid = dims[d].mid();
      if (!(mid > dims[d].lo) || !(mid < dims[d].hi)) continue;
      double width = dims[d].width();
      double score = width;
      if (full_smear) score = width * node_bounds[smear[d]].mag();
      if (score > best_score) {
        best_score = score;
        item.split_dim = static_cast<int>(d);
      }
    }
    return item;
  };

  if (ndims == 0) {
    // Constant expression: the enclosure is the value.
    double value = kernel.execute(std::span<const double>{}, 1)[0];
    report.k_upper = value;
    report.k_lower = value;
    report.converged = true;
    return report;
  }

  // Low-discrepancy multi-start plus the box center seed the lower bound
  // (this sampling stage stands in for a global-optimizer warm start).
  std::vector<double> point(ndims, 0.0);
  for (std::size_t d = 0; d < ndims; ++d) point[d] = whole[d].mid();
  try_point(point);
  for (int s = 1; s <= opts.multistart; ++s) {
    for (std::size_t d = 0; d < ndims; ++d) {
      double u = radical_inverse(static_cast<std::uint64_t>(s),
                                 kPrimes[d % (sizeof(kPrimes) / sizeof(kPrimes[0]))]);
      point[d] = whole[d].lo + u * whole[d].width();
    }
    try_point(point);
  }

  std::priority_queue<WorkItem, std::vector<WorkItem>, WorkItemLess> queue;
  std::uint64_t seq = 0;
  WorkItem first = bound_item(whole, /*initial=*/true);
  first.seq = seq++;
  queue.push(std::move(first));

  std::size_t expansions = 0;
  // Boxes too small to bisect at double resolution stop contributing work
  // but their certified upper bounds still count toward the global bound.
  double irreducible_upper = -std::numeric_limits<double>::infinity();
  double global_upper = queue.top().upper;
  while (!queue.empty()) {
    global_upper = std::max({queue.top().upper, best_lower, irreducible_upper});
    double gap = (global_upper - best_lower) / std::max(best_lower, 1.0);
    if (gap <= opts.tolerance) {
      report.converged = true;
      break;
    }
    if (expansions >= opts.budget) {
      report.budget_exhausted = true;
      break;
    }
    WorkItem item = queue.top();
    queue.pop();
    if (item.upper <= best_lower) continue;  // cannot contain a better point
    if (item.split_dim < 0) {
      irreducible_upper = std::max(irreducible_upper, item.upper);
      continue;
    }
    ++expansions;
    int d = item.split_dim;
    double mid = item.dims[d].mid();
    for (int half = 0; half < 2; ++half) {
      std::vector<Interval> dims = item.dims;
      dims[d] = half == 0 ? Interval{dims[d].lo, mid} : Interval{mid, dims[d].hi};
      WorkItem child = bound_item(dims, /*initial=*/false);
      child.seq = seq++;
      for (std::size_t k = 0; k < ndims; ++k) point[k] = dims[k].mid();
      try_point(point);
      if (child.upper > best_lower) queue.push(std::move(child));
    }
  }
  if (queue.empty()) {
    global_upper = std::max(best_lower, irreducible_upper);
    report.converged =
        (global_upper - best_lower) / std::max(best_lower, 1.0) <= opts.tolerance;
  }

  report.k_upper = global_upper;
  report.k_lower = best_lower;
  report.iterations = expansions;
  for (std::size_t d = 0; d < ndims; ++d) report.witness[dim_names[d]] = best_point[d];
  return report;
}

LipschitzReport lipschitz_constant(ExprGraph& graph, NodeId root, const Box& box,
                                   const LipschitzOptions& opts,
                                   std::span<const std::string> wrt_names) {
  std::vector<std::string> wrt(wrt_names.begin(), wrt_names.end());
  if (wrt.empty()) {
    for (std::uint32_t idx : graph.support(root)) {
      wrt.push_back(graph.var_spec(idx).name);
    }
  }
  if (wrt.empty()) {
    throw ConstructionError("expression has no variables to differentiate");
  }

  GradientBundle bundle = grad(graph, root, std::span<const std::string>(wrt));
  NodeId norm = grad_norm(graph, bundle);

  // Attach partials as labeled roots so the splitter can use their interval
  // magnitudes as smear scores.
  for (std::size_t i = 0; i < bundle.wrt.size(); ++i) {
    graph.add_root("smear:" + bundle.wrt[i].name, bundle.partials[i]);
  }

  LipschitzReport report = sup_over_box(graph, norm, box, opts);
  report.closed_form = print_expr(graph, norm);
  return report;
}

Box make_weight_box(std::span<const VarSpec> params, double radius) {
  if (!(radius > 0.0)) throw ConstructionError("weight radius must be positive");
  Box box;
  for (const VarSpec& spec : params) box.set(spec.name, Interval{-radius, radius});
  return box;
}

Box make_weight_box(std::span<const VarSpec> params, std::span<const double> radii) {
  if (params.size() != radii.size()) {
    throw ConstructionError("one radius per variable required");
  }
  Box box;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ConstructionError("weight radius must be positive");
    box.set(params[i].name, Interval{-radii[i], radii[i]});
  }
  return box;
}

}  // namespace had
