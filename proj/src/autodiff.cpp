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

#include "had/autodiff.hpp"

#include <unordered_map>

#include "had/compile.hpp"

namespace had {
namespace {

bool is_const(const ExprGraph& g, NodeId id, double v) {
  const ExprNode& n = g.node(id);
  return n.op == Op::kConst && n.value == v;
}

// Local algebraic shortcuts used while accumulating adjoints. These keep
// derivative graphs readable and stop most of the expression swell before
// the simplify pass runs.
NodeId add_s(ExprGraph& g, NodeId a, NodeId b) {
  if (is_const(g, a, 0.0)) return b;
  if (is_const(g, b, 0.0)) return a;
  return g.binary(Op::kAdd, a, b);
}

NodeId mul_s(ExprGraph& g, NodeId a, NodeId b) {
  if (is_const(g, a, 0.0) || is_const(g, b, 0.0)) return g.constant(0.0);
  if (is_const(g, a, 1.0)) return b;
  if (is_const(g, b, 1.0)) return a;
  return g.binary(Op::kMul, a, b);
}

NodeId div_s(ExprGraph& g, NodeId a, NodeId b) {
  if (is_const(g, a, 0.0)) return g.constant(0.0);
  if (is_const(g, b, 1.0)) return a;
  return g.binary(Op::kDiv, a, b);
}

NodeId neg_s(ExprGraph& g, NodeId a) {
  if (is_const(g, a, 0.0)) return a;
  return g.unary(Op::kNeg, a);
}

NodeId pow_s(ExprGraph& g, NodeId base, double exponent) {
  if (exponent == 0.0) return g.constant(1.0);
  if (exponent == 1.0) return base;
  return g.binary(Op::kPow, base, g.constant(exponent));
}

// Derivative of abs: -1 below zero, 0 at the kink (chosen subgradient),
// +1 above.
NodeId abs_sign(ExprGraph& g, NodeId u) {
  NodeId zero = g.constant(0.0);
  NodeId inner = g.piecewise(u, Relation::kLessEqual, zero, zero, g.constant(1.0));
  return g.piecewise(u, Relation::kLess, zero, g.constant(-1.0), inner);
}

}  // namespace

NodeId balanced_sum(ExprGraph& graph, std::span<const NodeId> terms) {
  if (terms.empty()) return graph.constant(0.0);
  std::vector<NodeId> level(terms.begin(), terms.end());
  while (level.size() > 1) {
    std::vector<NodeId> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      next.push_back(add_s(graph, level[i], level[i + 1]));
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level[0];
}

GradientBundle grad(ExprGraph& graph, NodeId root, std::span<const VarSpec> wrt) {
  std::vector<std::string> names;
  names.reserve(wrt.size());
  for (const VarSpec& v : wrt) names.push_back(v.name);
  return grad(graph, root, names);
}

GradientBundle grad(ExprGraph& graph, NodeId root, std::span<const std::string> wrt_names) {
  std::vector<NodeId> wrt_nodes;
  GradientBundle bundle;
  bundle.source_root = root;
  for (const std::string& name : wrt_names) {
    auto idx = graph.find_var(name);
    if (!idx) {
      throw ConstructionError("cannot differentiate with respect to unknown variable \"" + name +
                              "\"");
    }
    bundle.wrt.push_back(graph.var_spec(*idx));
    wrt_nodes.push_back(graph.var_node(name));
  }

  std::vector<NodeId> order = graph.topo_order(root);
  std::unordered_map<NodeId, NodeId> adjoint;
  adjoint.reserve(order.size());
  adjoint[root] = graph.constant(1.0);

  auto accumulate = [&](NodeId child, NodeId contribution) {
    auto it = adjoint.find(child);
    if (it == adjoint.end()) {
      adjoint.emplace(child, contribution);
    } else {
      it->second = add_s(graph, it->second, contribution);
    }
  };

  // Reverse accumulation: parents are finished before their children, so
  // each node's adjoint is complete when we propagate it downward. Guard
  // operands of a piecewise receive no adjoint (the guard only selects).
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeId id = *it;
    auto adj_it = adjoint.find(id);
    if (adj_it == adjoint.end()) continue;  // reachable only through guards
    NodeId adj = adj_it->second;
    if (is_const(graph, adj, 0.0)) continue;
    const ExprNode& n = graph.node(id);
    NodeId u = n.child[0];
    NodeId v = n.child[1];
    switch (n.op) {
      case Op::kConst:
      case Op::kVar:
        break;
      case Op::kAdd:
        accumulate(u, adj);
        accumulate(v, adj);
        break;
      case Op::kSub:
        accumulate(u, adj);
        accumulate(v, neg_s(graph, adj));
        break;
      case Op::kMul:
        accumulate(u, mul_s(graph, adj, v));
        accumulate(v, mul_s(graph, adj, u));
        break;
      case Op::kDiv:
        accumulate(u, div_s(graph, adj, v));
        accumulate(v, neg_s(graph, div_s(graph, mul_s(graph, adj, u), pow_s(graph, v, 2.0))));
        break;
      case Op::kPow: {
        const ExprNode& ve = graph.node(v);
        if (ve.op == Op::kConst) {
          // d(u^c) = c * u^(c-1) * u'
          NodeId factor = mul_s(graph, v, pow_s(graph, u, ve.value - 1.0));
          accumulate(u, mul_s(graph, adj, factor));
        } else {
          // d(u^v): u-side v*u^(v-1), v-side u^v * log u.
          NodeId vm1 = graph.binary(Op::kSub, v, graph.constant(1.0));
          NodeId um1 = graph.binary(Op::kPow, u, vm1);
          accumulate(u, mul_s(graph, adj, mul_s(graph, v, um1)));
          accumulate(v, mul_s(graph, adj, mul_s(graph, id, graph.unary(Op::kLog, u))));
        }
        break;
      }
      case Op::kNeg:
        accumulate(u, neg_s(graph, adj));
        break;
      case Op::kExp:
        accumulate(u, mul_s(graph, adj, id));
        break;
      case Op::kLog:
        accumulate(u, div_s(graph, adj, u));
        break;
      case Op::kSqrt:
        accumulate(u, div_s(graph, adj, mul_s(graph, graph.constant(2.0), id)));
        break;
      case Op::kTanh: {
        NodeId one_minus = graph.binary(Op::kSub, graph.constant(1.0), pow_s(graph, id, 2.0));
        accumulate(u, mul_s(graph, adj, one_minus));
        break;
      }
      case Op::kSigmoid: {
        NodeId one_minus = graph.binary(Op::kSub, graph.constant(1.0), id);
        accumulate(u, mul_s(graph, adj, mul_s(graph, id, one_minus)));
        break;
      }
      case Op::kAbs:
        accumulate(u, mul_s(graph, adj, abs_sign(graph, u)));
        break;
      case Op::kMin: {
        // min(a,b) = b at ties, matching the evaluator's (a < b ? a : b).
        NodeId zero = graph.constant(0.0);
        accumulate(u, graph.piecewise(u, Relation::kLess, v, adj, zero));
        accumulate(v, graph.piecewise(u, Relation::kLess, v, zero, adj));
        break;
      }
      case Op::kMax: {
        NodeId zero = graph.constant(0.0);
        accumulate(u, graph.piecewise(v, Relation::kLess, u, adj, zero));
        accumulate(v, graph.piecewise(v, Relation::kLess, u, zero, adj));
        break;
      }
      case Op::kPiecewise: {
        // Branch-wise under the same guard.
        NodeId zero = graph.constant(0.0);
        accumulate(u, graph.piecewise(n.guard.lhs, n.guard.rel, n.guard.rhs, adj, zero));
        accumulate(v, graph.piecewise(n.guard.lhs, n.guard.rel, n.guard.rhs, zero, adj));
        break;
      }
    }
  }

  for (NodeId var_node : wrt_nodes) {
    auto it = adjoint.find(var_node);
    bundle.partials.push_back(it == adjoint.end() ? graph.constant(0.0) : it->second);
  }
  return bundle;
}

NodeId grad_norm(ExprGraph& graph, GradientBundle& bundle) {
  if (bundle.partials.empty()) {
    throw ConstructionError("gradient bundle has no partials");
  }
  // Simplify the partials first; simplification is a fixpoint, so they stay
  // subterms of the simplified norm (interval sweeps over the norm then see
  // them for free).
  for (NodeId& p : bundle.partials) p = simplify(graph, p);
  std::vector<NodeId> squares;
  squares.reserve(bundle.partials.size());
  for (NodeId p : bundle.partials) {
    squares.push_back(pow_s(graph, p, 2.0));
  }
  NodeId sum = balanced_sum(graph, squares);
  NodeId norm = graph.unary(Op::kSqrt, sum);
  norm = simplify(graph, norm);
  bundle.norm_root = norm;
  return norm;
}

GradientBundle per_sample_grads(ExprGraph& graph, NodeId loss_root,
                                std::span<const VarSpec> weights) {
  return grad(graph, loss_root, weights);
}

}  // namespace had
