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

#include "had/bounds.hpp"

#include "had/parser.hpp"

namespace had {

std::string describe_box(const Box& box) {
  std::string out = "{";
  bool first = true;
  for (const auto& [name, iv] : box.dims) {
    if (!first) out += ", ";
    first = false;
    out += name + " in [" + format_double(iv.lo) + ", " + format_double(iv.hi) + "]";
  }
  out += "}";
  return out;
}

Interval propagate_bounds(const ExprGraph& graph, NodeId root, const Box& box) {
  std::vector<Interval> scratch;
  return propagate_bounds(graph, root, box, scratch);
}

Interval propagate_bounds(const ExprGraph& graph, NodeId root, const Box& box,
                          std::vector<Interval>& node_bounds) {
  for (std::uint32_t idx : graph.support(root)) {
    const std::string& name = graph.var_spec(idx).name;
    if (!box.covers(name)) {
      throw ConstructionError("box does not bound variable \"" + name + "\"");
    }
  }

  node_bounds.assign(graph.node_count(), Interval{0.0, 0.0});
  std::vector<std::uint8_t> done(graph.node_count(), 0);

  // Demand-driven, like evaluate(): when a piecewise guard is decidable
  // from the operand intervals only the live branch is visited, so a dead
  // branch can neither widen the result nor raise a domain violation.
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    NodeId id = stack.back();
    if (done[id]) {
      stack.pop_back();
      continue;
    }
    const ExprNode& n = graph.node(id);

    if (n.op == Op::kPiecewise) {
      if (!done[n.guard.lhs]) { stack.push_back(n.guard.lhs); continue; }
      if (!done[n.guard.rhs]) { stack.push_back(n.guard.rhs); continue; }
      const Interval& l = node_bounds[n.guard.lhs];
      const Interval& r = node_bounds[n.guard.rhs];
      bool surely_true = n.guard.rel == Relation::kLess ? l.hi < r.lo : l.hi <= r.lo;
      bool surely_false = n.guard.rel == Relation::kLess ? l.lo >= r.hi : l.lo > r.hi;
      if (surely_true) {
        if (!done[n.child[0]]) { stack.push_back(n.child[0]); continue; }
        node_bounds[id] = node_bounds[n.child[0]];
      } else if (surely_false) {
        if (!done[n.child[1]]) { stack.push_back(n.child[1]); continue; }
        node_bounds[id] = node_bounds[n.child[1]];
      } else {
        bool ready = true;
        for (int i = 0; i < 2; ++i) {
          if (!done[n.child[i]]) {
            stack.push_back(n.child[i]);
            ready = false;
          }
        }
        if (!ready) continue;
        node_bounds[id] = ihull(node_bounds[n.child[0]], node_bounds[n.child[1]]);
      }
      done[id] = 1;
      stack.pop_back();
      continue;
    }

    int n_arity = arity(n.op);
    bool ready = true;
    for (int i = 0; i < n_arity; ++i) {
      if (!done[n.child[i]]) {
        stack.push_back(n.child[i]);
        ready = false;
      }
    }
    if (!ready) continue;

    Interval result;
    try {
      switch (n.op) {
        case Op::kConst: result = Interval::point(n.value); break;
        case Op::kVar: result = box.at(graph.var_spec(n.var).name); break;
        case Op::kAdd: result = iadd(node_bounds[n.child[0]], node_bounds[n.child[1]]); break;
        case Op::kSub: result = isub(node_bounds[n.child[0]], node_bounds[n.child[1]]); break;
        case Op::kMul: result = imul(node_bounds[n.child[0]], node_bounds[n.child[1]]); break;
        case Op::kDiv: result = idiv(node_bounds[n.child[0]], node_bounds[n.child[1]]); break;
        case Op::kPow: result = ipow(node_bounds[n.child[0]], node_bounds[n.child[1]]); break;
        case Op::kNeg: result = ineg(node_bounds[n.child[0]]); break;
        case Op::kExp: result = iexp(node_bounds[n.child[0]]); break;
        case Op::kLog: result = ilog(node_bounds[n.child[0]]); break;
        case Op::kSqrt: result = isqrt(node_bounds[n.child[0]]); break;
        case Op::kTanh: result = itanh(node_bounds[n.child[0]]); break;
        case Op::kSigmoid: result = isigmoid(node_bounds[n.child[0]]); break;
        case Op::kAbs: result = iabs(node_bounds[n.child[0]]); break;
        case Op::kMin: result = imin(node_bounds[n.child[0]], node_bounds[n.child[1]]); break;
        case Op::kMax: result = imax(node_bounds[n.child[0]], node_bounds[n.child[1]]); break;
        case Op::kPiecewise: break;  // handled above
      }
    } catch (const IntervalDomainError& e) {
      throw DomainViolation(std::string(e.what()) + " at subexpression " +
                                print_expr(graph, id) + " over " + describe_box(box),
                            id, describe_box(box));
    }
    node_bounds[id] = result;
    done[id] = 1;
    stack.pop_back();
  }
  return node_bounds[root];
}

}  // namespace had
