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

#include "had/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>

namespace had {

int arity(Op op) {
  switch (op) {
    case Op::kConst:
    case Op::kVar:
      return 0;
    case Op::kNeg:
    case Op::kExp:
    case Op::kLog:
    case Op::kSqrt:
    case Op::kTanh:
    case Op::kSigmoid:
    case Op::kAbs:
      return 1;
    default:
      return 2;
  }
}

bool is_unary(Op op) { return arity(op) == 1; }
bool is_binary(Op op) { return arity(op) == 2 && op != Op::kPiecewise; }

const char* op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kVar: return "var";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kPow: return "pow";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kAbs: return "abs";
    case Op::kMin: return "min";
    case Op::kMax: return "max";
    case Op::kPiecewise: return "piecewise";
  }
  return "?";
}

const char* role_name(VarRole role) {
  switch (role) {
    case VarRole::kFeature: return "feature";
    case VarRole::kWeight: return "weight";
    case VarRole::kBias: return "bias";
    case VarRole::kTarget: return "target";
    case VarRole::kHyper: return "hyper";
  }
  return "?";
}

namespace detail {

double pow_int(double base, long long n) {
  if (n == 0) return 1.0;
  bool invert = n < 0;
  unsigned long long e = invert ? static_cast<unsigned long long>(-(n + 1)) + 1ull
                                : static_cast<unsigned long long>(n);
  double acc = 1.0;
  double b = base;
  while (e != 0) {
    if (e & 1ull) acc *= b;
    e >>= 1;
    if (e != 0) b *= b;
  }
  return invert ? 1.0 / acc : acc;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

bool const_int_exponent(double v, long long& out) {
  if (v != std::rint(v) || std::fabs(v) > 1e15) return false;
  out = static_cast<long long>(v);
  return true;
}

bool guard_true(double lhs, Relation rel, double rhs) {
  return rel == Relation::kLess ? lhs < rhs : lhs <= rhs;
}

double apply_unary(Op op, double a, NodeId at) {
  switch (op) {
    case Op::kNeg: return -a;
    case Op::kExp: return std::exp(a);
    case Op::kLog:
      if (a <= 0.0) throw EvalError("log of non-positive value", at);
      return std::log(a);
    case Op::kSqrt:
      if (a < 0.0) throw EvalError("sqrt of negative value", at);
      return std::sqrt(a);
    case Op::kTanh: return std::tanh(a);
    case Op::kSigmoid: return sigmoid(a);
    case Op::kAbs: return std::fabs(a);
    default: throw EvalError("bad unary op", at);
  }
}

double apply_binary(Op op, double a, double b, NodeId at) {
  switch (op) {
    case Op::kAdd: return a + b;
    case Op::kSub: return a - b;
    case Op::kMul: return a * b;
    case Op::kDiv:
      if (b == 0.0) throw EvalError("division by zero", at);
      return a / b;
    case Op::kPow: {
      long long n;
      if (const_int_exponent(b, n)) {
        if (a == 0.0 && n < 0) throw EvalError("division by zero", at);
        return pow_int(a, n);
      }
      if (a < 0.0) throw EvalError("non-integer power of negative value", at);
      if (a == 0.0 && b < 0.0) throw EvalError("division by zero", at);
      return std::pow(a, b);
    }
    case Op::kMin: return a < b ? a : b;
    case Op::kMax: return a > b ? a : b;
    default: throw EvalError("bad binary op", at);
  }
}

}  // namespace detail

std::size_t ExprGraph::NodeKeyHash::operator()(const NodeKey& k) const {
  std::size_t h = static_cast<std::size_t>(k.op);
  auto mix = [&h](std::size_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  mix(k.var);
  mix(static_cast<std::size_t>(k.value_bits));
  mix(k.child[0]);
  mix(k.child[1]);
  mix(k.guard_lhs);
  mix(k.guard_rhs);
  mix(k.guard_rel);
  return h;
}

namespace {

bool valid_identifier(const std::string& name) {
  if (name.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(name[0])) && name[0] != '_') return false;
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

}  // namespace

NodeId ExprGraph::add_var(VarSpec spec) {
  if (!valid_identifier(spec.name)) {
    throw ConstructionError("invalid variable name \"" + spec.name + "\"");
  }
  if (var_index_.count(spec.name)) {
    throw ConstructionError("duplicate variable \"" + spec.name + "\"");
  }
  if (spec.bounds) {
    if (!spec.bounds->is_finite() || !spec.bounds->valid()) {
      throw ConstructionError("bounds for \"" + spec.name + "\" must be finite with lo <= hi");
    }
  }
  auto index = static_cast<std::uint32_t>(vars_.size());
  var_index_.emplace(spec.name, index);
  vars_.push_back(std::move(spec));

  ExprNode n;
  n.op = Op::kVar;
  n.var = index;
  NodeId id = intern(n);
  var_nodes_.push_back(id);
  return id;
}

NodeId ExprGraph::var_node(std::string_view name) const {
  auto idx = find_var(name);
  if (!idx) throw ConstructionError("unknown variable \"" + std::string(name) + "\"");
  return var_nodes_[*idx];
}

std::optional<std::uint32_t> ExprGraph::find_var(std::string_view name) const {
  auto it = var_index_.find(std::string(name));
  if (it == var_index_.end()) return std::nullopt;
  return it->second;
}

NodeId ExprGraph::constant(double value) {
  if (!std::isfinite(value)) {
    throw ConstructionError("constant must be finite");
  }
  ExprNode n;
  n.op = Op::kConst;
  n.value = value;
  return intern(n);
}

NodeId ExprGraph::intern(const ExprNode& proto) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &proto.value, sizeof(bits));
  NodeKey key{proto.op,
              proto.var,
              bits,
              proto.child,
              proto.guard.lhs,
              proto.guard.rhs,
              static_cast<std::uint8_t>(proto.guard.rel)};
  auto it = interned_.find(key);
  if (it != interned_.end()) return it->second;
  auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(proto);
  interned_.emplace(key, id);
  return id;
}

NodeId ExprGraph::fold_or_intern(ExprNode proto) {
  int n = arity(proto.op);
  bool all_const = true;
  for (int i = 0; i < n; ++i) {
    if (proto.child[i] >= nodes_.size()) {
      throw ConstructionError("child node not interned");
    }
    if (nodes_[proto.child[i]].op != Op::kConst) all_const = false;
  }
  if (proto.op == Op::kPiecewise) {
    const ExprNode& gl = nodes_.at(proto.guard.lhs);
    const ExprNode& gr = nodes_.at(proto.guard.rhs);
    if (gl.op == Op::kConst && gr.op == Op::kConst) {
      // Guard decided at construction: collapse to the selected branch.
      bool taken = detail::guard_true(gl.value, proto.guard.rel, gr.value);
      return taken ? proto.child[0] : proto.child[1];
    }
    return intern(proto);
  }
  if (all_const && n > 0) {
    double value;
    try {
      if (n == 1) {
        value = detail::apply_unary(proto.op, nodes_[proto.child[0]].value, kNoNode);
      } else {
        // Reject constructions that can never evaluate (e.g. 1/0) here.
        double b = nodes_[proto.child[1]].value;
        if (proto.op == Op::kDiv && b == 0.0) {
          throw ConstructionError("division by zero constant");
        }
        value = detail::apply_binary(proto.op, nodes_[proto.child[0]].value, b, kNoNode);
      }
    } catch (const EvalError& e) {
      throw ConstructionError(std::string(op_name(proto.op)) + " of constant: " + e.what());
    }
    // Overflow to +-inf is a runtime-value concern, not a graph constant.
    if (std::isfinite(value)) return constant(value);
  }
  return intern(proto);
}

NodeId ExprGraph::unary(Op op, NodeId a) {
  if (arity(op) != 1) {
    throw ConstructionError(std::string("arity mismatch for ") + op_name(op));
  }
  ExprNode n;
  n.op = op;
  n.child[0] = a;
  return fold_or_intern(n);
}

NodeId ExprGraph::binary(Op op, NodeId a, NodeId b) {
  if (!is_binary(op)) {
    throw ConstructionError(std::string("arity mismatch for ") + op_name(op));
  }
  ExprNode n;
  n.op = op;
  n.child[0] = a;
  n.child[1] = b;
  return fold_or_intern(n);
}

NodeId ExprGraph::piecewise(NodeId guard_lhs, Relation rel, NodeId guard_rhs, NodeId if_true,
                            NodeId if_false) {
  std::size_t count = nodes_.size();
  if (guard_lhs >= count || guard_rhs >= count || if_true >= count || if_false >= count) {
    throw ConstructionError("child node not interned");
  }
  ExprNode n;
  n.op = Op::kPiecewise;
  n.child[0] = if_true;
  n.child[1] = if_false;
  n.guard = Guard{guard_lhs, rel, guard_rhs};
  return fold_or_intern(n);
}

void ExprGraph::add_root(std::string label, NodeId id) {
  if (id >= nodes_.size()) throw ConstructionError("root node not interned");
  roots_.emplace_back(std::move(label), id);
}

std::vector<NodeId> ExprGraph::topo_order(NodeId root) const {
  return topo_order(std::span<const NodeId>(&root, 1));
}

std::vector<NodeId> ExprGraph::topo_order(std::span<const NodeId> roots) const {
  std::vector<NodeId> order;
  std::vector<std::uint8_t> state(nodes_.size(), 0);  // 0 unseen, 1 open, 2 done
  std::vector<NodeId> stack;
  for (NodeId root : roots) {
    if (root >= nodes_.size()) throw ConstructionError("root node not interned");
    stack.push_back(root);
    while (!stack.empty()) {
      NodeId id = stack.back();
      if (state[id] == 2) {
        stack.pop_back();
        continue;
      }
      const ExprNode& n = nodes_[id];
      NodeId deps[4];
      int ndeps = 0;
      if (n.op == Op::kPiecewise) {
        deps[ndeps++] = n.guard.lhs;
        deps[ndeps++] = n.guard.rhs;
        deps[ndeps++] = n.child[0];
        deps[ndeps++] = n.child[1];
      } else {
        for (int i = 0; i < arity(n.op); ++i) deps[ndeps++] = n.child[i];
      }
      if (state[id] == 0) {
        state[id] = 1;
        for (int i = ndeps - 1; i >= 0; --i) {
          if (state[deps[i]] != 2) stack.push_back(deps[i]);
        }
      } else {
        state[id] = 2;
        order.push_back(id);
        stack.pop_back();
      }
    }
  }
  return order;
}

std::vector<std::uint32_t> ExprGraph::support(NodeId root) const {
  std::vector<bool> seen(vars_.size(), false);
  for (NodeId id : topo_order(root)) {
    const ExprNode& n = nodes_[id];
    if (n.op == Op::kVar) seen[n.var] = true;
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) out.push_back(i);
  }
  return out;
}

double ExprGraph::evaluate(NodeId root, const Assignment& assignment) const {
  // Bind variables up front so a missing one is reported even when it only
  // occurs in an untaken branch.
  std::vector<double> var_values(vars_.size(), 0.0);
  std::vector<bool> var_bound(vars_.size(), false);
  for (std::uint32_t idx : support(root)) {
    auto it = assignment.find(vars_[idx].name);
    if (it == assignment.end()) throw UnboundVariableError(vars_[idx].name);
    var_values[idx] = it->second;
    var_bound[idx] = true;
  }

  std::vector<double> values(nodes_.size(), 0.0);
  std::vector<std::uint8_t> done(nodes_.size(), 0);

  // Lazy iterative evaluation: a piecewise node evaluates its guard and
  // exactly one branch.
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    NodeId id = stack.back();
    if (done[id]) {
      stack.pop_back();
      continue;
    }
    const ExprNode& n = nodes_[id];
    switch (n.op) {
      case Op::kConst:
        values[id] = n.value;
        done[id] = 1;
        stack.pop_back();
        break;
      case Op::kVar:
        values[id] = var_values[n.var];
        done[id] = 1;
        stack.pop_back();
        break;
      case Op::kPiecewise: {
        if (!done[n.guard.lhs]) {
          stack.push_back(n.guard.lhs);
          break;
        }
        if (!done[n.guard.rhs]) {
          stack.push_back(n.guard.rhs);
          break;
        }
        bool taken = detail::guard_true(values[n.guard.lhs], n.guard.rel, values[n.guard.rhs]);
        NodeId branch = taken ? n.child[0] : n.child[1];
        if (!done[branch]) {
          stack.push_back(branch);
          break;
        }
        values[id] = values[branch];
        done[id] = 1;
        stack.pop_back();
        break;
      }
      default: {
        int n_arity = arity(n.op);
        bool ready = true;
        for (int i = 0; i < n_arity; ++i) {
          if (!done[n.child[i]]) {
            stack.push_back(n.child[i]);
            ready = false;
          }
        }
        if (!ready) break;
        if (n_arity == 1) {
          values[id] = detail::apply_unary(n.op, values[n.child[0]], id);
        } else {
          values[id] = detail::apply_binary(n.op, values[n.child[0]], values[n.child[1]], id);
        }
        done[id] = 1;
        stack.pop_back();
        break;
      }
    }
  }
  return values[root];
}

}  // namespace had
