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

#include "had/compile.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <tuple>
#include <unordered_map>

#include "had/bounds.hpp"

namespace had {

// ---------------------------------------------------------------------------
// simplify
// ---------------------------------------------------------------------------

namespace {

bool is_const_value(const ExprGraph& g, NodeId id, double v) {
  const ExprNode& n = g.node(id);
  return n.op == Op::kConst && n.value == v;
}

// Denominator provably nonzero from declared variable bounds.
bool provably_nonzero(const ExprGraph& g, NodeId id) {
  Box box;
  for (std::uint32_t idx : g.support(id)) {
    const VarSpec& spec = g.var_spec(idx);
    if (!spec.bounds) return false;
    box.set(spec.name, *spec.bounds);
  }
  try {
    Interval iv = propagate_bounds(g, id, box);
    return !iv.contains_zero();
  } catch (const std::exception&) {
    return false;
  }
}

// One rewrite step for a node whose children are already simplified.
// Returns the replacement node id.
NodeId rewrite(ExprGraph& g, const ExprNode& n, NodeId a, NodeId b) {
  switch (n.op) {
    case Op::kAdd:
      if (is_const_value(g, a, 0.0)) return b;
      if (is_const_value(g, b, 0.0)) return a;
      break;
    case Op::kSub:
      if (a == b) return g.constant(0.0);
      if (is_const_value(g, b, 0.0)) return a;
      if (is_const_value(g, a, 0.0)) return g.unary(Op::kNeg, b);
      break;
    case Op::kMul:
      if (is_const_value(g, a, 0.0) || is_const_value(g, b, 0.0)) return g.constant(0.0);
      if (is_const_value(g, a, 1.0)) return b;
      if (is_const_value(g, b, 1.0)) return a;
      if (a == b) return g.binary(Op::kPow, a, g.constant(2.0));
      break;
    case Op::kDiv:
      if (is_const_value(g, b, 1.0)) return a;
      if (a == b && provably_nonzero(g, b)) return g.constant(1.0);
      break;
    case Op::kPow:
      if (is_const_value(g, b, 1.0)) return a;
      break;
    case Op::kNeg:
      if (g.node(a).op == Op::kNeg) return g.node(a).child[0];
      break;
    case Op::kLog:
      if (g.node(a).op == Op::kExp) return g.node(a).child[0];
      break;
    default:
      break;
  }
  // No rule fired; re-intern with the (possibly rewritten) children.
  if (n.op == Op::kPiecewise) {
    return g.piecewise(n.guard.lhs, n.guard.rel, n.guard.rhs, a, b);
  }
  if (is_unary(n.op)) return g.unary(n.op, a);
  return g.binary(n.op, a, b);
}

NodeId simplify_pass(ExprGraph& g, NodeId root) {
  std::vector<NodeId> order = g.topo_order(root);
  std::unordered_map<NodeId, NodeId> mapped;
  mapped.reserve(order.size());
  for (NodeId id : order) {
    const ExprNode n = g.node(id);  // copy: interning may reallocate the arena
    NodeId replacement;
    switch (n.op) {
      case Op::kConst:
      case Op::kVar:
        replacement = id;
        break;
      case Op::kPiecewise: {
        ExprNode proto = n;
        proto.guard.lhs = mapped.at(n.guard.lhs);
        proto.guard.rhs = mapped.at(n.guard.rhs);
        NodeId a = mapped.at(n.child[0]);
        NodeId b = mapped.at(n.child[1]);
        try {
          replacement = rewrite(g, proto, a, b);
        } catch (const ConstructionError&) {
          replacement = id;
        }
        break;
      }
      default: {
        NodeId a = mapped.at(n.child[0]);
        NodeId b = is_binary(n.op) ? mapped.at(n.child[1]) : kNoNode;
        try {
          replacement = rewrite(g, n, a, b);
        } catch (const ConstructionError&) {
          // A rewrite produced an illegal construction (e.g. the denominator
          // simplified to the zero constant); keep the original node.
          replacement = id;
        }
        break;
      }
    }
    mapped.emplace(id, replacement);
  }
  return mapped.at(root);
}

}  // namespace

NodeId simplify(ExprGraph& graph, NodeId root) {
  std::size_t cap = graph.node_count() + 1;
  NodeId current = root;
  for (std::size_t i = 0; i < cap; ++i) {
    NodeId next = simplify_pass(graph, current);
    if (next == current) break;
    current = next;
  }
  return current;
}

NodeId constant_fold_pass(ExprGraph& graph, NodeId root) {
  std::vector<NodeId> order = graph.topo_order(root);
  std::unordered_map<NodeId, NodeId> mapped;
  mapped.reserve(order.size());
  for (NodeId id : order) {
    const ExprNode n = graph.node(id);
    switch (n.op) {
      case Op::kConst:
      case Op::kVar:
        mapped.emplace(id, id);
        break;
      case Op::kPiecewise:
        mapped.emplace(id, graph.piecewise(mapped.at(n.guard.lhs), n.guard.rel,
                                           mapped.at(n.guard.rhs), mapped.at(n.child[0]),
                                           mapped.at(n.child[1])));
        break;
      default:
        if (is_unary(n.op)) {
          mapped.emplace(id, graph.unary(n.op, mapped.at(n.child[0])));
        } else {
          mapped.emplace(id, graph.binary(n.op, mapped.at(n.child[0]), mapped.at(n.child[1])));
        }
        break;
    }
  }
  return mapped.at(root);
}

// ---------------------------------------------------------------------------
// lowering
// ---------------------------------------------------------------------------

namespace {

KOp kop_for(Op op) {
  switch (op) {
    case Op::kAdd: return KOp::kAdd;
    case Op::kSub: return KOp::kSub;
    case Op::kMul: return KOp::kMul;
    case Op::kDiv: return KOp::kDiv;
    case Op::kPow: return KOp::kPow;
    case Op::kNeg: return KOp::kNeg;
    case Op::kExp: return KOp::kExp;
    case Op::kLog: return KOp::kLog;
    case Op::kSqrt: return KOp::kSqrt;
    case Op::kTanh: return KOp::kTanh;
    case Op::kSigmoid: return KOp::kSigmoid;
    case Op::kAbs: return KOp::kAbs;
    case Op::kMin: return KOp::kMin;
    case Op::kMax: return KOp::kMax;
    default: throw ConstructionError("op has no direct kernel form");
  }
}

// Execution contexts form a tree: the root context runs unconditionally and
// each child context adds one piecewise branch condition. A node's context
// is the lowest common ancestor over all of its uses, so anything shared by
// both branches of a guard (or used outside it) hoists to the parent
// context.
struct CtxInfo {
  int parent = -1;
  NodeId pw = kNoNode;
  bool branch0 = true;
  int depth = 0;
};

class Lowerer {
 public:
  Lowerer(ExprGraph& g, const CompileOptions& opts) : g_(g), opts_(opts) {
    ctxs_.push_back(CtxInfo{});  // index 0: unconditional
  }

  KernelProgram lower(std::span<const std::pair<std::string, NodeId>> roots) {
    std::vector<NodeId> root_ids;
    root_ids.reserve(roots.size());
    for (const auto& [label, id] : roots) root_ids.push_back(id);

    assign_input_layout(root_ids);

    if (opts_.cse) {
      lower_cse(root_ids);
      for (const auto& [label, id] : roots) {
        out_.output_layout.push_back(label);
        out_.output_slots.push_back(slot_of_.at(id));
      }
    } else {
      for (const auto& [label, id] : roots) {
        std::uint32_t slot = emit_tree(id, 0, 0);
        out_.output_layout.push_back(label);
        out_.output_slots.push_back(slot);
      }
    }
    return std::move(out_);
  }

 private:
  // --- shared helpers -------------------------------------------------------

  void assign_input_layout(std::span<const NodeId> root_ids) {
    std::vector<bool> used(g_.vars().size(), false);
    for (NodeId id : g_.topo_order(root_ids)) {
      const ExprNode& n = g_.node(id);
      if (n.op == Op::kVar) used[n.var] = true;
    }
    for (std::uint32_t i = 0; i < used.size(); ++i) {
      if (used[i]) {
        input_index_[i] = static_cast<std::uint32_t>(out_.input_layout.size());
        out_.input_layout.push_back(g_.var_spec(i).name);
      }
    }
  }

  std::uint32_t fresh_slot() { return out_.slot_count++; }

  std::uint32_t push(KernelInstr instr) {
    out_.instructions.push_back(instr);
    return instr.dest;
  }

  int intern_ctx(int parent, NodeId pw, bool branch0) {
    auto key = std::make_tuple(parent, pw, branch0);
    auto it = ctx_intern_.find(key);
    if (it != ctx_intern_.end()) return it->second;
    CtxInfo info;
    info.parent = parent;
    info.pw = pw;
    info.branch0 = branch0;
    info.depth = ctxs_[parent].depth + 1;
    int id = static_cast<int>(ctxs_.size());
    ctxs_.push_back(info);
    ctx_intern_.emplace(key, id);
    return id;
  }

  int join_ctx(int a, int b) {
    while (ctxs_[a].depth > ctxs_[b].depth) a = ctxs_[a].parent;
    while (ctxs_[b].depth > ctxs_[a].depth) b = ctxs_[b].parent;
    while (a != b) {
      a = ctxs_[a].parent;
      b = ctxs_[b].parent;
    }
    return a;
  }

  std::uint32_t const_slot(double v) {
    std::uint64_t bits = 0;  // key on bits so 0.0 and -0.0 stay distinct
    std::memcpy(&bits, &v, sizeof(bits));
    auto it = const_slots_.find(bits);
    if (it != const_slots_.end()) return it->second;
    KernelInstr instr;
    instr.op = KOp::kConst;
    instr.dest = fresh_slot();
    instr.imm = v;
    push(instr);
    const_slots_.emplace(bits, instr.dest);
    return instr.dest;
  }

  // 0/1 indicator slot for a context chain. The product with the parent
  // indicator masks garbage when an enclosing guard is inactive.
  std::uint32_t indicator(int ctx) {
    auto it = indicator_slot_.find(ctx);
    if (it != indicator_slot_.end()) return it->second;
    const CtxInfo& info = ctxs_[ctx];
    const Guard& guard = g_.node(info.pw).guard;
    KernelInstr lit;
    lit.op = KOp::kSelect;
    lit.has_guard = true;
    set_condition(lit, guard, info.branch0);
    lit.a = const_slot(1.0);
    lit.b = const_slot(0.0);
    lit.dest = fresh_slot();
    push(lit);
    std::uint32_t slot = lit.dest;
    if (info.parent != 0) {
      KernelInstr prod;
      prod.op = KOp::kMul;
      prod.a = indicator(info.parent);
      prod.b = slot;
      prod.dest = fresh_slot();
      push(prod);
      slot = prod.dest;
    }
    indicator_slot_.emplace(ctx, slot);
    return slot;
  }

  // Branch condition in slot terms. The complement of l<r is r<=l, so both
  // polarities stay inside the {<, <=} relation set.
  void set_condition(KernelInstr& instr, const Guard& guard, bool branch0) {
    std::uint32_t l = value_slot(guard.lhs);
    std::uint32_t r = value_slot(guard.rhs);
    if (branch0) {
      instr.glhs = l;
      instr.grhs = r;
      instr.grel = guard.rel;
    } else {
      instr.glhs = r;
      instr.grhs = l;
      instr.grel = guard.rel == Relation::kLess ? Relation::kLessEqual : Relation::kLess;
    }
  }

  void predicate(KernelInstr& instr, int ctx) {
    if (ctx == 0) return;
    const CtxInfo& info = ctxs_[ctx];
    instr.has_guard = true;
    if (info.parent == 0) {
      // Single level: reference the guard operand slots directly.
      set_condition(instr, g_.node(info.pw).guard, info.branch0);
    } else {
      instr.glhs = const_slot(0.0);
      instr.grhs = indicator(ctx);
      instr.grel = Relation::kLess;
    }
  }

  std::uint32_t value_slot(NodeId id) const { return slot_of_.at(id); }

  // --- CSE path -------------------------------------------------------------

  void lower_cse(std::span<const NodeId> root_ids) {
    std::vector<NodeId> order = g_.topo_order(root_ids);

    // Pass 1: execution context per node, walking parents before children.
    std::unordered_map<NodeId, int> ctx_of;
    ctx_of.reserve(order.size());
    for (NodeId id : root_ids) ctx_of[id] = 0;
    auto merge_into = [&](NodeId dep, int ctx) {
      auto [it, inserted] = ctx_of.try_emplace(dep, ctx);
      if (!inserted) it->second = join_ctx(it->second, ctx);
    };
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeId id = *it;
      int ctx = ctx_of.at(id);
      const ExprNode& n = g_.node(id);
      if (n.op == Op::kPiecewise) {
        merge_into(n.guard.lhs, ctx);
        merge_into(n.guard.rhs, ctx);
        merge_into(n.child[0], intern_ctx(ctx, id, true));
        merge_into(n.child[1], intern_ctx(ctx, id, false));
      } else {
        for (int i = 0; i < arity(n.op); ++i) merge_into(n.child[i], ctx);
      }
    }

    // Pass 2: one instruction per distinct node, in dependency order.
    for (NodeId id : order) {
      const ExprNode& n = g_.node(id);
      int ctx = ctx_of.at(id);
      KernelInstr instr;
      switch (n.op) {
        case Op::kConst:
          slot_of_[id] = const_slot(n.value);
          continue;
        case Op::kVar:
          instr.op = KOp::kInput;
          instr.a = input_index_.at(n.var);
          break;
        case Op::kPiecewise:
          instr.op = KOp::kSelect;
          instr.has_guard = true;
          set_condition(instr, n.guard, true);
          instr.a = value_slot(n.child[0]);
          instr.b = value_slot(n.child[1]);
          break;
        case Op::kPow: {
          const ExprNode& e = g_.node(n.child[1]);
          long long iexp;
          if (e.op == Op::kConst && detail::const_int_exponent(e.value, iexp)) {
            instr.op = KOp::kPowInt;
            instr.a = value_slot(n.child[0]);
            instr.imm = e.value;
          } else {
            instr.op = KOp::kPow;
            instr.a = value_slot(n.child[0]);
            instr.b = value_slot(n.child[1]);
          }
          predicate(instr, ctx);
          break;
        }
        default:
          instr.op = kop_for(n.op);
          instr.a = value_slot(n.child[0]);
          if (is_binary(n.op)) instr.b = value_slot(n.child[1]);
          predicate(instr, ctx);
          break;
      }
      instr.dest = fresh_slot();
      push(instr);
      slot_of_[id] = instr.dest;
    }
  }

  // --- naive path (no cse): shared subterms re-expand per use ---------------

  std::uint32_t emit_tree(NodeId id, int ctx, int depth) {
    if (depth > 2000) {
      throw ConstructionError("expression too deep to lower without cse");
    }
    const ExprNode& n = g_.node(id);
    KernelInstr instr;
    switch (n.op) {
      case Op::kConst:
        instr.op = KOp::kConst;
        instr.imm = n.value;
        break;
      case Op::kVar:
        instr.op = KOp::kInput;
        instr.a = input_index_.at(n.var);
        break;
      case Op::kPiecewise: {
        std::uint32_t gl = emit_tree(n.guard.lhs, ctx, depth + 1);
        std::uint32_t gr = emit_tree(n.guard.rhs, ctx, depth + 1);
        int ctx0 = intern_ctx(ctx, id, true);
        int ctx1 = intern_ctx(ctx, id, false);
        tree_guard_slots_[id] = {gl, gr};
        std::uint32_t a = emit_tree(n.child[0], ctx0, depth + 1);
        std::uint32_t b = emit_tree(n.child[1], ctx1, depth + 1);
        instr.op = KOp::kSelect;
        instr.has_guard = true;
        instr.glhs = gl;
        instr.grhs = gr;
        instr.grel = n.guard.rel;
        instr.a = a;
        instr.b = b;
        break;
      }
      case Op::kPow: {
        const ExprNode& e = g_.node(n.child[1]);
        long long iexp;
        if (e.op == Op::kConst && detail::const_int_exponent(e.value, iexp)) {
          instr.op = KOp::kPowInt;
          instr.a = emit_tree(n.child[0], ctx, depth + 1);
          instr.imm = e.value;
        } else {
          instr.op = KOp::kPow;
          instr.a = emit_tree(n.child[0], ctx, depth + 1);
          instr.b = emit_tree(n.child[1], ctx, depth + 1);
        }
        predicate_tree(instr, ctx);
        break;
      }
      default:
        instr.op = kop_for(n.op);
        instr.a = emit_tree(n.child[0], ctx, depth + 1);
        if (is_binary(n.op)) instr.b = emit_tree(n.child[1], ctx, depth + 1);
        predicate_tree(instr, ctx);
        break;
    }
    instr.dest = fresh_slot();
    push(instr);
    return instr.dest;
  }

  // Same predication scheme as the CSE path, but guard operand slots come
  // from the expansion recorded when the enclosing piecewise was entered.
  void predicate_tree(KernelInstr& instr, int ctx) {
    if (ctx == 0) return;
    const CtxInfo& info = ctxs_[ctx];
    instr.has_guard = true;
    if (info.parent == 0) {
      auto [gl, gr] = tree_guard_slots_.at(info.pw);
      const Guard& guard = g_.node(info.pw).guard;
      if (info.branch0) {
        instr.glhs = gl;
        instr.grhs = gr;
        instr.grel = guard.rel;
      } else {
        instr.glhs = gr;
        instr.grhs = gl;
        instr.grel = guard.rel == Relation::kLess ? Relation::kLessEqual : Relation::kLess;
      }
    } else {
      instr.glhs = const_slot(0.0);
      instr.grhs = tree_indicator(ctx);
      instr.grel = Relation::kLess;
    }
  }

  std::uint32_t tree_indicator(int ctx) {
    auto it = indicator_slot_.find(ctx);
    if (it != indicator_slot_.end()) return it->second;
    const CtxInfo& info = ctxs_[ctx];
    auto [gl, gr] = tree_guard_slots_.at(info.pw);
    const Guard& guard = g_.node(info.pw).guard;
    KernelInstr lit;
    lit.op = KOp::kSelect;
    lit.has_guard = true;
    if (info.branch0) {
      lit.glhs = gl;
      lit.grhs = gr;
      lit.grel = guard.rel;
    } else {
      lit.glhs = gr;
      lit.grhs = gl;
      lit.grel = guard.rel == Relation::kLess ? Relation::kLessEqual : Relation::kLess;
    }
    lit.a = const_slot(1.0);
    lit.b = const_slot(0.0);
    lit.dest = fresh_slot();
    push(lit);
    std::uint32_t slot = lit.dest;
    if (info.parent != 0) {
      KernelInstr prod;
      prod.op = KOp::kMul;
      prod.a = tree_indicator(info.parent);
      prod.b = slot;
      prod.dest = fresh_slot();
      push(prod);
      slot = prod.dest;
    }
    indicator_slot_.emplace(ctx, slot);
    return slot;
  }

  ExprGraph& g_;
  const CompileOptions& opts_;
  KernelProgram out_;
  std::unordered_map<NodeId, std::uint32_t> slot_of_;
  std::unordered_map<std::uint32_t, std::uint32_t> input_index_;
  std::unordered_map<std::uint64_t, std::uint32_t> const_slots_;
  std::vector<CtxInfo> ctxs_;
  std::map<std::tuple<int, NodeId, bool>, int> ctx_intern_;
  std::unordered_map<int, std::uint32_t> indicator_slot_;
  std::unordered_map<NodeId, std::pair<std::uint32_t, std::uint32_t>> tree_guard_slots_;
};

}  // namespace

KernelProgram lower(ExprGraph& graph, std::span<const std::pair<std::string, NodeId>> roots,
                    const CompileOptions& opts) {
  std::vector<std::pair<std::string, NodeId>> work(roots.begin(), roots.end());
  for (auto& [label, id] : work) {
    if (opts.algebraic_simplify) {
      id = simplify(graph, id);
    } else if (opts.constant_fold) {
      id = constant_fold_pass(graph, id);
    }
  }
  Lowerer lowerer(graph, opts);
  return lowerer.lower(work);
}

// ---------------------------------------------------------------------------
// execution
// ---------------------------------------------------------------------------

std::vector<double> KernelProgram::execute(std::span<const double> batch,
                                           std::size_t rows) const {
  const std::size_t in_width = input_layout.size();
  const std::size_t out_width = output_layout.size();
  if (batch.size() != rows * in_width) {
    throw ConstructionError("batch size does not match input layout");
  }
  std::vector<double> out(rows * out_width, 0.0);
  std::vector<double> slots(slot_count, 0.0);
  for (std::size_t row = 0; row < rows; ++row) {
    std::fill(slots.begin(), slots.end(), 0.0);
    const double* in = batch.data() + row * in_width;
    for (std::size_t i = 0; i < instructions.size(); ++i) {
      const KernelInstr& instr = instructions[i];
      if (instr.op == KOp::kSelect) {
        bool taken = detail::guard_true(slots[instr.glhs], instr.grel, slots[instr.grhs]);
        slots[instr.dest] = taken ? slots[instr.a] : slots[instr.b];
        continue;
      }
      if (instr.has_guard &&
          !detail::guard_true(slots[instr.glhs], instr.grel, slots[instr.grhs])) {
        continue;
      }
      try {
        switch (instr.op) {
          case KOp::kConst: slots[instr.dest] = instr.imm; break;
          case KOp::kInput: slots[instr.dest] = in[instr.a]; break;
          case KOp::kAdd: slots[instr.dest] = slots[instr.a] + slots[instr.b]; break;
          case KOp::kSub: slots[instr.dest] = slots[instr.a] - slots[instr.b]; break;
          case KOp::kMul: slots[instr.dest] = slots[instr.a] * slots[instr.b]; break;
          case KOp::kDiv:
            slots[instr.dest] = detail::apply_binary(Op::kDiv, slots[instr.a], slots[instr.b], kNoNode);
            break;
          case KOp::kPow:
            slots[instr.dest] = detail::apply_binary(Op::kPow, slots[instr.a], slots[instr.b], kNoNode);
            break;
          case KOp::kPowInt: {
            long long n = static_cast<long long>(instr.imm);
            if (slots[instr.a] == 0.0 && n < 0) throw EvalError("division by zero", kNoNode);
            slots[instr.dest] = detail::pow_int(slots[instr.a], n);
            break;
          }
          case KOp::kNeg: slots[instr.dest] = -slots[instr.a]; break;
          case KOp::kExp: slots[instr.dest] = std::exp(slots[instr.a]); break;
          case KOp::kLog:
            slots[instr.dest] = detail::apply_unary(Op::kLog, slots[instr.a], kNoNode);
            break;
          case KOp::kSqrt:
            slots[instr.dest] = detail::apply_unary(Op::kSqrt, slots[instr.a], kNoNode);
            break;
          case KOp::kTanh: slots[instr.dest] = std::tanh(slots[instr.a]); break;
          case KOp::kSigmoid: slots[instr.dest] = detail::sigmoid(slots[instr.a]); break;
          case KOp::kAbs: slots[instr.dest] = std::fabs(slots[instr.a]); break;
          case KOp::kMin:
            slots[instr.dest] = slots[instr.a] < slots[instr.b] ? slots[instr.a] : slots[instr.b];
            break;
          case KOp::kMax:
            slots[instr.dest] = slots[instr.a] > slots[instr.b] ? slots[instr.a] : slots[instr.b];
            break;
          case KOp::kSelect: break;  // handled above
        }
      } catch (const EvalError& e) {
        throw ExecError(e.what(), row, i);
      }
    }
    for (std::size_t k = 0; k < out_width; ++k) {
      out[row * out_width + k] = slots[output_slots[k]];
    }
  }
  return out;
}

std::vector<double> KernelProgram::run(const Assignment& assignment) const {
  std::vector<double> row;
  row.reserve(input_layout.size());
  for (const std::string& name : input_layout) {
    auto it = assignment.find(name);
    if (it == assignment.end()) throw UnboundVariableError(name);
    row.push_back(it->second);
  }
  return execute(row, 1);
}

// ---------------------------------------------------------------------------
// partial evaluation
// ---------------------------------------------------------------------------

PartialEval partial_evaluate(const ExprGraph& graph, std::span<const NodeId> roots,
                             const Assignment& bound) {
  for (const auto& [name, value] : bound) {
    if (!graph.find_var(name)) {
      throw ConstructionError("cannot bind unknown variable \"" + name + "\"");
    }
    (void)value;
  }
  PartialEval out;
  // Remaining variables keep their declaration order.
  for (const VarSpec& spec : graph.vars()) {
    if (!bound.count(spec.name)) out.graph.add_var(spec);
  }
  std::unordered_map<NodeId, NodeId> mapped;
  std::vector<NodeId> order = graph.topo_order(roots);
  for (NodeId id : order) {
    const ExprNode& n = graph.node(id);
    switch (n.op) {
      case Op::kConst:
        mapped.emplace(id, out.graph.constant(n.value));
        break;
      case Op::kVar: {
        const std::string& name = graph.var_spec(n.var).name;
        auto it = bound.find(name);
        if (it != bound.end()) {
          mapped.emplace(id, out.graph.constant(it->second));
        } else {
          mapped.emplace(id, out.graph.var_node(name));
        }
        break;
      }
      case Op::kPiecewise:
        mapped.emplace(id, out.graph.piecewise(mapped.at(n.guard.lhs), n.guard.rel,
                                               mapped.at(n.guard.rhs), mapped.at(n.child[0]),
                                               mapped.at(n.child[1])));
        break;
      default:
        if (is_unary(n.op)) {
          mapped.emplace(id, out.graph.unary(n.op, mapped.at(n.child[0])));
        } else {
          mapped.emplace(id, out.graph.binary(n.op, mapped.at(n.child[0]), mapped.at(n.child[1])));
        }
        break;
    }
  }
  for (NodeId root : roots) out.roots.push_back(mapped.at(root));
  return out;
}

// ---------------------------------------------------------------------------
// serialization ("HADK", version 1, little-endian)
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'A', 'D', 'K'};
constexpr std::uint8_t kVersion = 1;

void w8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void w32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void w64(std::ostream& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void wstr(std::ostream& out, const std::string& s) {
  w32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint8_t r8(std::istream& in) {
  int c = in.get();
  if (c == EOF) throw ConstructionError("truncated kernel artifact");
  return static_cast<std::uint8_t>(c);
}

std::uint32_t r32(std::istream& in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(r8(in)) << (8 * i);
  return v;
}

double r64(std::istream& in) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(r8(in)) << (8 * i);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string rstr(std::istream& in) {
  std::uint32_t n = r32(in);
  if (n > (1u << 20)) throw ConstructionError("corrupt kernel artifact: string too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (static_cast<std::uint32_t>(in.gcount()) != n) {
    throw ConstructionError("truncated kernel artifact");
  }
  return s;
}

}  // namespace

void save_kernel(const KernelProgram& kernel, std::ostream& out) {
  out.write(kMagic, 4);
  w8(out, kVersion);
  w32(out, static_cast<std::uint32_t>(kernel.input_layout.size()));
  for (const std::string& name : kernel.input_layout) wstr(out, name);
  w32(out, static_cast<std::uint32_t>(kernel.output_layout.size()));
  for (std::size_t i = 0; i < kernel.output_layout.size(); ++i) {
    wstr(out, kernel.output_layout[i]);
    w32(out, kernel.output_slots[i]);
  }
  w32(out, kernel.slot_count);
  w32(out, static_cast<std::uint32_t>(kernel.instructions.size()));
  for (const KernelInstr& instr : kernel.instructions) {
    w8(out, static_cast<std::uint8_t>(instr.op));
    w8(out, instr.has_guard ? 1 : 0);
    w32(out, instr.dest);
    if (instr.op == KOp::kConst || instr.op == KOp::kPowInt || instr.op == KOp::kInput) {
      w32(out, instr.a);
      w64(out, instr.imm);
    } else {
      w32(out, instr.a);
      w32(out, instr.b);
    }
    if (instr.has_guard) {
      w32(out, instr.glhs);
      w8(out, static_cast<std::uint8_t>(instr.grel));
      w32(out, instr.grhs);
    }
  }
}

KernelProgram load_kernel(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw ConstructionError("not a kernel artifact (bad magic)");
  }
  std::uint8_t version = r8(in);
  if (version != kVersion) {
    throw ConstructionError("unsupported kernel artifact version " + std::to_string(version));
  }
  KernelProgram k;
  std::uint32_t n_inputs = r32(in);
  for (std::uint32_t i = 0; i < n_inputs; ++i) k.input_layout.push_back(rstr(in));
  std::uint32_t n_outputs = r32(in);
  for (std::uint32_t i = 0; i < n_outputs; ++i) {
    k.output_layout.push_back(rstr(in));
    k.output_slots.push_back(r32(in));
  }
  k.slot_count = r32(in);
  std::uint32_t n_instrs = r32(in);
  for (std::uint32_t i = 0; i < n_instrs; ++i) {
    KernelInstr instr;
    std::uint8_t op = r8(in);
    if (op > static_cast<std::uint8_t>(KOp::kSelect)) {
      throw ConstructionError("corrupt kernel artifact: bad opcode");
    }
    instr.op = static_cast<KOp>(op);
    instr.has_guard = r8(in) != 0;
    instr.dest = r32(in);
    if (instr.op == KOp::kConst || instr.op == KOp::kPowInt || instr.op == KOp::kInput) {
      instr.a = r32(in);
      instr.imm = r64(in);
    } else {
      instr.a = r32(in);
      instr.b = r32(in);
    }
    if (instr.has_guard) {
      instr.glhs = r32(in);
      std::uint8_t rel = r8(in);
      if (rel > 1) throw ConstructionError("corrupt kernel artifact: bad relation");
      instr.grel = static_cast<Relation>(rel);
      instr.grhs = r32(in);
    }
    auto slot_ok = [&](std::uint32_t s) { return s < k.slot_count; };
    bool ok = slot_ok(instr.dest);
    switch (instr.op) {
      case KOp::kConst: break;
      case KOp::kInput: ok = ok && instr.a < k.input_layout.size(); break;
      case KOp::kPowInt:
      case KOp::kNeg:
      case KOp::kExp:
      case KOp::kLog:
      case KOp::kSqrt:
      case KOp::kTanh:
      case KOp::kSigmoid:
      case KOp::kAbs:
        ok = ok && slot_ok(instr.a);
        break;
      default:
        ok = ok && slot_ok(instr.a) && slot_ok(instr.b);
        break;
    }
    if (instr.has_guard) ok = ok && slot_ok(instr.glhs) && slot_ok(instr.grhs);
    if (!ok) throw ConstructionError("corrupt kernel artifact: slot out of range");
    k.instructions.push_back(instr);
  }
  for (std::uint32_t slot : k.output_slots) {
    if (slot >= k.slot_count) {
      throw ConstructionError("corrupt kernel artifact: output slot out of range");
    }
  }
  return k;
}

void save_kernel_file(const KernelProgram& kernel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConstructionError("cannot open \"" + path + "\" for writing");
  save_kernel(kernel, out);
  if (!out) throw ConstructionError("failed writing \"" + path + "\"");
}

KernelProgram load_kernel_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConstructionError("cannot open \"" + path + "\"");
  return load_kernel(in);
}

}  // namespace had
