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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "had/interval.hpp"

namespace had {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

enum class Op : std::uint8_t {
  kConst,
  kVar,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kNeg,
  kExp,
  kLog,
  kSqrt,
  kTanh,
  kSigmoid,
  kAbs,
  kMin,
  kMax,
  kPiecewise,
};

enum class VarRole : std::uint8_t { kFeature, kWeight, kBias, kTarget, kHyper };

enum class Relation : std::uint8_t { kLess, kLessEqual };

int arity(Op op);
bool is_unary(Op op);
bool is_binary(Op op);
const char* op_name(Op op);
const char* role_name(VarRole role);

/// A named abstract input: symbolic name, role tag, optional interval bounds.
struct VarSpec {
  std::string name;
  VarRole role = VarRole::kFeature;
  std::optional<Interval> bounds;
};

/// Comparison selecting piecewise branch 0 when true, branch 1 otherwise.
/// At equality, kLessEqual is true (branch 0) and kLess is false (branch 1).
struct Guard {
  NodeId lhs = kNoNode;
  Relation rel = Relation::kLess;
  NodeId rhs = kNoNode;
};

struct ExprNode {
  Op op = Op::kConst;
  std::uint32_t var = 0;  // kVar: index into ExprGraph::vars()
  double value = 0.0;     // kConst payload
  std::array<NodeId, 2> child{kNoNode, kNoNode};
  Guard guard;  // kPiecewise only
};

using Assignment = std::map<std::string, double>;

struct ConstructionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalError : std::runtime_error {
  EvalError(std::string msg, NodeId at) : std::runtime_error(std::move(msg)), node(at) {}
  NodeId node = kNoNode;
};

struct UnboundVariableError : std::runtime_error {
  explicit UnboundVariableError(const std::string& var_name)
      : std::runtime_error("unbound variable \"" + var_name + "\""), name(var_name) {}
  std::string name;
};

/// Immutable hash-consed DAG of scalar expressions. Structurally identical
/// nodes are interned once; node ids are indices into an append-only arena.
/// Construction is single-writer; a finished graph can be read from any
/// number of threads.
class ExprGraph {
 public:
  // --- variables -----------------------------------------------------------
  NodeId add_var(VarSpec spec);
  NodeId var_node(std::string_view name) const;  // throws if unknown
  std::optional<std::uint32_t> find_var(std::string_view name) const;
  const std::vector<VarSpec>& vars() const { return vars_; }
  VarSpec& var_spec(std::uint32_t index) { return vars_.at(index); }
  const VarSpec& var_spec(std::uint32_t index) const { return vars_.at(index); }

  // --- node construction ---------------------------------------------------
  NodeId constant(double value);
  NodeId unary(Op op, NodeId a);
  NodeId binary(Op op, NodeId a, NodeId b);
  NodeId piecewise(NodeId guard_lhs, Relation rel, NodeId guard_rhs, NodeId if_true,
                   NodeId if_false);

  const ExprNode& node(NodeId id) const { return nodes_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }

  // --- labeled roots -------------------------------------------------------
  void add_root(std::string label, NodeId id);
  const std::vector<std::pair<std::string, NodeId>>& roots() const { return roots_; }

  // --- queries -------------------------------------------------------------
  /// Value of `root` under `assignment`. Piecewise evaluates its guard and
  /// exactly one branch. The assignment must bind every variable reachable
  /// from root, including those in untaken branches.
  double evaluate(NodeId root, const Assignment& assignment) const;

  /// Dependency order: every node appears once, after all nodes it reads
  /// (children and guard operands). Deterministic for a given graph.
  std::vector<NodeId> topo_order(NodeId root) const;
  std::vector<NodeId> topo_order(std::span<const NodeId> roots) const;

  /// Indices of variables reachable from root, ascending.
  std::vector<std::uint32_t> support(NodeId root) const;

 private:
  struct NodeKey {
    Op op;
    std::uint32_t var;
    std::uint64_t value_bits;
    std::array<NodeId, 2> child;
    NodeId guard_lhs;
    NodeId guard_rhs;
    std::uint8_t guard_rel;
    bool operator==(const NodeKey&) const = default;
  };
  struct NodeKeyHash {
    std::size_t operator()(const NodeKey& k) const;
  };

  NodeId intern(const ExprNode& proto);
  NodeId fold_or_intern(ExprNode proto);

  std::vector<ExprNode> nodes_;
  std::vector<VarSpec> vars_;
  std::vector<NodeId> var_nodes_;
  std::unordered_map<std::string, std::uint32_t> var_index_;
  std::unordered_map<NodeKey, NodeId, NodeKeyHash> interned_;
  std::vector<std::pair<std::string, NodeId>> roots_;
};

namespace detail {
/// Scalar kernels shared by evaluate(), constant folding and the kernel
/// interpreter so that all execution paths are bit-identical.
double apply_unary(Op op, double a, NodeId at);
double apply_binary(Op op, double a, double b, NodeId at);
double pow_int(double base, long long n);
double sigmoid(double x);
bool const_int_exponent(double v, long long& out);
bool guard_true(double lhs, Relation rel, double rhs);
}  // namespace detail

}  // namespace had
