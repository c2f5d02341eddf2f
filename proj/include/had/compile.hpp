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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "had/expr.hpp"

namespace had {

/// Kernel opcodes. kPowInt is a fast path for constant integer exponents;
/// kPow dispatches on the runtime exponent value exactly like evaluate(),
/// so both paths stay bit-identical.
enum class KOp : std::uint8_t {
  kConst,
  kInput,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kPowInt,
  kNeg,
  kExp,
  kLog,
  kSqrt,
  kTanh,
  kSigmoid,
  kAbs,
  kMin,
  kMax,
  kSelect,
};

/// Three-address instruction. For kSelect the guard triple is the branch
/// condition (dest = guard ? a : b). For any other opcode a present guard
/// predicates execution: when false the instruction is skipped and its
/// slot keeps the per-row initial value 0. Predication reproduces lazy
/// piecewise evaluation: work exclusive to an untaken branch never runs.
struct KernelInstr {
  KOp op = KOp::kConst;
  bool has_guard = false;
  Relation grel = Relation::kLess;
  std::uint32_t dest = 0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint32_t glhs = 0;
  std::uint32_t grhs = 0;
  double imm = 0.0;  // kConst: value; kPowInt: exponent; kInput: unused
};

struct ExecError : std::runtime_error {
  ExecError(const std::string& msg, std::size_t row_, std::size_t instruction_)
      : std::runtime_error("row " + std::to_string(row_) + ", instruction " +
                           std::to_string(instruction_) + ": " + msg),
        row(row_),
        instruction(instruction_) {}
  std::size_t row = 0;
  std::size_t instruction = 0;
};

/// Linear single-assignment program compiled from an ExprGraph. Immutable
/// after lowering; execution over a batch is row-independent.
struct KernelProgram {
  std::vector<std::string> input_layout;   // ordered var names
  std::vector<std::string> output_layout;  // ordered root labels
  std::vector<std::uint32_t> output_slots;
  std::uint32_t slot_count = 0;
  std::vector<KernelInstr> instructions;

  /// Row-major batch of rows x input_layout.size() values; returns
  /// rows x output_layout.size(), bit-identical to evaluate() per row.
  std::vector<double> execute(std::span<const double> batch, std::size_t rows) const;

  /// Single-assignment convenience wrapper over execute().
  std::vector<double> run(const Assignment& assignment) const;
};

struct CompileOptions {
  enum class Mode : std::uint8_t { kJit, kAot };
  Mode mode = Mode::kJit;
  bool constant_fold = false;
  bool algebraic_simplify = false;
  bool cse = false;
  bool dead_code = false;
  std::optional<int> batch_hint;

  /// Immediate lowering, no optimization passes.
  static CompileOptions jit() { return CompileOptions{}; }
  /// Fully optimized artifact; all passes on.
  static CompileOptions aot() {
    CompileOptions o;
    o.mode = Mode::kAot;
    o.constant_fold = o.algebraic_simplify = o.cse = o.dead_code = true;
    return o;
  }
};

/// Semantics-preserving algebraic rewriting to a fixpoint: x+0, x*1, x*0,
/// x-x, x/x (when the denominator is provably nonzero from declared
/// variable bounds), pow(x,1), log(exp x), double negation, and x*x to
/// x^2. No floating-point reassociation.
NodeId simplify(ExprGraph& graph, NodeId root);

/// Rebuild through the interning constructors so constant subtrees fold.
NodeId constant_fold_pass(ExprGraph& graph, NodeId root);

/// Lower roots to a kernel. With cse every distinct reachable node compiles
/// at most once; without it shared subterms re-expand per use. Emission is
/// demand-driven from the roots, so unreachable graph nodes never produce
/// instructions regardless of the dead_code flag.
KernelProgram lower(ExprGraph& graph, std::span<const std::pair<std::string, NodeId>> roots,
                    const CompileOptions& opts);

/// Residual graph after binding a subset of variables to constants.
struct PartialEval {
  ExprGraph graph;
  std::vector<NodeId> roots;
};
PartialEval partial_evaluate(const ExprGraph& graph, std::span<const NodeId> roots,
                             const Assignment& bound);

/// Kernel artifact: magic "HADK", version byte, little-endian throughout.
void save_kernel(const KernelProgram& kernel, std::ostream& out);
KernelProgram load_kernel(std::istream& in);
void save_kernel_file(const KernelProgram& kernel, const std::string& path);
KernelProgram load_kernel_file(const std::string& path);

}  // namespace had
