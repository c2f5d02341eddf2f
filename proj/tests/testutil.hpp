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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "had/expr.hpp"
#include "had/interval.hpp"

namespace testutil {

inline double urand(std::mt19937_64& rng, double lo, double hi) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

// Random expression DAG builder. Smooth mode excludes abs/min/max/piecewise
// so finite differences apply everywhere; the full mode includes them.
struct ExprGen {
  had::ExprGraph& graph;
  std::mt19937_64& rng;
  std::vector<had::NodeId> vars;
  bool smooth = true;

  had::NodeId leaf() {
    if (urand(rng, 0, 1) < 0.3) {
      return graph.constant(urand(rng, -3.0, 3.0));
    }
    return vars[rng() % vars.size()];
  }

  had::NodeId gen(int depth) {
    if (depth <= 0) return leaf();
    int n_ops = smooth ? 11 : 15;
    switch (rng() % n_ops) {
      case 0: return graph.binary(had::Op::kAdd, gen(depth - 1), gen(depth - 1));
      case 1: return graph.binary(had::Op::kSub, gen(depth - 1), gen(depth - 1));
      case 2: return graph.binary(had::Op::kMul, gen(depth - 1), gen(depth - 1));
      case 3: return graph.binary(had::Op::kDiv, gen(depth - 1), gen(depth - 1));
      case 4: {
        // Integer exponents keep pow total away from domain edges.
        double e = static_cast<double>(2 + rng() % 3);
        return graph.binary(had::Op::kPow, gen(depth - 1), graph.constant(e));
      }
      case 5: return graph.unary(had::Op::kNeg, gen(depth - 1));
      case 6: return graph.unary(had::Op::kExp, gen(depth - 1));
      case 7: return graph.unary(had::Op::kLog, gen(depth - 1));
      case 8: return graph.unary(had::Op::kSqrt, gen(depth - 1));
      case 9: return graph.unary(had::Op::kTanh, gen(depth - 1));
      case 10: return graph.unary(had::Op::kSigmoid, gen(depth - 1));
      case 11: return graph.unary(had::Op::kAbs, gen(depth - 1));
      case 12: return graph.binary(had::Op::kMin, gen(depth - 1), gen(depth - 1));
      case 13: return graph.binary(had::Op::kMax, gen(depth - 1), gen(depth - 1));
      default: {
        had::NodeId l = gen(depth - 1);
        had::NodeId r = gen(depth - 1);
        had::Relation rel = rng() % 2 ? had::Relation::kLess : had::Relation::kLessEqual;
        return graph.piecewise(l, rel, r, gen(depth - 1), gen(depth - 1));
      }
    }
  }

  // Retries construction when constant folding rejects a subtree (1/0 etc).
  had::NodeId gen_checked(int depth, int tries = 64) {
    for (int i = 0; i < tries; ++i) {
      try {
        return gen(depth);
      } catch (const had::ConstructionError&) {
        continue;
      }
    }
    return leaf();
  }
};

struct RandomExpr {
  had::ExprGraph graph;
  had::NodeId root = had::kNoNode;
  std::vector<std::string> var_names;
};

inline RandomExpr random_expr(std::mt19937_64& rng, int n_vars, int depth, bool smooth) {
  RandomExpr out;
  std::vector<had::NodeId> vars;
  for (int i = 0; i < n_vars; ++i) {
    std::string name = "v" + std::to_string(i);
    vars.push_back(out.graph.add_var(had::VarSpec{name, had::VarRole::kFeature, std::nullopt}));
    out.var_names.push_back(name);
  }
  ExprGen gen{out.graph, rng, vars, smooth};
  out.root = gen.gen_checked(depth);
  return out;
}

inline had::Assignment random_point(std::mt19937_64& rng, const std::vector<std::string>& names,
                                    double lo = -2.0, double hi = 2.0) {
  had::Assignment a;
  for (const std::string& name : names) a[name] = urand(rng, lo, hi);
  return a;
}

// A point is usable when the expression and all finite-difference probes
// evaluate to finite, moderate values (stays clear of domain-error
// neighborhoods and float cancellation).
inline bool evaluates_tamely(const had::ExprGraph& g, had::NodeId root, const had::Assignment& at,
                             double limit = 1e6) {
  try {
    double v = g.evaluate(root, at);
    return std::isfinite(v) && std::fabs(v) <= limit;
  } catch (const std::exception&) {
    return false;
  }
}

// Central difference d f / d var with step h, or NaN when a probe fails.
inline double central_diff(const had::ExprGraph& g, had::NodeId root, const had::Assignment& at,
                           const std::string& var, double h = 1e-6) {
  had::Assignment plus = at;
  had::Assignment minus = at;
  plus[var] += h;
  minus[var] -= h;
  try {
    double f_plus = g.evaluate(root, plus);
    double f_minus = g.evaluate(root, minus);
    return (f_plus - f_minus) / (2.0 * h);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline bool close_rel(double a, double b, double rel, double abs_near_zero = 1e-8) {
  double diff = std::fabs(a - b);
  if (diff <= abs_near_zero) return true;
  return diff <= rel * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace testutil
