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

#include <doctest.h>

#include <cstring>
#include <set>

#include "had/expr.hpp"
#include "had/parser.hpp"
#include "testutil.hpp"

using namespace had;

TEST_CASE("interning returns the same node for structurally identical terms") {
  ExprGraph g;
  NodeId x = g.add_var({"x", VarRole::kFeature, std::nullopt});
  NodeId y = g.add_var({"y", VarRole::kFeature, std::nullopt});
  NodeId a = g.binary(Op::kAdd, x, y);
  NodeId b = g.binary(Op::kAdd, x, y);
  CHECK(a == b);
  CHECK(g.binary(Op::kAdd, y, x) != a);  // order matters
}

TEST_CASE("constant folding") {
  ExprGraph g;
  NodeId six = g.binary(Op::kMul, g.constant(2.0), g.constant(3.0));
  CHECK(g.node(six).op == Op::kConst);
  CHECK(g.node(six).value == 6.0);

  CHECK_THROWS_AS(g.binary(Op::kDiv, g.constant(1.0), g.constant(0.0)), ConstructionError);
  CHECK_THROWS_AS(g.unary(Op::kLog, g.constant(-1.0)), ConstructionError);

  // Overflow keeps the node symbolic rather than storing a non-finite value.
  NodeId big = g.unary(Op::kExp, g.constant(1000.0));
  CHECK(g.node(big).op == Op::kExp);
  CHECK(g.evaluate(big, {}) == std::numeric_limits<double>::infinity());
}

TEST_CASE("variable rules") {
  ExprGraph g;
  CHECK_THROWS_AS(g.add_var({"", VarRole::kFeature, std::nullopt}), ConstructionError);
  CHECK_THROWS_AS(g.add_var({"9x", VarRole::kFeature, std::nullopt}), ConstructionError);
  g.add_var({"x", VarRole::kFeature, std::nullopt});
  CHECK_THROWS_AS(g.add_var({"x", VarRole::kWeight, std::nullopt}), ConstructionError);
  CHECK_THROWS_AS(g.add_var({"b", VarRole::kFeature, Interval{2.0, 1.0}}), ConstructionError);
}

TEST_CASE("evaluate computes the adjusted body-mass example") {
  ParsedExpr p = parse("a*w/h^2");
  double v = p.graph.evaluate(p.root, {{"a", 30.0}, {"w", 70.0}, {"h", 1.75}});
  CHECK(v == doctest::Approx(685.7142857142857).epsilon(1e-12));
}

TEST_CASE("evaluate: piecewise takes exactly one branch") {
  ParsedExpr p = parse("relu(x)");
  CHECK(p.graph.evaluate(p.root, {{"x", -2.0}}) == 0.0);
  CHECK(p.graph.evaluate(p.root, {{"x", 1.0}}) == 1.0);
  // The untaken branch may not even be evaluable.
  ParsedExpr q = parse("piecewise(x < 0, 0, log(x))");
  CHECK(q.graph.evaluate(q.root, {{"x", -1.0}}) == 0.0);
}

TEST_CASE("evaluate: unbound variable is named") {
  ParsedExpr p = parse("a*w/h^2");
  try {
    p.graph.evaluate(p.root, {{"w", 70.0}, {"h", 1.75}});
    FAIL("expected unbound variable error");
  } catch (const UnboundVariableError& e) {
    CHECK(e.name == "a");
  }
}

TEST_CASE("evaluate: domain errors carry the offending node") {
  ParsedExpr p = parse("1/x");
  try {
    p.graph.evaluate(p.root, {{"x", 0.0}});
    FAIL("expected division by zero");
  } catch (const EvalError& e) {
    CHECK(e.node != kNoNode);
    CHECK(e.node == p.root);
  }
}

TEST_CASE("piecewise tie rule at guard equality") {
  ExprGraph g;
  NodeId x = g.add_var({"x", VarRole::kFeature, std::nullopt});
  NodeId one = g.constant(1.0);
  NodeId two = g.constant(2.0);
  NodeId strict = g.piecewise(x, Relation::kLess, g.constant(0.0), one, two);
  NodeId lax = g.piecewise(x, Relation::kLessEqual, g.constant(0.0), one, two);
  CHECK(g.evaluate(strict, {{"x", 0.0}}) == 2.0);  // `<` false at equality
  CHECK(g.evaluate(lax, {{"x", 0.0}}) == 1.0);     // `<=` true at equality
}

TEST_CASE("topo order visits children first, once") {
  ExprGraph g;
  NodeId x = g.add_var({"x", VarRole::kFeature, std::nullopt});
  NodeId y = g.add_var({"y", VarRole::kFeature, std::nullopt});
  NodeId shared = g.binary(Op::kMul, x, y);
  NodeId root = g.binary(Op::kAdd, shared, shared);

  std::vector<NodeId> order = g.topo_order(root);
  CHECK(order.size() == 4);  // x, y, x*y, sum
  std::set<NodeId> seen;
  for (NodeId id : order) {
    const ExprNode& n = g.node(id);
    for (int i = 0; i < arity(n.op); ++i) CHECK(seen.count(n.child[i]) == 1);
    CHECK(seen.insert(id).second);
  }
  CHECK(order.back() == root);

  CHECK(g.topo_order(g.constant(7.0)).size() == 1);
}

namespace {

// Independent subterm counter: enumerate distinct subtrees of a parsed
// expression by printed form, the brute-force oracle for hash-consing.
void collect_subterms(const ExprGraph& g, NodeId id, std::set<std::string>& out) {
  out.insert(print_expr(g, id));
  const ExprNode& n = g.node(id);
  if (n.op == Op::kPiecewise) {
    collect_subterms(g, n.guard.lhs, out);
    collect_subterms(g, n.guard.rhs, out);
  }
  for (int i = 0; i < arity(n.op); ++i) collect_subterms(g, n.child[i], out);
}

}  // namespace

TEST_CASE("topo length equals the distinct-subterm count") {
  ParsedExpr p = parse("a*w/h^2");
  std::set<std::string> subterms;
  collect_subterms(p.graph, p.root, subterms);
  CHECK(p.graph.topo_order(p.root).size() == subterms.size());

  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    auto expr = testutil::random_expr(rng, 3, 4, false);
    std::set<std::string> st;
    collect_subterms(expr.graph, expr.root, st);
    CHECK(expr.graph.topo_order(expr.root).size() == st.size());
  }
}

TEST_CASE("node count never exceeds interned construction count") {
  // Hash-consing property: interning N syntactically distinct terms yields
  // at most N nodes; repeats add none.
  ExprGraph g;
  NodeId x = g.add_var({"x", VarRole::kFeature, std::nullopt});
  std::size_t before = g.node_count();
  for (int i = 0; i < 10; ++i) g.binary(Op::kAdd, x, g.constant(1.0));
  CHECK(g.node_count() == before + 2);  // the constant and one sum
}

TEST_CASE("evaluate is pure: repeated calls are bit-identical") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    auto expr = testutil::random_expr(rng, 3, 5, false);
    had::Assignment at = testutil::random_point(rng, expr.var_names);
    if (!testutil::evaluates_tamely(expr.graph, expr.root, at)) continue;
    double a = expr.graph.evaluate(expr.root, at);
    double b = expr.graph.evaluate(expr.root, at);
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
  }
}
