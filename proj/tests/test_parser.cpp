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

#include "had/parser.hpp"
#include "testutil.hpp"

using namespace had;

namespace {
double eval(const char* text, const Assignment& at = {}) {
  ParsedExpr p = parse(text);
  return p.graph.evaluate(p.root, at);
}
}  // namespace

TEST_CASE("precedence and associativity") {
  CHECK(eval("1+2*3") == 7.0);
  CHECK(eval("(1+2)*3") == 9.0);
  CHECK(eval("2^3^2") == 512.0);  // right-associative
  CHECK(eval("8/4/2") == 1.0);    // left-associative
  CHECK(eval("1-2-3") == -4.0);
  CHECK(eval("2^-2") == 0.25);
  CHECK(eval("-2^2") == 4.0);  // unary binds before '^' per the grammar
}

TEST_CASE("functions") {
  CHECK(eval("exp(0)") == 1.0);
  CHECK(eval("min(3, 4)") == 3.0);
  CHECK(eval("max(3, 4)") == 4.0);
  CHECK(eval("abs(-3)") == 3.0);
  CHECK(eval("relu(x)", {{"x", -1.0}}) == 0.0);
  CHECK(eval("relu(x)", {{"x", 1.0}}) == 1.0);
  CHECK(eval("piecewise(x <= 0, 5, 6)", {{"x", 0.0}}) == 5.0);
  CHECK(eval("piecewise(x < 0, 5, 6)", {{"x", 0.0}}) == 6.0);
  CHECK(eval("sigmoid(0)") == 0.5);
  CHECK(eval("tanh(0)") == 0.0);
}

TEST_CASE("numeric literals") {
  CHECK(eval("1.5e2") == 150.0);
  CHECK(eval("1e-2") == 0.01);
  CHECK(eval("685.7142857142857") == 685.7142857142857);
  CHECK_THROWS_AS(parse("1."), ParseError);
  CHECK_THROWS_AS(parse("1e"), ParseError);
}

TEST_CASE("errors carry 1-based line and column") {
  try {
    parse("a +\n* b");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.col == 1);
  }
  CHECK_THROWS_AS(parse("frobnicate(x)"), ParseError);  // unknown function
  CHECK_THROWS_AS(parse("min(x)"), ParseError);         // arity
  CHECK_THROWS_AS(parse("piecewise(x, 1, 2)"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("x $ y"), ParseError);
}

TEST_CASE("declarations attach bounds and roles") {
  SourceExpr src;
  src.text = "a*w/h^2";
  src.declared_vars = parse_declarations("a in [20, 80]\n# comment\nw in [40,150]\nh in [1.4,2.1]\n");
  ParsedExpr p = parse(src);
  REQUIRE(p.graph.vars().size() == 3);
  CHECK(p.graph.vars()[0].bounds->lo == 20.0);
  CHECK(p.graph.vars()[2].bounds->hi == 2.1);

  auto bare = parse_declarations("x\n");
  CHECK(bare.size() == 1);
  CHECK(!bare[0].bounds.has_value());

  CHECK_THROWS_AS(parse_declarations("x in [3, 1]"), ParseError);
  CHECK_THROWS_AS(parse_declarations("x in [3"), ParseError);
}

TEST_CASE("implicit variables default to unbounded features") {
  ParsedExpr p = parse("q + r");
  REQUIRE(p.graph.vars().size() == 2);
  for (const VarSpec& spec : p.graph.vars()) {
    CHECK(spec.role == VarRole::kFeature);
    CHECK(!spec.bounds.has_value());
  }
}

TEST_CASE("printing uses minimal parentheses and canonical forms") {
  ParsedExpr p = parse("a*w/h^2");
  CHECK(print_expr(p.graph, p.root) == "a*w/h^2");
  ParsedExpr q = parse("2*3");
  CHECK(print_expr(q.graph, q.root) == "6");  // folded
  ParsedExpr r = parse("(a+b)*c");
  CHECK(print_expr(r.graph, r.root) == "(a+b)*c");
  ParsedExpr s = parse("a-(b-c)");
  CHECK(print_expr(s.graph, s.root) == "a-(b-c)");
  ParsedExpr t = parse("(2^3)^2");  // folds to 64
  CHECK(print_expr(t.graph, t.root) == "64");
  ParsedExpr u = parse("(x^3)^2");
  CHECK(print_expr(u.graph, u.root) == "(x^3)^2");
}

TEST_CASE("round trip: parse(print(g)) evaluates identically") {
  std::mt19937_64 rng(42);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    auto expr = testutil::random_expr(rng, 3, 5, false);
    std::string text = print_expr(expr.graph, expr.root);
    ParsedExpr reparsed = parse(text);
    for (int k = 0; k < 10; ++k) {
      Assignment at = testutil::random_point(rng, expr.var_names);
      // Reparsed graph may not contain vars that printing dropped; bind all.
      double a, b;
      try {
        a = expr.graph.evaluate(expr.root, at);
      } catch (const std::exception&) {
        continue;
      }
      b = reparsed.graph.evaluate(reparsed.root, at);
      if (std::isnan(a)) {
        CHECK(std::isnan(b));
      } else {
        CHECK(a == b);  // exact
      }
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("fuzz: arbitrary bytes either parse or throw a located error") {
  std::mt19937_64 rng(1234);
  const char alphabet[] = "xy01.+-*/^(), <=inpiecewisesqrtlogexp\t\n#ab";
  for (int i = 0; i < 5000; ++i) {
    std::string text;
    int len = 1 + static_cast<int>(rng() % 40);
    for (int k = 0; k < len; ++k) {
      text.push_back(alphabet[rng() % (sizeof(alphabet) - 1)]);
    }
    try {
      ParsedExpr p = parse(text);
      (void)p;
    } catch (const ParseError& e) {
      CHECK(e.line >= 1);
      CHECK(e.col >= 1);
    }
  }
}

TEST_CASE("fuzz: deep nesting is rejected, not a crash") {
  std::string text(100000, '(');
  CHECK_THROWS_AS(parse(text), ParseError);
  std::string negs(100000, '-');
  CHECK_THROWS_AS(parse(negs + "x"), ParseError);
}
