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

#include <string>
#include <string_view>
#include <vector>

#include "had/expr.hpp"

namespace had {

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line_, int col_)
      : std::runtime_error(std::to_string(line_) + ":" + std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
  int line = 1;
  int col = 1;
};

/// Expression source plus optional variable declarations (bounds).
struct SourceExpr {
  std::string text;
  std::vector<VarSpec> declared_vars;
};

struct ParsedExpr {
  ExprGraph graph;
  NodeId root = kNoNode;
};

/// Grammar:
///   expr   := term (("+"|"-") term)*
///   term   := factor (("*"|"/") factor)*
///   factor := unary ("^" factor)?
///   unary  := "-" unary | atom
///   atom   := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"
/// Functions: exp, log, sqrt, tanh, sigmoid, abs, min, max, relu,
/// piecewise(cond, a, b) where cond is `expr < expr` or `expr <= expr`.
/// Undeclared identifiers become feature variables without bounds.
NodeId parse_into(ExprGraph& graph, std::string_view text);
ParsedExpr parse(const SourceExpr& src);
ParsedExpr parse(std::string_view text);

/// Declaration file: one `name in [lo, hi]` or bare `name` per line,
/// `#` starts a comment.
std::vector<VarSpec> parse_declarations(std::string_view text);

/// Canonical text for a subexpression, minimally parenthesized so that
/// re-parsing reconstructs the same tree shape (and therefore the same
/// results bit for bit).
std::string print_expr(const ExprGraph& graph, NodeId root);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace had
