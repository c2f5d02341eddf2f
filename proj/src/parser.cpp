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

#include "had/parser.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>

namespace had {
namespace {

constexpr int kMaxDepth = 256;

enum class Tok : std::uint8_t {
  kEnd,
  kNumber,
  kIdent,
  kPlus,
  kMinus,
  kStar,
  kSlash,
  kCaret,
  kLParen,
  kRParen,
  kComma,
  kLess,
  kLessEq,
};

struct Token {
  Tok kind = Tok::kEnd;
  double number = 0.0;
  std::string ident;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++col_;
        ++pos_;
      } else {
        break;
      }
    }
    current_ = Token{};
    current_.line = line_;
    current_.col = col_;
    if (pos_ >= text_.size()) {
      current_.kind = Tok::kEnd;
      return;
    }
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      lex_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
        ++col_;
      }
      current_.kind = Tok::kIdent;
      current_.ident = std::string(text_.substr(start, pos_ - start));
      return;
    }
    switch (c) {
      case '+': current_.kind = Tok::kPlus; break;
      case '-': current_.kind = Tok::kMinus; break;
      case '*': current_.kind = Tok::kStar; break;
      case '/': current_.kind = Tok::kSlash; break;
      case '^': current_.kind = Tok::kCaret; break;
      case '(': current_.kind = Tok::kLParen; break;
      case ')': current_.kind = Tok::kRParen; break;
      case ',': current_.kind = Tok::kComma; break;
      case '<':
        if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '=') {
          current_.kind = Tok::kLessEq;
          ++pos_;
          ++col_;
        } else {
          current_.kind = Tok::kLess;
        }
        break;
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
    }
    ++pos_;
    ++col_;
  }

  // NUMBER := digits ("." digits)? (("e"|"E") ("+"|"-")? digits)?
  void lex_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      if (digits() == 0) {
        throw ParseError("expected digits after decimal point", line_,
                         col_ + static_cast<int>(pos_ - start));
      }
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        throw ParseError("expected digits in exponent", line_,
                         col_ + static_cast<int>(pos_ - start));
      }
    }
    std::string_view lexeme = text_.substr(start, pos_ - start);
    double value = 0.0;
    auto [p, ec] = std::from_chars(lexeme.data(), lexeme.data() + lexeme.size(), value);
    if (ec != std::errc() || p != lexeme.data() + lexeme.size() || !std::isfinite(value)) {
      throw ParseError("invalid numeric literal \"" + std::string(lexeme) + "\"", line_, col_);
    }
    current_.kind = Tok::kNumber;
    current_.number = value;
    col_ += static_cast<int>(pos_ - start);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token current_;
};

class Parser {
 public:
  Parser(ExprGraph& graph, std::string_view text) : graph_(graph), lex_(text) {}

  NodeId parse_all() {
    NodeId root = parse_expr();
    const Token& t = lex_.peek();
    if (t.kind != Tok::kEnd) {
      throw ParseError("unexpected trailing input", t.line, t.col);
    }
    return root;
  }

 private:
  struct DepthScope {
    explicit DepthScope(Parser& p) : parser(p) {
      if (++parser.depth_ > kMaxDepth) {
        const Token& t = parser.lex_.peek();
        throw ParseError("expression too deeply nested", t.line, t.col);
      }
    }
    ~DepthScope() { --parser.depth_; }
    Parser& parser;
  };

  NodeId parse_expr() {
    DepthScope scope(*this);
    NodeId left = parse_term();
    while (true) {
      Tok k = lex_.peek().kind;
      if (k == Tok::kPlus || k == Tok::kMinus) {
        lex_.take();
        NodeId right = parse_term();
        left = graph_.binary(k == Tok::kPlus ? Op::kAdd : Op::kSub, left, right);
      } else {
        return left;
      }
    }
  }

  NodeId parse_term() {
    DepthScope scope(*this);
    NodeId left = parse_factor();
    while (true) {
      Tok k = lex_.peek().kind;
      if (k == Tok::kStar || k == Tok::kSlash) {
        Token t = lex_.take();
        NodeId right = parse_factor();
        try {
          left = graph_.binary(k == Tok::kStar ? Op::kMul : Op::kDiv, left, right);
        } catch (const ConstructionError& e) {
          throw ParseError(e.what(), t.line, t.col);
        }
      } else {
        return left;
      }
    }
  }

  NodeId parse_factor() {
    DepthScope scope(*this);
    NodeId base = parse_unary();
    if (lex_.peek().kind == Tok::kCaret) {
      Token t = lex_.take();
      NodeId exponent = parse_factor();  // right-associative
      try {
        return graph_.binary(Op::kPow, base, exponent);
      } catch (const ConstructionError& e) {
        throw ParseError(e.what(), t.line, t.col);
      }
    }
    return base;
  }

  NodeId parse_unary() {
    DepthScope scope(*this);
    if (lex_.peek().kind == Tok::kMinus) {
      lex_.take();
      return graph_.unary(Op::kNeg, parse_unary());
    }
    return parse_atom();
  }

  NodeId parse_atom() {
    DepthScope scope(*this);
    Token t = lex_.take();
    switch (t.kind) {
      case Tok::kNumber:
        return graph_.constant(t.number);
      case Tok::kLParen: {
        NodeId inner = parse_expr();
        expect(Tok::kRParen, ")");
        return inner;
      }
      case Tok::kIdent:
        if (lex_.peek().kind == Tok::kLParen) {
          return parse_call(t);
        }
        return var_ref(t.ident);
      default:
        throw ParseError("expected expression", t.line, t.col);
    }
  }

  NodeId parse_call(const Token& name) {
    lex_.take();  // "("
    if (name.ident == "piecewise") {
      NodeId lhs = parse_expr();
      Relation rel;
      Token cmp = lex_.take();
      if (cmp.kind == Tok::kLess) {
        rel = Relation::kLess;
      } else if (cmp.kind == Tok::kLessEq) {
        rel = Relation::kLessEqual;
      } else {
        throw ParseError("piecewise condition needs '<' or '<='", cmp.line, cmp.col);
      }
      NodeId rhs = parse_expr();
      expect(Tok::kComma, ",");
      NodeId a = parse_expr();
      expect(Tok::kComma, ",");
      NodeId b = parse_expr();
      expect(Tok::kRParen, ")");
      return graph_.piecewise(lhs, rel, rhs, a, b);
    }

    std::vector<NodeId> args;
    args.push_back(parse_expr());
    while (lex_.peek().kind == Tok::kComma) {
      lex_.take();
      args.push_back(parse_expr());
    }
    expect(Tok::kRParen, ")");

    auto need = [&](std::size_t n) {
      if (args.size() != n) {
        throw ParseError(name.ident + " expects " + std::to_string(n) + " argument" +
                             (n == 1 ? "" : "s") + ", got " + std::to_string(args.size()),
                         name.line, name.col);
      }
    };
    try {
      if (name.ident == "exp") { need(1); return graph_.unary(Op::kExp, args[0]); }
      if (name.ident == "log") { need(1); return graph_.unary(Op::kLog, args[0]); }
      if (name.ident == "sqrt") { need(1); return graph_.unary(Op::kSqrt, args[0]); }
      if (name.ident == "tanh") { need(1); return graph_.unary(Op::kTanh, args[0]); }
      if (name.ident == "sigmoid") { need(1); return graph_.unary(Op::kSigmoid, args[0]); }
      if (name.ident == "abs") { need(1); return graph_.unary(Op::kAbs, args[0]); }
      if (name.ident == "min") { need(2); return graph_.binary(Op::kMin, args[0], args[1]); }
      if (name.ident == "max") { need(2); return graph_.binary(Op::kMax, args[0], args[1]); }
      if (name.ident == "relu") {
        need(1);
        return graph_.piecewise(args[0], Relation::kLess, graph_.constant(0.0),
                                graph_.constant(0.0), args[0]);
      }
    } catch (const ConstructionError& e) {
      throw ParseError(e.what(), name.line, name.col);
    }
    throw ParseError("unknown function \"" + name.ident + "\"", name.line, name.col);
  }

  NodeId var_ref(const std::string& name) {
    if (graph_.find_var(name)) return graph_.var_node(name);
    return graph_.add_var(VarSpec{name, VarRole::kFeature, std::nullopt});
  }

  void expect(Tok kind, const char* what) {
    Token t = lex_.take();
    if (t.kind != kind) {
      throw ParseError(std::string("expected '") + what + "'", t.line, t.col);
    }
  }

  ExprGraph& graph_;
  Lexer lex_;
  int depth_ = 0;
};

}  // namespace

NodeId parse_into(ExprGraph& graph, std::string_view text) {
  Parser p(graph, text);
  return p.parse_all();
}

ParsedExpr parse(const SourceExpr& src) {
  ParsedExpr out;
  for (const VarSpec& spec : src.declared_vars) {
    out.graph.add_var(spec);
  }
  out.root = parse_into(out.graph, src.text);
  return out;
}

ParsedExpr parse(std::string_view text) { return parse(SourceExpr{std::string(text), {}}); }

std::vector<VarSpec> parse_declarations(std::string_view text) {
  std::vector<VarSpec> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                           : eol - pos);
    ++line_no;
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;

    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);

    // `name` or `name in [lo, hi]`
    std::size_t name_end = 0;
    while (name_end < line.size() &&
           (std::isalnum(static_cast<unsigned char>(line[name_end])) || line[name_end] == '_')) {
      ++name_end;
    }
    if (name_end == 0) {
      throw ParseError("expected variable name", line_no, static_cast<int>(b) + 1);
    }
    VarSpec spec;
    spec.name = std::string(line.substr(0, name_end));
    std::string_view rest = line.substr(name_end);
    std::size_t r = rest.find_first_not_of(" \t");
    if (r == std::string_view::npos) {
      out.push_back(std::move(spec));
      continue;
    }
    rest = rest.substr(r);
    if (rest.substr(0, 2) != "in") {
      throw ParseError("expected `in [lo, hi]` after variable name", line_no, 1);
    }
    rest = rest.substr(2);
    auto parse_num = [&](std::string_view& s) {
      std::size_t k = s.find_first_not_of(" \t");
      if (k == std::string_view::npos) throw ParseError("expected number", line_no, 1);
      s = s.substr(k);
      const char* begin = s.data();
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) throw ParseError("expected number", line_no, 1);
      s = s.substr(static_cast<std::size_t>(end - begin));
      return v;
    };
    auto expect_ch = [&](std::string_view& s, char c) {
      std::size_t k = s.find_first_not_of(" \t");
      if (k == std::string_view::npos || s[k] != c) {
        throw ParseError(std::string("expected '") + c + "'", line_no, 1);
      }
      s = s.substr(k + 1);
    };
    expect_ch(rest, '[');
    double lo = parse_num(rest);
    expect_ch(rest, ',');
    double hi = parse_num(rest);
    expect_ch(rest, ']');
    std::size_t tail = rest.find_first_not_of(" \t");
    if (tail != std::string_view::npos) {
      throw ParseError("unexpected trailing input after bounds", line_no, 1);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw ParseError("bounds must be finite with lo <= hi", line_no, 1);
    }
    spec.bounds = Interval{lo, hi};
    out.push_back(std::move(spec));
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

namespace {

// Printing precedence; higher binds tighter. Atoms (constants, variables,
// function calls) never need parentheses.
int print_prec(const ExprGraph& g, NodeId id) {
  switch (g.node(id).op) {
    case Op::kAdd:
    case Op::kSub:
      return 1;
    case Op::kMul:
    case Op::kDiv:
      return 2;
    case Op::kNeg:
      return 3;
    case Op::kPow:
      return 4;
    default:
      return 5;
  }
}

// Negative constants print with a leading '-', which re-parses as a unary
// minus; give them unary precedence so parent operators parenthesize the
// same way they would for an explicit negation.
int effective_prec(const ExprGraph& g, NodeId id) {
  const ExprNode& n = g.node(id);
  if (n.op == Op::kConst && std::signbit(n.value)) return 3;
  return print_prec(g, id);
}

void print_node(const ExprGraph& g, NodeId id, std::string& out);

void print_child(const ExprGraph& g, NodeId id, bool parens, std::string& out) {
  if (parens) out.push_back('(');
  print_node(g, id, out);
  if (parens) out.push_back(')');
}

void print_node(const ExprGraph& g, NodeId id, std::string& out) {
  const ExprNode& n = g.node(id);
  switch (n.op) {
    case Op::kConst:
      out += format_double(n.value);
      return;
    case Op::kVar:
      out += g.var_spec(n.var).name;
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      int prec = print_prec(g, id);
      const char* sym = n.op == Op::kAdd ? "+" : n.op == Op::kSub ? "-"
                        : n.op == Op::kMul ? "*" : "/";
      // Left-associative: the right child needs parentheses at equal
      // precedence so the exact tree (and FP rounding) survives a re-parse.
      print_child(g, n.child[0], effective_prec(g, n.child[0]) < prec, out);
      out += sym;
      print_child(g, n.child[1], effective_prec(g, n.child[1]) <= prec, out);
      return;
    }
    case Op::kPow: {
      // Right-associative; '^' binds looser than unary minus on its left
      // per the grammar, so any non-atom base gets parentheses.
      print_child(g, n.child[0], effective_prec(g, n.child[0]) < 5, out);
      out.push_back('^');
      print_child(g, n.child[1], effective_prec(g, n.child[1]) < 3, out);
      return;
    }
    case Op::kNeg:
      out.push_back('-');
      // Unary minus binds tighter than '^': -(x^2) and -(x*y) keep parens.
      print_child(g, n.child[0],
                  effective_prec(g, n.child[0]) < 3 || print_prec(g, n.child[0]) == 4, out);
      return;
    case Op::kExp:
    case Op::kLog:
    case Op::kSqrt:
    case Op::kTanh:
    case Op::kSigmoid:
    case Op::kAbs:
      out += op_name(n.op);
      out.push_back('(');
      print_node(g, n.child[0], out);
      out.push_back(')');
      return;
    case Op::kMin:
    case Op::kMax:
      out += op_name(n.op);
      out.push_back('(');
      print_node(g, n.child[0], out);
      out.push_back(',');
      print_node(g, n.child[1], out);
      out.push_back(')');
      return;
    case Op::kPiecewise:
      out += "piecewise(";
      print_node(g, n.guard.lhs, out);
      out += n.guard.rel == Relation::kLess ? "<" : "<=";
      print_node(g, n.guard.rhs, out);
      out.push_back(',');
      print_node(g, n.child[0], out);
      out.push_back(',');
      print_node(g, n.child[1], out);
      out.push_back(')');
      return;
  }
}

}  // namespace

std::string print_expr(const ExprGraph& graph, NodeId root) {
  std::string out;
  print_node(graph, root, out);
  return out;
}

}  // namespace had
