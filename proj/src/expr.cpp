#include "holo/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace holo::expr {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

// ---------------------------------------------------------------------------
// Bindings

Bindings::Bindings(std::initializer_list<std::pair<std::string, double>> init) {
  entries_.reserve(init.size());
  for (const auto& [name, value] : init) set(name, value);
}

void Bindings::set(std::string name, double value) {
  for (auto& [key, val] : entries_) {
    if (key == name) {
      val = value;
      return;
    }
  }
  entries_.emplace_back(std::move(name), value);
}

const double* Bindings::find(std::string_view name) const {
  for (const auto& [key, val] : entries_) {
    if (key == name) return &val;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Construction

Expression Expression::literal(double value) {
  return Expression(std::make_shared<Node>(Node{Literal{value}}));
}

Expression Expression::variable(std::string name) {
  return Expression(std::make_shared<Node>(Node{Variable{std::move(name)}}));
}

Expression Expression::unary(UnaryFn fn, Expression arg) {
  return Expression(std::make_shared<Node>(Node{Unary{fn, std::move(arg.root_)}}));
}

Expression Expression::binary(BinaryOp op, Expression lhs, Expression rhs) {
  return Expression(
      std::make_shared<Node>(Node{Binary{op, std::move(lhs.root_), std::move(rhs.root_)}}));
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double eval_node(const Node& node, const Bindings& b);

double apply_unary(UnaryFn fn, double x) {
  switch (fn) {
    case UnaryFn::Neg:
      return -x;
    case UnaryFn::Sin:
      return std::sin(x);
    case UnaryFn::Cos:
      return std::cos(x);
    case UnaryFn::Tan:
      return std::tan(x);
    case UnaryFn::Exp:
      return std::exp(x);
    case UnaryFn::Log:
      if (x <= 0.0) throw DomainError("log of non-positive argument");
      return std::log(x);
    case UnaryFn::Sqrt:
      if (x < 0.0) throw DomainError("sqrt of negative argument");
      return std::sqrt(x);
    case UnaryFn::Abs:
      return std::fabs(x);
  }
  throw Error("unreachable unary function");
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add:
      return a + b;
    case BinaryOp::Sub:
      return a - b;
    case BinaryOp::Mul:
      return a * b;
    case BinaryOp::Div:
      if (b == 0.0) throw DomainError("division by zero");
      return a / b;
    case BinaryOp::Pow: {
      double r = std::pow(a, b);
      if (std::isnan(r) || std::isinf(r)) throw DomainError("pow outside real domain");
      return r;
    }
  }
  throw Error("unreachable binary operator");
}

double eval_node(const Node& node, const Bindings& b) {
  if (const auto* lit = std::get_if<Literal>(&node.v)) return lit->value;
  if (const auto* var = std::get_if<Variable>(&node.v)) {
    const double* value = b.find(var->name);
    if (!value) throw UnboundVariableError(var->name);
    return *value;
  }
  if (const auto* un = std::get_if<Unary>(&node.v))
    return apply_unary(un->fn, eval_node(*un->arg, b));
  const auto& bin = std::get<Binary>(node.v);
  return apply_binary(bin.op, eval_node(*bin.lhs, b), eval_node(*bin.rhs, b));
}

}  // namespace

double Expression::evaluate(const Bindings& bindings) const {
  if (!root_) throw Error("evaluating empty expression");
  return eval_node(*root_, bindings);
}

std::set<std::string> Expression::free_variables() const {
  std::set<std::string> out;
  if (!root_) return out;
  std::vector<const Node*> stack{root_.get()};
  while (!stack.empty()) {
    const Node* node = stack.back();
    stack.pop_back();
    if (const auto* var = std::get_if<Variable>(&node->v)) {
      out.insert(var->name);
    } else if (const auto* un = std::get_if<Unary>(&node->v)) {
      stack.push_back(un->arg.get());
    } else if (const auto* bin = std::get_if<Binary>(&node->v)) {
      stack.push_back(bin->lhs.get());
      stack.push_back(bin->rhs.get());
    }
  }
  return out;
}

namespace {

NodePtr substitute_node(const NodePtr& node, const Bindings& constants) {
  if (const auto* var = std::get_if<Variable>(&node->v)) {
    if (const double* value = constants.find(var->name))
      return std::make_shared<Node>(Node{Literal{*value}});
    return node;
  }
  if (const auto* un = std::get_if<Unary>(&node->v)) {
    NodePtr arg = substitute_node(un->arg, constants);
    if (arg == un->arg) return node;
    return std::make_shared<Node>(Node{Unary{un->fn, std::move(arg)}});
  }
  if (const auto* bin = std::get_if<Binary>(&node->v)) {
    NodePtr lhs = substitute_node(bin->lhs, constants);
    NodePtr rhs = substitute_node(bin->rhs, constants);
    if (lhs == bin->lhs && rhs == bin->rhs) return node;
    return std::make_shared<Node>(Node{Binary{bin->op, std::move(lhs), std::move(rhs)}});
  }
  return node;
}

}  // namespace

Expression Expression::substitute(const Bindings& constants) const {
  if (!root_) return *this;
  return Expression(substitute_node(root_, constants));
}

// ---------------------------------------------------------------------------
// Printing

namespace {

// Precedence levels used for parenthesization: Add/Sub 1, Mul/Div 2,
// unary minus 3, Pow 4, atoms 5. A negative literal prints like a
// negation so that e.g. (-0.3)^2 keeps its parentheses.
int node_precedence(const Node& node) {
  if (const auto* lit = std::get_if<Literal>(&node.v))
    return std::signbit(lit->value) ? 3 : 5;
  if (std::holds_alternative<Variable>(node.v)) return 5;
  if (const auto* un = std::get_if<Unary>(&node.v))
    return un->fn == UnaryFn::Neg ? 3 : 5;
  switch (std::get<Binary>(node.v).op) {
    case BinaryOp::Add:
    case BinaryOp::Sub:
      return 1;
    case BinaryOp::Mul:
    case BinaryOp::Div:
      return 2;
    case BinaryOp::Pow:
      return 4;
  }
  return 5;
}

const char* function_name(UnaryFn fn) {
  switch (fn) {
    case UnaryFn::Neg:
      return "-";
    case UnaryFn::Sin:
      return "sin";
    case UnaryFn::Cos:
      return "cos";
    case UnaryFn::Tan:
      return "tan";
    case UnaryFn::Exp:
      return "exp";
    case UnaryFn::Log:
      return "log";
    case UnaryFn::Sqrt:
      return "sqrt";
    case UnaryFn::Abs:
      return "abs";
  }
  return "?";
}

std::string format_literal(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

// min_prec: the smallest precedence this position accepts without parens.
void print_node(const Node& node, int min_prec, std::string& out) {
  const int prec = node_precedence(node);
  const bool parens = prec < min_prec;
  if (parens) out += '(';
  if (const auto* lit = std::get_if<Literal>(&node.v)) {
    out += format_literal(lit->value);
  } else if (const auto* var = std::get_if<Variable>(&node.v)) {
    out += var->name;
  } else if (const auto* un = std::get_if<Unary>(&node.v)) {
    if (un->fn == UnaryFn::Neg) {
      out += '-';
      print_node(*un->arg, 3, out);
    } else {
      out += function_name(un->fn);
      out += '(';
      print_node(*un->arg, 0, out);
      out += ')';
    }
  } else {
    const auto& bin = std::get<Binary>(node.v);
    switch (bin.op) {
      case BinaryOp::Add:
        print_node(*bin.lhs, 1, out);
        out += '+';
        print_node(*bin.rhs, 2, out);
        break;
      case BinaryOp::Sub:
        print_node(*bin.lhs, 1, out);
        out += '-';
        print_node(*bin.rhs, 2, out);
        break;
      case BinaryOp::Mul:
        print_node(*bin.lhs, 2, out);
        out += '*';
        print_node(*bin.rhs, 3, out);
        break;
      case BinaryOp::Div:
        print_node(*bin.lhs, 2, out);
        out += '/';
        print_node(*bin.rhs, 3, out);
        break;
      case BinaryOp::Pow:
        // Right-associative; the base must be an atom, the exponent may
        // carry a unary minus.
        print_node(*bin.lhs, 5, out);
        out += '^';
        print_node(*bin.rhs, 3, out);
        break;
    }
  }
  if (parens) out += ')';
}

}  // namespace

std::string Expression::to_string() const {
  if (!root_) return "";
  std::string out;
  print_node(*root_, 0, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing (recursive descent)

namespace {

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expression run() {
    Expression e = parse_expr();
    skip_space();
    if (pos_ != src_.size()) throw SyntaxError("unexpected trailing input", pos_);
    return e;
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_space();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  Expression parse_expr() {
    Expression lhs = parse_term();
    for (;;) {
      if (eat('+')) {
        lhs = Expression::binary(BinaryOp::Add, std::move(lhs), parse_term());
      } else if (eat('-')) {
        lhs = Expression::binary(BinaryOp::Sub, std::move(lhs), parse_term());
      } else {
        return lhs;
      }
    }
  }

  Expression parse_term() {
    Expression lhs = parse_factor();
    for (;;) {
      if (eat('*')) {
        lhs = Expression::binary(BinaryOp::Mul, std::move(lhs), parse_factor());
      } else if (eat('/')) {
        lhs = Expression::binary(BinaryOp::Div, std::move(lhs), parse_factor());
      } else {
        return lhs;
      }
    }
  }

  Expression parse_factor() {
    if (eat('-')) return Expression::unary(UnaryFn::Neg, parse_factor());
    return parse_power();
  }

  Expression parse_power() {
    Expression base = parse_primary();
    if (eat('^')) return Expression::binary(BinaryOp::Pow, std::move(base), parse_factor());
    return base;
  }

  Expression parse_primary() {
    skip_space();
    if (pos_ >= src_.size()) throw SyntaxError("unexpected end of input", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expression inner = parse_expr();
      if (!eat(')')) throw SyntaxError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    throw SyntaxError(std::string("unexpected character '") + c + "'", pos_);
  }

  Expression parse_number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
                                  src_[pos_] == '.'))
      ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t exp = pos_ + 1;
      if (exp < src_.size() && (src_[exp] == '+' || src_[exp] == '-')) ++exp;
      if (exp < src_.size() && std::isdigit(static_cast<unsigned char>(src_[exp]))) {
        pos_ = exp;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    const std::string text(src_.substr(start, pos_ - start));
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size())
      throw SyntaxError("malformed number '" + text + "'", start);
    return Expression::literal(value);
  }

  Expression parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                  src_[pos_] == '_'))
      ++pos_;
    const std::string name(src_.substr(start, pos_ - start));
    if (peek() == '(') {
      eat('(');
      Expression arg = parse_expr();
      if (!eat(')')) throw SyntaxError("expected ')'", pos_);
      if (name == "sin") return Expression::unary(UnaryFn::Sin, std::move(arg));
      if (name == "cos") return Expression::unary(UnaryFn::Cos, std::move(arg));
      if (name == "tan") return Expression::unary(UnaryFn::Tan, std::move(arg));
      if (name == "exp") return Expression::unary(UnaryFn::Exp, std::move(arg));
      if (name == "log") return Expression::unary(UnaryFn::Log, std::move(arg));
      if (name == "sqrt") return Expression::unary(UnaryFn::Sqrt, std::move(arg));
      if (name == "abs") return Expression::unary(UnaryFn::Abs, std::move(arg));
      throw UnknownFunctionError(name, start);
    }
    if (name == "pi") return Expression::literal(kPi);
    return Expression::variable(name);
  }
};

}  // namespace

Expression parse(std::string_view source) { return Parser(source).run(); }

double numeric_partial(const Expression& e, const std::string& var, const Bindings& at,
                       double h) {
  const double* x = at.find(var);
  if (!x) throw UnboundVariableError(var);
  if (h <= 0.0) h = 1e-6 * std::max(1.0, std::fabs(*x));
  Bindings shifted = at;
  shifted.set(var, *x + h);
  const double fp = e.evaluate(shifted);
  shifted.set(var, *x - h);
  const double fm = e.evaluate(shifted);
  return (fp - fm) / (2.0 * h);
}

}  // namespace holo::expr
