#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "holo/errors.hpp"

// Closed-form scalar expressions. System files declare connections, guards,
// resets, potentials and curves as strings in this grammar:
//
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := '-' factor | power
//   power  := primary ('^' factor)?          // right-associative
//   primary:= number | 'pi' | name | name '(' expr ')' | '(' expr ')'
//
// Functions: sin cos tan exp log sqrt abs. Angles are radians everywhere.
// Expressions are immutable after construction and safe to evaluate
// concurrently.

namespace holo::expr {

enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class UnaryFn { Neg, Sin, Cos, Tan, Exp, Log, Sqrt, Abs };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Literal {
  double value;
};
struct Variable {
  std::string name;
};
struct Unary {
  UnaryFn fn;
  NodePtr arg;
};
struct Binary {
  BinaryOp op;
  NodePtr lhs;
  NodePtr rhs;
};

struct Node {
  std::variant<Literal, Variable, Unary, Binary> v;
};

/// Variable bindings for evaluation. Semantically a map name -> value;
/// stored as a flat vector because bindings are tiny and evaluation is the
/// hot path.
class Bindings {
 public:
  Bindings() = default;
  Bindings(std::initializer_list<std::pair<std::string, double>> init);

  /// Insert or overwrite.
  void set(std::string name, double value);
  /// nullptr when absent.
  const double* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

class Expression {
 public:
  Expression() = default;

  static Expression literal(double value);
  static Expression variable(std::string name);
  static Expression unary(UnaryFn fn, Expression arg);
  static Expression binary(BinaryOp op, Expression lhs, Expression rhs);

  bool valid() const { return root_ != nullptr; }
  const Node& root() const { return *root_; }

  /// IEEE double-precision evaluation; deterministic for fixed bindings.
  /// Throws UnboundVariableError / DomainError.
  double evaluate(const Bindings& bindings) const;

  std::set<std::string> free_variables() const;

  /// Replaces every variable present in `constants` by its value.
  Expression substitute(const Bindings& constants) const;

  /// Prints so that parse(to_string()) evaluates identically.
  std::string to_string() const;

 private:
  explicit Expression(NodePtr root) : root_(std::move(root)) {}
  NodePtr root_;
};

/// Parses UTF-8 source into an AST. Throws SyntaxError (with byte offset)
/// or UnknownFunctionError.
Expression parse(std::string_view source);

inline double evaluate(const Expression& e, const Bindings& b) { return e.evaluate(b); }

/// Central difference (e(x+h) - e(x-h)) / 2h in the named variable.
/// h <= 0 selects the default step 1e-6 * max(1, |x|).
double numeric_partial(const Expression& e, const std::string& var, const Bindings& at,
                       double h = 0.0);

}  // namespace holo::expr
