#pragma once

#include <array>
#include <bitset>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace nonlocal {

/// Variables an expression may reference.  Matrix entries are packed
/// symmetric: q12 is the mixed entry u_{y1 y2}.  s doubles as the running
/// time tau in cost expressions.
enum class Var : int {
  t, s, y1, y2, u, p1, p2, q11, q12, q22, l, m1, m2, n11, n12, n22, a1, a2
};
inline constexpr int kVarCount = 18;

using VarSet = std::bitset<kVarCount>;
using VarValues = std::array<double, kVarCount>;

[[nodiscard]] const char* var_name(Var v) noexcept;
[[nodiscard]] VarSet var_set(std::initializer_list<Var> vars);
[[nodiscard]] VarSet all_vars() noexcept;

/// Immutable arithmetic expression over Var with +, -, *, /, ^ and sin,
/// cos, exp, log, tanh.  Copies share the tree.  Evaluation runs a
/// compiled postfix program.
class ExprFn {
 public:
  struct Node;
  struct Program;

  ExprFn();  ///< the constant 0

  /// Parses `text`.  Single-index aliases y, p, q, m, n, a name the first
  /// component; `pi` is a constant.  Throws ConfigError with the column of
  /// the offending token, or when a variable outside `allowed` appears.
  [[nodiscard]] static ExprFn parse(std::string_view text, VarSet allowed = all_vars());
  [[nodiscard]] static ExprFn constant(double c);
  [[nodiscard]] static ExprFn variable(Var v);

  [[nodiscard]] double operator()(const VarValues& values) const;

  /// Exact symbolic derivative, lightly simplified.
  [[nodiscard]] ExprFn derivative(Var v) const;
  [[nodiscard]] ExprFn substitute(Var v, const ExprFn& replacement) const;

  [[nodiscard]] VarSet free_vars() const;
  [[nodiscard]] bool is_constant() const noexcept;
  /// Value of a constant expression.
  [[nodiscard]] double constant_value() const;
  /// Parseable text; constants print with 17 significant digits.
  [[nodiscard]] std::string str() const;

  friend ExprFn operator+(const ExprFn& a, const ExprFn& b);
  friend ExprFn operator-(const ExprFn& a, const ExprFn& b);
  friend ExprFn operator*(const ExprFn& a, const ExprFn& b);
  friend ExprFn operator/(const ExprFn& a, const ExprFn& b);
  friend ExprFn operator-(const ExprFn& a);
  friend ExprFn pow(const ExprFn& a, const ExprFn& b);

 private:
  explicit ExprFn(std::shared_ptr<const Node> root);

  std::shared_ptr<const Node> root_;
  std::shared_ptr<const Program> program_;
};

}  // namespace nonlocal
