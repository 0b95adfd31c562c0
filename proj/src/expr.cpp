#include "nonlocal/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <utility>

#include "nonlocal/errors.hpp"

namespace nonlocal {

namespace {

enum class Op : unsigned char { num, var, neg, add, sub, mul, div, pow, sin, cos, exp, log, tanh };

constexpr const char* kVarNames[kVarCount] = {"t",   "s",   "y1",  "y2", "u",  "p1",
                                              "p2",  "q11", "q12", "q22", "l", "m1",
                                              "m2",  "n11", "n12", "n22", "a1", "a2"};

bool is_function(Op op) { return op >= Op::sin; }

const char* function_name(Op op) {
  switch (op) {
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::tanh: return "tanh";
    default: return "";
  }
}

double apply_function(Op op, double x) {
  switch (op) {
    case Op::sin: return std::sin(x);
    case Op::cos: return std::cos(x);
    case Op::exp: return std::exp(x);
    case Op::log: return std::log(x);
    case Op::tanh: return std::tanh(x);
    default: return x;
  }
}

}  // namespace

struct ExprFn::Node {
  Op op = Op::num;
  double value = 0.0;
  Var var = Var::t;
  std::shared_ptr<const Node> a, b;
};

struct ExprFn::Program {
  struct Instr {
    Op op;
    int var;
    double value;
  };
  std::vector<Instr> code;
  std::size_t depth = 1;
};

namespace {

using NodePtr = std::shared_ptr<const ExprFn::Node>;

NodePtr leaf_num(double c) {
  auto n = std::make_shared<ExprFn::Node>();
  n->op = Op::num;
  n->value = c;
  return n;
}

NodePtr leaf_var(Var v) {
  auto n = std::make_shared<ExprFn::Node>();
  n->op = Op::var;
  n->var = v;
  return n;
}

bool is_num(const NodePtr& n, double c) { return n->op == Op::num && n->value == c; }

// Constructors fold constants and drop neutral elements; nothing else.
NodePtr make(Op op, NodePtr a, NodePtr b = nullptr) {
  const bool ca = a->op == Op::num;
  const bool cb = b && b->op == Op::num;
  switch (op) {
    case Op::neg:
      if (ca) return leaf_num(-a->value);
      if (a->op == Op::neg) return a->a;
      break;
    case Op::add:
      if (ca && cb) return leaf_num(a->value + b->value);
      if (is_num(a, 0.0)) return b;
      if (is_num(b, 0.0)) return a;
      break;
    case Op::sub:
      if (ca && cb) return leaf_num(a->value - b->value);
      if (is_num(b, 0.0)) return a;
      if (is_num(a, 0.0)) return make(Op::neg, b);
      if (a->op == Op::var && b->op == Op::var && a->var == b->var) return leaf_num(0.0);
      break;
    case Op::mul:
      if (ca && cb) return leaf_num(a->value * b->value);
      if (is_num(a, 0.0) || is_num(b, 0.0)) return leaf_num(0.0);
      if (is_num(a, 1.0)) return b;
      if (is_num(b, 1.0)) return a;
      if (is_num(a, -1.0)) return make(Op::neg, b);
      if (is_num(b, -1.0)) return make(Op::neg, a);
      break;
    case Op::div:
      if (ca && cb && b->value != 0.0) return leaf_num(a->value / b->value);
      if (is_num(a, 0.0)) return leaf_num(0.0);
      if (is_num(b, 1.0)) return a;
      break;
    case Op::pow:
      if (ca && cb) return leaf_num(std::pow(a->value, b->value));
      if (is_num(b, 0.0)) return leaf_num(1.0);
      if (is_num(b, 1.0)) return a;
      break;
    default:
      if (ca) return leaf_num(apply_function(op, a->value));
      break;
  }
  auto n = std::make_shared<ExprFn::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

std::size_t emit(const NodePtr& n, std::vector<ExprFn::Program::Instr>& code) {
  if (n->op == Op::num) {
    code.push_back({Op::num, 0, n->value});
    return 1;
  }
  if (n->op == Op::var) {
    code.push_back({Op::var, static_cast<int>(n->var), 0.0});
    return 1;
  }
  const std::size_t da = emit(n->a, code);
  std::size_t depth = da;
  if (n->b) depth = std::max(da, emit(n->b, code) + 1);
  code.push_back({n->op, 0, 0.0});
  return depth;
}

// Precedence for printing: 1 additive, 2 multiplicative, 3 unary minus,
// 4 power, 5 atoms and calls.
int precedence(const NodePtr& n) {
  switch (n->op) {
    case Op::add:
    case Op::sub: return 1;
    case Op::mul:
    case Op::div: return 2;
    case Op::neg: return 3;
    case Op::pow: return 4;
    case Op::num: return n->value < 0.0 ? 3 : 5;
    default: return 5;
  }
}

void print(const NodePtr& n, std::string& out);

void print_wrapped(const NodePtr& n, bool parens, std::string& out) {
  if (parens) out += '(';
  print(n, out);
  if (parens) out += ')';
}

void print(const NodePtr& n, std::string& out) {
  switch (n->op) {
    case Op::num: {
      // Shortest text that reads back to the same double.
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, std::abs(n->value));
      if (n->value < 0.0) out += '-';
      out.append(buf, res.ptr);
      return;
    }
    case Op::var: out += kVarNames[static_cast<int>(n->var)]; return;
    case Op::neg:
      out += '-';
      print_wrapped(n->a, precedence(n->a) < 4, out);
      return;
    default: break;
  }
  if (is_function(n->op)) {
    out += function_name(n->op);
    print_wrapped(n->a, true, out);
    return;
  }
  const int p = precedence(n);
  static constexpr const char* kSymbol[] = {" + ", " - ", "*", "/", "^"};
  const char* sym = kSymbol[static_cast<int>(n->op) - static_cast<int>(Op::add)];
  if (n->op == Op::pow) {
    print_wrapped(n->a, precedence(n->a) <= 4, out);
    out += sym;
    print_wrapped(n->b, precedence(n->b) < 4, out);
    return;
  }
  // Left-associative: the right operand needs parentheses at equal level.
  print_wrapped(n->a, precedence(n->a) < p, out);
  out += sym;
  print_wrapped(n->b, precedence(n->b) <= p || precedence(n->b) == 3, out);
}

NodePtr derive(const NodePtr& n, Var v);

NodePtr substitute_node(const NodePtr& n, Var v, const NodePtr& r) {
  if (n->op == Op::var) return n->var == v ? r : n;
  if (n->op == Op::num) return n;
  NodePtr a = substitute_node(n->a, v, r);
  NodePtr b = n->b ? substitute_node(n->b, v, r) : nullptr;
  if (a == n->a && b == n->b) return n;
  return make(n->op, std::move(a), std::move(b));
}

NodePtr derive(const NodePtr& n, Var v) {
  const NodePtr zero = leaf_num(0.0);
  switch (n->op) {
    case Op::num: return zero;
    case Op::var: return leaf_num(n->var == v ? 1.0 : 0.0);
    case Op::neg: return make(Op::neg, derive(n->a, v));
    case Op::add: return make(Op::add, derive(n->a, v), derive(n->b, v));
    case Op::sub: return make(Op::sub, derive(n->a, v), derive(n->b, v));
    case Op::mul:
      return make(Op::add, make(Op::mul, derive(n->a, v), n->b),
                  make(Op::mul, n->a, derive(n->b, v)));
    case Op::div: {
      // (a'b - ab') / b^2
      NodePtr num = make(Op::sub, make(Op::mul, derive(n->a, v), n->b),
                         make(Op::mul, n->a, derive(n->b, v)));
      return make(Op::div, num, make(Op::pow, n->b, leaf_num(2.0)));
    }
    case Op::pow: {
      const NodePtr da = derive(n->a, v);
      if (n->b->op == Op::num) {
        const double k = n->b->value;
        return make(Op::mul, make(Op::mul, leaf_num(k), make(Op::pow, n->a, leaf_num(k - 1.0))), da);
      }
      // a^b (b' log a + b a' / a)
      NodePtr inner = make(Op::add, make(Op::mul, derive(n->b, v), make(Op::log, n->a)),
                           make(Op::div, make(Op::mul, n->b, da), n->a));
      return make(Op::mul, n, inner);
    }
    case Op::sin: return make(Op::mul, make(Op::cos, n->a), derive(n->a, v));
    case Op::cos: return make(Op::neg, make(Op::mul, make(Op::sin, n->a), derive(n->a, v)));
    case Op::exp: return make(Op::mul, n, derive(n->a, v));
    case Op::log: return make(Op::div, derive(n->a, v), n->a);
    case Op::tanh:
      return make(Op::mul,
                  make(Op::sub, leaf_num(1.0), make(Op::pow, n, leaf_num(2.0))),
                  derive(n->a, v));
  }
  return zero;
}

void collect_vars(const NodePtr& n, VarSet& out) {
  if (n->op == Op::var) out.set(static_cast<std::size_t>(n->var));
  if (n->a) collect_vars(n->a, out);
  if (n->b) collect_vars(n->b, out);
}

class Parser {
 public:
  Parser(std::string_view text, VarSet allowed) : text_(text), allowed_(allowed) {}

  NodePtr run() {
    NodePtr n = expression();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression \"" + std::string(text_) + "\": " + what + " at column " +
                      std::to_string(pos_ + 1));
  }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expression() {
    NodePtr n = term();
    for (;;) {
      if (accept('+')) n = make(Op::add, n, term());
      else if (accept('-')) n = make(Op::sub, n, term());
      else return n;
    }
  }

  NodePtr term() {
    NodePtr n = unary();
    for (;;) {
      if (accept('*')) n = make(Op::mul, n, unary());
      else if (accept('/')) n = make(Op::div, n, unary());
      else return n;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Op::pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = expression();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    if ((c >= '0' && c <= '9') || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    double value = 0.0;
    const char* first = text_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(first, text_.data() + text_.size(), value);
    if (ec != std::errc()) fail("malformed number");
    pos_ += static_cast<std::size_t>(ptr - first);
    return leaf_num(value);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string name(text_.substr(start, pos_ - start));
    static constexpr std::pair<const char*, Op> kFunctions[] = {
        {"sin", Op::sin}, {"cos", Op::cos}, {"exp", Op::exp}, {"log", Op::log}, {"tanh", Op::tanh}};
    for (const auto& [fname, op] : kFunctions) {
      if (name == fname) {
        if (!accept('(')) fail("expected '(' after " + name);
        NodePtr arg = expression();
        if (!accept(')')) fail("expected ')'");
        return make(op, arg);
      }
    }
    if (name == "pi") return leaf_num(std::numbers::pi);
    static constexpr std::pair<const char*, Var> kAliases[] = {
        {"y", Var::y1}, {"p", Var::p1},    {"q", Var::q11}, {"q21", Var::q12}, {"m", Var::m1},
        {"n", Var::n11}, {"n21", Var::n12}, {"a", Var::a1}};
    for (const auto& [alias, v] : kAliases) {
      if (name == alias) return checked(v, start);
    }
    for (int k = 0; k < kVarCount; ++k) {
      if (name == kVarNames[k]) return checked(static_cast<Var>(k), start);
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  NodePtr checked(Var v, std::size_t start) {
    if (!allowed_.test(static_cast<std::size_t>(v))) {
      pos_ = start;
      fail(std::string("variable '") + kVarNames[static_cast<int>(v)] + "' is not allowed here");
    }
    return leaf_var(v);
  }

  std::string_view text_;
  VarSet allowed_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* var_name(Var v) noexcept { return kVarNames[static_cast<int>(v)]; }

VarSet var_set(std::initializer_list<Var> vars) {
  VarSet out;
  for (Var v : vars) out.set(static_cast<std::size_t>(v));
  return out;
}

VarSet all_vars() noexcept { return VarSet().set(); }

ExprFn::ExprFn() : ExprFn(leaf_num(0.0)) {}

ExprFn::ExprFn(std::shared_ptr<const Node> root) : root_(std::move(root)) {
  auto program = std::make_shared<Program>();
  program->depth = emit(root_, program->code);
  program_ = std::move(program);
}

ExprFn ExprFn::parse(std::string_view text, VarSet allowed) {
  return ExprFn(Parser(text, allowed).run());
}

ExprFn ExprFn::constant(double c) { return ExprFn(leaf_num(c)); }
ExprFn ExprFn::variable(Var v) { return ExprFn(leaf_var(v)); }

double ExprFn::operator()(const VarValues& values) const {
  thread_local std::vector<double> stack;
  if (stack.size() < program_->depth) stack.resize(program_->depth);
  double* top = stack.data() - 1;
  for (const Program::Instr& in : program_->code) {
    switch (in.op) {
      case Op::num: *++top = in.value; break;
      case Op::var: *++top = values[static_cast<std::size_t>(in.var)]; break;
      case Op::neg: *top = -*top; break;
      case Op::add: top[-1] += *top; --top; break;
      case Op::sub: top[-1] -= *top; --top; break;
      case Op::mul: top[-1] *= *top; --top; break;
      case Op::div: top[-1] /= *top; --top; break;
      case Op::pow: top[-1] = std::pow(top[-1], *top); --top; break;
      default: *top = apply_function(in.op, *top); break;
    }
  }
  return *top;
}

ExprFn ExprFn::derivative(Var v) const { return ExprFn(derive(root_, v)); }

ExprFn ExprFn::substitute(Var v, const ExprFn& replacement) const {
  return ExprFn(substitute_node(root_, v, replacement.root_));
}

VarSet ExprFn::free_vars() const {
  VarSet out;
  collect_vars(root_, out);
  return out;
}

bool ExprFn::is_constant() const noexcept { return root_->op == Op::num; }

double ExprFn::constant_value() const {
  if (!is_constant()) throw ArgumentError("expression " + str() + " is not constant");
  return root_->value;
}

std::string ExprFn::str() const {
  std::string out;
  print(root_, out);
  return out;
}

ExprFn operator+(const ExprFn& a, const ExprFn& b) { return ExprFn(make(Op::add, a.root_, b.root_)); }
ExprFn operator-(const ExprFn& a, const ExprFn& b) { return ExprFn(make(Op::sub, a.root_, b.root_)); }
ExprFn operator*(const ExprFn& a, const ExprFn& b) { return ExprFn(make(Op::mul, a.root_, b.root_)); }
ExprFn operator/(const ExprFn& a, const ExprFn& b) { return ExprFn(make(Op::div, a.root_, b.root_)); }
ExprFn operator-(const ExprFn& a) { return ExprFn(make(Op::neg, a.root_)); }
ExprFn pow(const ExprFn& a, const ExprFn& b) { return ExprFn(make(Op::pow, a.root_, b.root_)); }

}  // namespace nonlocal
