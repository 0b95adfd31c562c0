#include "nonlocal/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nonlocal/domain.hpp"
#include "nonlocal/errors.hpp"
#include "nonlocal/expr.hpp"

namespace nonlocal {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::pair<Mode, const char*> kModes[] = {
    {Mode::solve_linear, "solve-linear"}, {Mode::solve_nonlinear, "solve-nonlinear"},
    {Mode::solve_hjb, "solve-hjb"},       {Mode::verify_fbsde, "verify-fbsde"},
    {Mode::manufacture, "manufacture"},   {Mode::norms, "norms"}};

// Problem fragments; explicit keys in a config override them.  The control
// presets assume horizon 1.
const std::map<std::string, const char*>& presets() {
  static const std::map<std::string, const char*> table = {
      {"heat", R"js({"linear": {"a": ["1"]}, "exact": "exp(-s)*sin(y)"})js"},
      {"manufactured-linear",
       R"js({"linear": {"a": ["1"], "abar": ["0.2"]}, "exact": "exp(t - s)*(2 + sin(y))"})js"},
      {"nonlocal-linear",
       R"js({"linear": {"a": ["0.5 + 0.1*cos(y)"], "abar": ["0.1"], "b": ["0.3"],
           "bbar": ["0.1*sin(t)"], "c": "-0.2", "cbar": "0.1", "g": "cos(y) + t"}})js"},
      {"non-elliptic", R"js({"linear": {"a": ["-1"], "g": "sin(y)"}})js"},
      {"nonlinear-q",
       R"js({"nonlinear": {"F": "q + 0.1*n/(1 + n^2)"}, "exact": "exp(t - s)*(2 + sin(y))"})js"},
      {"tic-lq",
       R"js({"control": {"drift": ["a"], "volatility": ["0.5"], "running": "exp(-(s - t))*a^2",
           "terminal": "exp(-(1 - t))*(1 - cos(y))", "lower": [-4], "upper": [4]}})js"},
      {"time-consistent-lq",
       R"js({"control": {"drift": ["a"], "volatility": ["0.5"], "running": "a^2",
           "terminal": "1 - cos(y)", "lower": [-4], "upper": [4]}})js"},
  };
  return table;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string number_text(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Reads known keys of one object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
  }

  ~ObjectReader() = default;
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  const json* find(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      const auto x = v->get<long long>();
      if (x < -2147483647LL || x > 2147483647LL) fail(key, "integer out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
        fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  /// Expression slot: a string, or a number taken literally.
  void get_expr(const char* key, std::string& out) {
    if (const json* v = find(key)) out = expr_text(*v, join(path_, key));
  }
  void get_exprs(const char* key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of expressions");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i)
        out.push_back(expr_text((*v)[i], join(path_, key) + "[" + std::to_string(i) + "]"));
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of numbers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) fail(key, "expected an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + join(path_, key) + "'");
    }
  }

  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(join(path_, key) + ": " + what);
  }

  static std::string expr_text(const json& v, const std::string& where) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return number_text(v.get<double>());
    throw ConfigError(where + ": expected an expression string");
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

LinearConfig read_linear(const json& j) {
  ObjectReader r(j, "problem.linear");
  LinearConfig c;
  r.get_exprs("a", c.a);
  r.get_exprs("abar", c.abar);
  r.get_exprs("b", c.b);
  r.get_exprs("bbar", c.bbar);
  r.get_expr("c", c.c);
  r.get_expr("cbar", c.cbar);
  r.get_expr("f", c.f);
  r.get_expr("g", c.g);
  r.finish();
  return c;
}

NonlinearConfig read_nonlinear(const json& j) {
  ObjectReader r(j, "problem.nonlinear");
  NonlinearConfig c;
  r.get_expr("F", c.F);
  r.get_expr("g", c.g);
  r.finish();
  if (c.F.empty()) throw ConfigError("problem.nonlinear.F: missing");
  return c;
}

ControlConfig read_control(const json& j) {
  ObjectReader r(j, "problem.control");
  ControlConfig c;
  r.get("control_dim", c.control_dim);
  r.get("noise_dim", c.noise_dim);
  r.get_exprs("drift", c.drift);
  r.get_exprs("volatility", c.volatility);
  r.get_expr("running", c.running);
  r.get_expr("terminal", c.terminal);
  r.get("lower", c.lower);
  r.get("upper", c.upper);
  r.get("resolution", c.resolution);
  r.finish();
  return c;
}

ProblemConfig read_problem(const json& user) {
  if (!user.is_object()) throw ConfigError("problem: expected an object");
  json merged = user;
  if (const auto it = user.find("preset"); it != user.end()) {
    if (!it->is_string()) throw ConfigError("problem.preset: expected a string");
    const auto name = it->get<std::string>();
    const auto found = presets().find(name);
    if (found == presets().end()) throw ConfigError("problem.preset: unknown preset '" + name + "'");
    merged = json::parse(found->second);
    // Arrays and scalars replace, objects merge key by key.
    merged.merge_patch(user);
  }
  ObjectReader r(merged, "problem");
  ProblemConfig p;
  r.get("preset", p.preset);
  r.get_expr("exact", p.exact);
  if (const json* v = r.find("linear")) p.linear = read_linear(*v);
  if (const json* v = r.find("nonlinear")) p.nonlinear = read_nonlinear(*v);
  if (const json* v = r.find("control")) p.control = read_control(*v);
  r.finish();
  return p;
}

FbsdeConfig read_fbsde(const json& j) {
  ObjectReader r(j, "fbsde");
  FbsdeConfig c;
  r.get("paths", c.paths);
  r.get("steps", c.steps);
  r.get("noise_dim", c.noise_dim);
  r.get("y0", c.y0);
  r.get_exprs("drift", c.drift);
  r.get_exprs("volatility", c.volatility);
  r.finish();
  return c;
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  // byte is 1-based and may point one past the end.
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

void check_expr(const std::string& text, VarSet allowed, const std::string& key) {
  try {
    (void)ExprFn::parse(text, allowed);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void check_exprs(const std::vector<std::string>& list, std::initializer_list<std::size_t> sizes,
                 VarSet allowed, const std::string& key) {
  if (std::find(sizes.begin(), sizes.end(), list.size()) == sizes.end()) {
    std::string expect;
    for (std::size_t n : sizes) expect += (expect.empty() ? "" : " or ") + std::to_string(n);
    throw ConfigError(key + ": expected " + expect + " entries, got " + std::to_string(list.size()));
  }
  for (std::size_t i = 0; i < list.size(); ++i) check_expr(list[i], allowed, key + "[" + std::to_string(i) + "]");
}

VarSet with_y(VarSet v, int dim) {
  v.set(static_cast<std::size_t>(Var::y1));
  if (dim == 2) v.set(static_cast<std::size_t>(Var::y2));
  return v;
}

VarSet with_a(VarSet v, int control_dim) {
  v.set(static_cast<std::size_t>(Var::a1));
  if (control_dim == 2) v.set(static_cast<std::size_t>(Var::a2));
  return v;
}

VarSet f_slot_vars(int dim) {
  VarSet v = with_y(var_set({Var::t, Var::s, Var::u, Var::p1, Var::q11, Var::l, Var::m1, Var::n11}), dim);
  if (dim == 2) {
    v |= var_set({Var::p2, Var::q12, Var::q22, Var::m2, Var::n12, Var::n22});
  }
  return v;
}

}  // namespace

const char* mode_name(Mode mode) noexcept {
  for (const auto& [m, name] : kModes) {
    if (m == mode) return name;
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (const auto& [m, text] : kModes) {
    if (name == text) return m;
  }
  std::string known;
  for (const auto& [m, text] : kModes) known += (known.empty() ? "" : ", ") + std::string(text);
  throw ConfigError("mode: unknown mode '" + std::string(name) + "' (expected one of " + known + ")");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : presets()) out.push_back(name);
  return out;
}

RunConfig parse_problem_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    std::string detail = e.what();
    if (const auto pos = detail.rfind(": "); pos != std::string::npos) detail = detail.substr(pos + 2);
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ": " + detail);
  }

  RunConfig cfg;
  ObjectReader r(doc, "");
  std::string mode = mode_name(cfg.mode);
  r.get("mode", mode);
  cfg.mode = parse_mode(mode);
  if (const json* g = r.find("grid")) {
    ObjectReader gr(*g, "grid");
    gr.get("n_time", cfg.grid.n_time);
    gr.get("dim", cfg.grid.dim);
    gr.get("n_space", cfg.grid.n_space);
    gr.get("horizon", cfg.grid.horizon);
    gr.get("period", cfg.grid.period);
    gr.finish();
  }
  r.get("tolerance", cfg.tolerance);
  r.get("max_iter", cfg.max_iter);
  r.get("contraction_cap", cfg.contraction_cap);
  r.get("theta", cfg.theta);
  r.get("initial_window", cfg.initial_window);
  r.get("alpha", cfg.alpha);
  r.get("pair_budget", cfg.pair_budget);
  r.get("seed", cfg.seed);
  r.get("output", cfg.output);
  if (const json* p = r.find("problem")) cfg.problem = read_problem(*p);
  if (const json* f = r.find("fbsde")) cfg.fbsde = read_fbsde(*f);
  r.finish();

  validate_config(cfg);
  return cfg;
}

RunConfig load_problem_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_problem_config(buf.str());
}

void validate_config(const RunConfig& cfg) {
  const GridConfig& g = cfg.grid;
  try {
    (void)build_grid(g.n_time, g.dim, g.n_space, g.horizon, g.period);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (!(cfg.tolerance > 0.0)) throw ConfigError("tolerance: tolerance must be positive");
  if (cfg.max_iter < 1) throw ConfigError("max_iter: must be at least 1");
  if (!(cfg.contraction_cap > 0.0 && cfg.contraction_cap < 1.0))
    throw ConfigError("contraction_cap: must lie strictly between 0 and 1");
  if (!(cfg.theta >= 0.5 && cfg.theta <= 1.0)) throw ConfigError("theta: must lie in [0.5, 1]");
  if (cfg.initial_window < 0) throw ConfigError("initial_window: must be non-negative");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha: must lie strictly between 0 and 1");

  const int d = g.dim;
  const std::size_t sym = d == 1 ? 1 : 3;
  const auto dz = static_cast<std::size_t>(d);
  const VarSet space_time = with_y(var_set({Var::t, Var::s}), d);
  const VarSet initial = with_y(var_set({Var::t}), d);
  const ProblemConfig& p = cfg.problem;

  if (!p.exact.empty()) check_expr(p.exact, space_time, "problem.exact");
  if (const auto& lin = p.linear) {
    check_exprs(lin->a, {0, sym}, space_time, "problem.linear.a");
    check_exprs(lin->abar, {0, sym}, space_time, "problem.linear.abar");
    check_exprs(lin->b, {0, dz}, space_time, "problem.linear.b");
    check_exprs(lin->bbar, {0, dz}, space_time, "problem.linear.bbar");
    check_expr(lin->c, space_time, "problem.linear.c");
    check_expr(lin->cbar, space_time, "problem.linear.cbar");
    check_expr(lin->f, space_time, "problem.linear.f");
    check_expr(lin->g, initial, "problem.linear.g");
    if (!p.exact.empty() && (lin->f != "0" || lin->g != "0"))
      throw ConfigError("problem.linear: f and g are generated from problem.exact and must be omitted");
  }
  if (const auto& nl = p.nonlinear) {
    check_expr(nl->F, f_slot_vars(d), "problem.nonlinear.F");
    check_expr(nl->g, initial, "problem.nonlinear.g");
    if (!p.exact.empty() && nl->g != "0")
      throw ConfigError("problem.nonlinear: g is generated from problem.exact and must be omitted");
  }
  if (p.control) {
    const ControlConfig& c = *p.control;
    if (c.control_dim < 1 || c.control_dim > 2) throw ConfigError("problem.control.control_dim: must be 1 or 2");
    if (c.noise_dim < 1 || c.noise_dim > 2) throw ConfigError("problem.control.noise_dim: must be 1 or 2");
    const VarSet sya = with_a(with_y(var_set({Var::s}), d), c.control_dim);
    check_exprs(c.drift, {0, dz}, sya, "problem.control.drift");
    check_exprs(c.volatility, {dz * static_cast<std::size_t>(c.noise_dim)}, sya, "problem.control.volatility");
    check_expr(c.running, with_a(space_time, c.control_dim), "problem.control.running");
    check_expr(c.terminal, initial, "problem.control.terminal");
    const auto cd = static_cast<std::size_t>(c.control_dim);
    if (c.lower.size() != cd || c.upper.size() != cd)
      throw ConfigError("problem.control: lower and upper need control_dim entries");
    for (std::size_t i = 0; i < cd; ++i) {
      if (!(c.lower[i] < c.upper[i])) throw ConfigError("problem.control: lower must be below upper");
    }
    if (c.resolution < 3) throw ConfigError("problem.control.resolution: must be at least 3");
  }

  const FbsdeConfig& f = cfg.fbsde;
  if (f.paths < 2) throw ConfigError("fbsde.paths: must be at least 2");
  if (f.steps < 0) throw ConfigError("fbsde.steps: must be non-negative");
  if (f.steps > 0 && f.steps % (g.n_time - 1) != 0)
    throw ConfigError("fbsde.steps: must be a multiple of grid.n_time - 1");
  if (f.noise_dim < 1 || f.noise_dim > 2) throw ConfigError("fbsde.noise_dim: must be 1 or 2");
  if (!f.y0.empty() && f.y0.size() != dz) throw ConfigError("fbsde.y0: expected grid.dim entries");
  const VarSet sy = with_y(var_set({Var::s}), d);
  check_exprs(f.drift, {0, dz}, sy, "fbsde.drift");
  check_exprs(f.volatility, {0, dz * static_cast<std::size_t>(f.noise_dim)}, sy, "fbsde.volatility");

  const bool has_equation = p.linear || p.nonlinear;
  switch (cfg.mode) {
    case Mode::solve_linear:
      if (!p.linear) throw ConfigError("problem.linear: required by mode solve-linear");
      break;
    case Mode::solve_nonlinear:
    case Mode::verify_fbsde:
      if (!has_equation)
        throw ConfigError(std::string("problem: mode ") + mode_name(cfg.mode) + " needs problem.linear or problem.nonlinear");
      break;
    case Mode::solve_hjb:
      if (!p.control) throw ConfigError("problem.control: required by mode solve-hjb");
      break;
    case Mode::manufacture:
      if (p.exact.empty() || !has_equation)
        throw ConfigError("problem: mode manufacture needs problem.exact and an equation");
      break;
    case Mode::norms:
      if (p.exact.empty()) throw ConfigError("problem.exact: required by mode norms");
      break;
  }
}

std::string serialize_config(const RunConfig& cfg) {
  ojson out;
  out["mode"] = mode_name(cfg.mode);
  out["grid"] = {{"n_time", cfg.grid.n_time}, {"dim", cfg.grid.dim}, {"n_space", cfg.grid.n_space},
                 {"horizon", cfg.grid.horizon}, {"period", cfg.grid.period}};
  out["tolerance"] = cfg.tolerance;
  out["max_iter"] = cfg.max_iter;
  out["contraction_cap"] = cfg.contraction_cap;
  out["theta"] = cfg.theta;
  out["initial_window"] = cfg.initial_window;
  out["alpha"] = cfg.alpha;
  out["pair_budget"] = cfg.pair_budget;
  out["seed"] = cfg.seed;
  out["output"] = cfg.output;

  ojson problem = ojson::object();
  const ProblemConfig& p = cfg.problem;
  if (!p.preset.empty()) problem["preset"] = p.preset;
  if (!p.exact.empty()) problem["exact"] = p.exact;
  if (const auto& l = p.linear) {
    problem["linear"] = {{"a", l->a}, {"abar", l->abar}, {"b", l->b}, {"bbar", l->bbar},
                         {"c", l->c}, {"cbar", l->cbar}, {"f", l->f},   {"g", l->g}};
  }
  if (const auto& n = p.nonlinear) problem["nonlinear"] = {{"F", n->F}, {"g", n->g}};
  if (const auto& c = p.control) {
    problem["control"] = {{"control_dim", c->control_dim}, {"noise_dim", c->noise_dim},
                          {"drift", c->drift},             {"volatility", c->volatility},
                          {"running", c->running},         {"terminal", c->terminal},
                          {"lower", c->lower},             {"upper", c->upper},
                          {"resolution", c->resolution}};
  }
  out["problem"] = problem;
  const FbsdeConfig& f = cfg.fbsde;
  out["fbsde"] = {{"paths", f.paths}, {"steps", f.steps}, {"noise_dim", f.noise_dim},
                  {"y0", f.y0},       {"drift", f.drift}, {"volatility", f.volatility}};
  return out.dump(2) + "\n";
}

}  // namespace nonlocal
