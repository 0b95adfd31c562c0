#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nonlocal {

enum class Mode { solve_linear, solve_nonlinear, solve_hjb, verify_fbsde, manufacture, norms };

[[nodiscard]] const char* mode_name(Mode mode) noexcept;
/// ConfigError for an unknown name.
[[nodiscard]] Mode parse_mode(std::string_view name);

struct GridConfig {
  int n_time = 64;
  int dim = 1;
  int n_space = 128;
  double horizon = 1.0;
  double period = 6.283185307179586;

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

/// Expressions in (t, s, y); packed symmetric matrices; empty lists are zero.
struct LinearConfig {
  std::vector<std::string> a, abar, b, bbar;
  std::string c = "0", cbar = "0", f = "0";
  std::string g = "0";  ///< in (t, y)

  friend bool operator==(const LinearConfig&, const LinearConfig&) = default;
};

struct NonlinearConfig {
  std::string F;
  std::string g = "0";

  friend bool operator==(const NonlinearConfig&, const NonlinearConfig&) = default;
};

/// Control problem: drift and volatility in (s, y, a), running cost in
/// (t, s, y, a) with s the running time, terminal cost in (t, y).
struct ControlConfig {
  int control_dim = 1;
  int noise_dim = 1;
  std::vector<std::string> drift, volatility;  ///< d and d x k row-major
  std::string running = "0", terminal = "0";
  std::vector<double> lower, upper;
  int resolution = 64;

  friend bool operator==(const ControlConfig&, const ControlConfig&) = default;
};

/// Forward model in (s, y) for the Feynman-Kac check; empty lists mean zero
/// drift and identity volatility.  steps = 0 picks 4 (n_time - 1).
struct FbsdeConfig {
  int paths = 10000;
  int steps = 0;
  int noise_dim = 1;
  std::vector<double> y0;
  std::vector<std::string> drift, volatility;

  friend bool operator==(const FbsdeConfig&, const FbsdeConfig&) = default;
};

struct ProblemConfig {
  std::string preset;
  std::string exact;  ///< manufactured solution u*(t, s, y); generates f and g
  std::optional<LinearConfig> linear;
  std::optional<NonlinearConfig> nonlinear;
  std::optional<ControlConfig> control;

  friend bool operator==(const ProblemConfig&, const ProblemConfig&) = default;
};

struct RunConfig {
  Mode mode = Mode::solve_linear;
  GridConfig grid;
  double tolerance = 1e-8;
  int max_iter = 200;
  double contraction_cap = 0.9;
  double theta = 0.5;
  int initial_window = 0;
  double alpha = 0.5;
  std::uint64_t pair_budget = 0;  ///< sampled pairs per slice; 0 = exhaustive
  std::uint64_t seed = 1;
  std::string output = "out";
  ProblemConfig problem;
  FbsdeConfig fbsde;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses a JSON document.  Syntax errors carry line and column; semantic
/// errors name the offending key; unknown keys are rejected.  A preset name
/// expands into problem fields that explicit keys override.
[[nodiscard]] RunConfig parse_problem_config(std::string_view text);
[[nodiscard]] RunConfig load_problem_config(const std::filesystem::path& path);

/// JSON text that parses back to an equal RunConfig.
[[nodiscard]] std::string serialize_config(const RunConfig& cfg);

/// Value ranges, grid validity, expression syntax per slot, and the payload
/// the mode needs.  Throws ConfigError naming the key.
void validate_config(const RunConfig& cfg);

[[nodiscard]] std::vector<std::string> preset_names();

}  // namespace nonlocal
