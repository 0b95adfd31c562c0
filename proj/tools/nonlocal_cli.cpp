#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nonlocal/config.hpp"
#include "nonlocal/errors.hpp"
#include "nonlocal/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Solver for nonlocal parabolic equations on the triangular time domain"};
  std::string config_path;
  std::optional<std::string> mode, out;
  std::optional<std::uint64_t> seed;
  nonlocal::RunOptions options;
  app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--mode", mode, "override the configured mode");
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "random seed for paths and pair sampling");
  app.add_option("--refine", options.refine, "number of grid-refinement levels")->check(CLI::PositiveNumber);
  app.add_flag("--timing", options.timing, "record wall-clock times in reports");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; usage errors share the argument-error code.
    return app.exit(e) == 0 ? 0 : nonlocal::ArgumentError("").exit_code();
  }

  try {
    nonlocal::RunConfig cfg = nonlocal::load_problem_config(config_path);
    if (mode) cfg.mode = nonlocal::parse_mode(*mode);
    if (out) cfg.output = *out;
    if (seed) cfg.seed = *seed;
    return nonlocal::run_solver_pipeline(cfg, options);
  } catch (const nonlocal::Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
