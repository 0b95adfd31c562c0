#pragma once

#include <stdexcept>
#include <string>

namespace nonlocal {

/// Base of every error raised by the library.  Each subclass maps to a
/// distinct process exit code in the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual int exit_code() const noexcept { return 10; }
  [[nodiscard]] virtual const char* kind() const noexcept { return "error"; }
};

#define NONLOCAL_DEFINE_ERROR(Name, code, label)                            \
  class Name : public Error {                                               \
   public:                                                                  \
    using Error::Error;                                                     \
    [[nodiscard]] int exit_code() const noexcept override { return code; }  \
    [[nodiscard]] const char* kind() const noexcept override { return label; } \
  };

NONLOCAL_DEFINE_ERROR(ConfigError, 2, "configuration")
NONLOCAL_DEFINE_ERROR(ArgumentError, 3, "argument")
NONLOCAL_DEFINE_ERROR(IndexError, 4, "index")
NONLOCAL_DEFINE_ERROR(ModelError, 5, "model")
NONLOCAL_DEFINE_ERROR(NumericalError, 6, "numerical")
NONLOCAL_DEFINE_ERROR(NonConvergenceError, 7, "non-convergence")
NONLOCAL_DEFINE_ERROR(ConsistencyError, 8, "consistency")
NONLOCAL_DEFINE_ERROR(ManufactureError, 9, "manufacture")
NONLOCAL_DEFINE_ERROR(RangeError, 11, "range")
NONLOCAL_DEFINE_ERROR(BlowUpError, 12, "blow-up")

#undef NONLOCAL_DEFINE_ERROR

}  // namespace nonlocal
