#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dhcal {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data: broken file schemas, NaN readings,
/// non-monotone timestamps, size mismatches between streams.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside a solver (non-convergence, singular system).
class SolveError : public Error {
 public:
  using Error::Error;
};

/// A network description failed structural validation.  Carries one message
/// per violation so callers can report all problems at once.
class TopologyError : public Error {
 public:
  explicit TopologyError(std::vector<std::string> violations)
      : Error(format_message(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept {
    return violations_;
  }

 private:
  static std::string format_message(const std::vector<std::string>& v) {
    std::string msg = "invalid topology";
    const char* sep = ": ";
    for (const auto& item : v) {
      msg += sep;
      msg += item;
      sep = "; ";
    }
    return msg;
  }

  std::vector<std::string> violations_;
};

}  // namespace dhcal
