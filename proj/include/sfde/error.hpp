#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sfde {

/// Failure categories. The CLI maps the first group to exit code 1
/// (input validation) and the second to exit code 2 (numerical failure).
enum class ErrorKind {
  // validation
  alignment,
  shape,
  range,
  precondition,
  syntax,
  unknown_symbol,
  config,
  // numerical
  overflow,
  evaluation,
  root_on_contour,
  convergence,
  unstable,
  certification,
  statistics,
};

inline constexpr std::string_view to_string(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::shape: return "shape";
    case ErrorKind::range: return "range";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::syntax: return "syntax";
    case ErrorKind::unknown_symbol: return "unknown_symbol";
    case ErrorKind::config: return "config";
    case ErrorKind::overflow: return "overflow";
    case ErrorKind::evaluation: return "evaluation";
    case ErrorKind::root_on_contour: return "root_on_contour";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::unstable: return "unstable";
    case ErrorKind::certification: return "certification";
    case ErrorKind::statistics: return "statistics";
  }
  return "unknown";
}

inline constexpr bool is_validation(ErrorKind k) noexcept {
  return k <= ErrorKind::config;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Syntax errors carry the 0-based character offset of the failure.
class ParseError : public Error {
 public:
  ParseError(ErrorKind kind, std::size_t position, const std::string& what)
      : Error(kind, what + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// Grid helpers. Every time quantity in the library lives on a uniform grid of
// step h; converting a real time to a node index must be exact up to rounding
// noise, otherwise the value is rejected as misaligned.

inline bool is_multiple_of(double x, double h) noexcept {
  const double q = x / h;
  return std::abs(q - std::nearbyint(q)) <= 1e-9 * std::max(1.0, std::abs(q));
}

inline std::int64_t grid_index(double x, double h, std::string_view what) {
  if (!(h > 0.0) || !std::isfinite(x))
    fail(ErrorKind::alignment, std::string(what) + ": invalid grid value");
  if (!is_multiple_of(x, h))
    fail(ErrorKind::alignment,
         std::string(what) + " = " + std::to_string(x) +
             " is not an integer multiple of the step h = " + std::to_string(h));
  return static_cast<std::int64_t>(std::llround(x / h));
}

}  // namespace sfde
