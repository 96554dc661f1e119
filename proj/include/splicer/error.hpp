// error.hpp — exception types and check helpers shared across the library.
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace splicer {

// Shape / dimension contract violations (bad operand shapes, width mismatches).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid run/dataset/architecture configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric failures at runtime (non-finite loss, degenerate batches).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File format / serialization failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void format_parts(std::ostringstream&) {}
template <typename A, typename... Rest>
void format_parts(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  format_parts(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream os;
  detail::format_parts(os, parts...);
  return os.str();
}

template <typename Err = ShapeError, typename... Parts>
void check(bool cond, const Parts&... parts) {
  if (!cond) throw Err(msg(parts...));
}

}  // namespace splicer
