#pragma once

#include <stdexcept>
#include <string>

namespace omt {

// Bad caller-supplied data (dimensions, token vectors, NaNs, unknown ids).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration that violates a type invariant.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_input(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}

inline void require_config(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace detail
}  // namespace omt
