#pragma once

#include <stdexcept>
#include <string>

namespace mcs {

class invalid_parameter : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Initial state has non-finite log-density (or an initial estimate collapsed).
class initialization_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Every weight in a set is -inf, so no normalization is possible.
class degenerate_weights_error : public std::runtime_error {
public:
  explicit degenerate_weights_error(const std::string& what, long step = -1)
      : std::runtime_error(what), step(step) {}
  long step;  // index of the offending step, -1 when not applicable
};

class singular_kernel_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class singular_geometry_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class undefined_statistic_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcs
