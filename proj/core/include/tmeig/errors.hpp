#pragma once

#include <stdexcept>
#include <string>

namespace tmeig {

/// A model or density set does not support the requested operation
/// (e.g. likelihood evaluation on a likelihood-free model).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A matrix factorization failed (non-SPD input after jitter, singular pencil).
class DecompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Root finding walked out of its admissible bracket; signals a mis-trained map.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration file failed schema validation. `field` is the offending path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field_path, const std::string& what)
      : std::runtime_error(field_path + ": " + what), field(std::move(field_path)) {}
  std::string field;
};

}  // namespace tmeig
