#pragma once

#include <stdexcept>
#include <string>

namespace vip {

/// Malformed configuration text or an unknown/mistyped field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A value violates a documented invariant. `invariant()` is a stable
/// identifier such as "geometry.positive_length" so callers and tests can
/// tell violation classes apart without parsing the message.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string invariant, const std::string& detail)
      : std::runtime_error(invariant + ": " + detail),
        invariant_(std::move(invariant)) {}

  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

/// Binary or CSV payload that cannot be decoded.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Fit-level failures (too few entries, singular normal equations, no
/// convergence).
class FitError : public std::runtime_error {
 public:
  enum class Kind { insufficient_statistics, singular, no_convergence };

  FitError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace vip
