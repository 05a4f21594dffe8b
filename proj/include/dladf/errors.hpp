#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dladf {

// Bad argument to a numeric routine (dimension mismatch, value out of domain).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A denominator reached zero with clipping disabled.
class DivisionGuard : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A field only the generator knows (y_true, theta_true, ...) or a field a
// method needs (d, e) is absent from the data at hand.
class MissingField : public std::runtime_error {
 public:
  explicit MissingField(const std::string& field)
      : std::runtime_error("required field '" + field + "' is unavailable"),
        field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace dladf
