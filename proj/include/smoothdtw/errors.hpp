#pragma once

#include <stdexcept>
#include <string>

namespace smoothdtw {

/// Bad argument: empty input, shape mismatch, out-of-range parameter.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but geometrically degenerate (e.g. a zero-norm column).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Exhaustive oracles refuse inputs whose enumeration would not terminate in time.
class ResourceLimit : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// A non-finite value appeared while evaluating the loss or its gradient.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Invalid configuration detected before any compute starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace smoothdtw
