#pragma once

#include <stdexcept>
#include <string>

namespace tbudget {

// Parameter vector has the wrong length or a non-finite entry.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Observation outside the family's support.
class InvalidSample : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Requested quantity has no closed form for this family.
class NotAvailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Empty feasible set (s above the total cap, alpha off the capped simplex).
class Infeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the config loader; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Optimizer produced a non-finite iterate.
class Diverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tbudget
