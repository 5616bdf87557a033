#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace marginlab {

// Bad user input: config fields, CLI flags, schema violations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Arguments outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::int64_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::int64_t epoch() const { return epoch_; }

 private:
  std::int64_t epoch_;
};

}  // namespace marginlab
