#pragma once

#include <stdexcept>
#include <string>

namespace pisoc {

enum class ErrorKind {
  Config,
  Dimension,
  Numerical,
  Convergence,
  Architecture,
  Io,
};

const char* to_string(ErrorKind kind);

// Structured error carried by every failure the library reports. `field`
// names the offending configuration key or argument when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& field() const { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace pisoc
