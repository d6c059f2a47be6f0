#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qirl {

// Invalid configuration value; `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Caption outside the templated grammar.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t token_index, const std::string& what)
      : std::runtime_error("token " + std::to_string(token_index) + ": " + what),
        token_index_(token_index) {}
  std::size_t token_index() const { return token_index_; }

 private:
  std::size_t token_index_;
};

// Precondition or invariant violated on data passed to an operation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loss or score became NaN/inf during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  IoError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointDimensionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace qirl
