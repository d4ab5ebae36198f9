#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shira {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

/// Operand dimensions do not line up.
class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string &msg) : Error(msg) {}
};

/// An argument is outside its documented domain.
class ParameterError : public Error {
  public:
    explicit ParameterError(const std::string &msg) : Error(msg) {}
};

/// A numerical routine failed (non-finite input, no convergence).
class NumericError : public Error {
  public:
    explicit NumericError(const std::string &msg) : Error(msg) {}
};

/// A serialized file is malformed; the message names the offending field.
class FormatError : public Error {
  public:
    explicit FormatError(const std::string &msg) : Error(msg) {}
};

/// File could not be opened, read or written.
class IoError : public Error {
  public:
    explicit IoError(const std::string &msg) : Error(msg) {}
};

/// Training diverged; carries the step at which it happened.
class TrainingError : public Error {
  public:
    TrainingError(const std::string &msg, std::size_t step)
        : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const { return step_; }

  private:
    std::size_t step_;
};

} // namespace shira
