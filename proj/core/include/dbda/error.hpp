#pragma once

#include <stdexcept>
#include <string>

namespace dbda {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or argument mismatch between tensors / operations.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Experiment-file or command-line configuration problems. Exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a loss term or a failed gradient check. Exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Unreadable, unwritable, or malformed files. Exit code 4.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dbda
