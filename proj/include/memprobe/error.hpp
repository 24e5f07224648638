#pragma once

#include <stdexcept>
#include <string>

namespace memprobe {

// Base for every error the library raises. The C API maps the concrete
// subclass onto an error code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in an iterate, divergence during training, non-convergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace memprobe
