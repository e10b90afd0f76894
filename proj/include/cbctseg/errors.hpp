#pragma once

#include <stdexcept>
#include <string>

namespace cbctseg {

// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data or arguments (CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Missing, unreadable, unwritable or truncated files (CLI exit code 2).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbctseg
