#pragma once

#include <stdexcept>
#include <string>

namespace destripe {

/// File missing, unreadable, or unwritable. CLI exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented contract (shape, range, format). CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite intermediate or numerically broken invariant. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace destripe
