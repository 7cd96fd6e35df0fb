#pragma once

#include <stdexcept>
#include <string>

namespace ntopo {

/// Raised when input data is malformed or inconsistent (as opposed to a bad
/// argument, which raises std::invalid_argument).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ntopo
