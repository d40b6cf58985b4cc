#pragma once

#include <stdexcept>

namespace knnloc {

// Precondition violations are reported with std::invalid_argument /
// std::out_of_range. IoError is reserved for filesystem and stream failures so
// callers (the CLI in particular) can tell the two apart.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace knnloc
