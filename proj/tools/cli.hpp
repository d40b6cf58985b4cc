#pragma once

#include <iosfwd>

namespace knnloc::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  ok = 0,
  internal_error = 1,
  usage_error = 2,
  io_error = 3,
  precondition_error = 4,
};

//! Entry point of the knnloc command line tool. Writes regular output to
//! `out` and diagnostics to `err`; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace knnloc::cli
