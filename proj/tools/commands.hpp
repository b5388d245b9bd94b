#pragma once

#include <string>
#include <vector>

namespace sftm::cli {

/// Parses argv, runs the chosen command and returns the process exit code:
/// 0 success, 2 configuration or validation error, 3 I/O error, 4 numerical failure.
int run(int argc, char** argv);

}  // namespace sftm::cli
