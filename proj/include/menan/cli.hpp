#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace menan::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kMissingFile = 3;
inline constexpr int kNumericError = 4;

/// Runs one command line (without the program name), e.g.
/// {"train", "--regime", "menan", "--out", "runs/a"}. Diagnostics go to
/// `err` as a single line.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace menan::cli
