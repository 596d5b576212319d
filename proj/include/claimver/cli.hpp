#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace claimver::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSystemic = 1;
inline constexpr int kExitConfig = 2;

/// Entry point of the `claimver` tool. Subcommands: run, sweep, ablate, report,
/// validate-data. Diagnostics go to `err`; `validate-data` and `report` without
/// `--out` print their result to `out`.
int main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

/// Parses "0.7,0.8,0.9". Throws claimver::InvalidArgument on malformed input.
[[nodiscard]] std::vector<double> parse_threshold_list(const std::string &text);

}  // namespace claimver::cli
