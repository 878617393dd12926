#pragma once

namespace psi::cli {

/// The whole executable behind main(): parses arguments, runs one pipeline
/// subcommand, and maps failures to exit codes — 0 success, 1 user or
/// configuration error, 2 internal invariant violation.
int run_cli(int argc, const char* const* argv);

}  // namespace psi::cli
