#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace mfg_lqg::app {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitAssumption = 4,
};

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  int threads = 0;  // capacity hint; results never depend on it
};

// Each command writes its files under opts.out plus a manifest.json with
// timings. Errors propagate as mfg_lqg::Error subclasses.
void cmd_solve_lqg(const CommandOptions& opts, std::ostream& log);
void cmd_solve_mfg(const CommandOptions& opts, std::ostream& log);
void cmd_simulate(const CommandOptions& opts, std::ostream& log);
void cmd_nash_gap(const CommandOptions& opts, std::ostream& log);

/// Runs the acceptance suite against `fixture_dir`, writes verify.csv under
/// `out` and prints the pass/fail matrix. Returns the number of failed
/// criteria capped at 125.
int cmd_verify(const std::filesystem::path& out,
               const std::filesystem::path& fixture_dir, int threads,
               std::ostream& log);

/// Runs a named command and maps errors onto exit codes.
int run_command(const std::string& name, const CommandOptions& opts,
                std::ostream& log, std::ostream& err);

}  // namespace mfg_lqg::app
