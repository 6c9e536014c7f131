#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfg_lqg::app {

struct AcceptanceOptions {
  std::filesystem::path fixture_dir;
  std::filesystem::path scratch_dir;  // CLI determinism runs write here
  int threads = 0;
  std::vector<int> only;  // empty runs every criterion
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

inline constexpr int kNumCriteria = 9;

/// Runs the acceptance criteria in order. A criterion whose fixture cannot be
/// loaded fails with the fixture name in its detail. When `log` is set, one
/// "PASS|FAIL <id> <name>: <detail>" line is printed per criterion.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts,
                                            std::ostream* log = nullptr);

}  // namespace mfg_lqg::app
