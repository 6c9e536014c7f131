// Acceptance matrix: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <iostream>
#include <string>

#include "app/acceptance.hpp"

#ifndef MFG_LQG_FIXTURE_DIR
#define MFG_LQG_FIXTURE_DIR "fixtures"
#endif

int main(int argc, char** argv) {
  mfg_lqg::app::AcceptanceOptions opts;
  opts.fixture_dir = argc > 1 ? argv[1] : MFG_LQG_FIXTURE_DIR;
  opts.scratch_dir = std::filesystem::temp_directory_path() /
                     "mfg_lqg_acceptance";
  for (int i = 2; i < argc; ++i) opts.only.push_back(std::stoi(argv[i]));
  const auto results = mfg_lqg::app::run_acceptance(opts, &std::cout);
  std::filesystem::remove_all(opts.scratch_dir);
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (results.size() - failed) << "/" << results.size()
            << " criteria passed\n";
  return failed;
}
