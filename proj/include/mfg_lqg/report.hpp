#pragma once

#include <string>
#include <vector>

namespace mfg_lqg {

/// Outcome of a list of named checks.
struct ValidationReport {
  struct Check {
    std::string name;
    bool passed = true;
    std::string detail;
    double value = 0.0;  // offending eigenvalue / residual when relevant
  };

  std::vector<Check> checks;
  std::vector<std::string> warnings;

  bool passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }

  void add(std::string name, bool ok, std::string detail = {},
           double value = 0.0) {
    checks.push_back({std::move(name), ok, std::move(detail), value});
  }

  /// "name: detail" lines of the failed checks.
  std::string failures() const {
    std::string out;
    for (const auto& c : checks) {
      if (c.passed) continue;
      if (!out.empty()) out += "; ";
      out += c.detail.empty() ? c.name : c.detail;
    }
    return out;
  }
};

}  // namespace mfg_lqg
