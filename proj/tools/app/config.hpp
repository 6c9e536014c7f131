#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg_lqg/lqg_single.hpp"
#include "mfg_lqg/mfg_solver.hpp"
#include "mfg_lqg/population_sim.hpp"

namespace mfg_lqg::app {

/// Parsed run configuration. A document holds either a single-agent
/// problem ("lqg") or a game ("major" + "minor_types").
struct RunConfig {
  std::optional<LqgProblem> lqg;
  std::optional<MmMfgProblem> game;
  bool infinite_horizon = false;
  FixedPointConfig solver;
  PopulationConfig population;
  int write_paths = 2;
  std::vector<int> study_N;
  std::optional<int> study_paths;
  std::vector<int> gap_N = {2, 4, 8, 16, 32};
  nlohmann::json document;  // as parsed, with the seed override applied
};

/// Throws ConfigError with the offending field path on any schema problem.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path,
                      std::optional<std::uint64_t> seed_override = {});

/// 64-bit FNV-1a over the canonical (sorted, compact) dump.
std::uint64_t config_hash(const nlohmann::json& doc);

}  // namespace mfg_lqg::app
