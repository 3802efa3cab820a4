#pragma once

#include <string>
#include <vector>

#include "ltsurv/io/config.hpp"
#include "ltsurv/simharness.hpp"

namespace ltsurv {

struct GridRunResult {
  SimConfig config;
  std::string config_hash;
  std::vector<SimSummary> summaries;  // one per scenario, grid order
  int n_computed = 0;                 // scenarios computed this run
  int n_resumed = 0;                  // scenarios loaded from existing files
};

/// Executes the scenario grid, writing one scenario_###.json per scenario
/// plus summary.json and summary.csv into out_dir. Scenarios whose output
/// file already matches (config hash, master seed, index) are not recomputed,
/// making interrupted runs resumable. Scenarios run concurrently on up to
/// n_threads workers (0 = hardware concurrency); results are identical for
/// any thread count.
GridRunResult run_grid(const SimConfig& config, const std::string& out_dir,
                       bool plots = false, int n_threads = 0,
                       bool progress = false);

std::string summary_csv(const GridRunResult& result);
std::string summary_json_text(const GridRunResult& result);

}  // namespace ltsurv
