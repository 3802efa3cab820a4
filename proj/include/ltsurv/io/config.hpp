#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltsurv/simgen.hpp"

namespace ltsurv {

/// Simulation study configuration (schema_version 1). The grid is the
/// cross-product of target_truncation x beta_entry x beta_z; all other
/// generator parameters are fixed across scenarios.
struct SimConfig {
  int schema_version = 1;
  std::uint64_t master_seed = 20260809;
  int n_iterations = 1000;
  int bootstrap_resamples = 200;
  double confidence_level = 0.95;
  std::string ties = "breslow";

  int calibration_n = 200000;
  double calibration_tolerance = 0.002;

  double p_entry_at_baseline = 0.2;
  double beta_trt = -0.22314355131420976;  // log 0.8
  double lambda_bh = 1.0 / 12.0;
  double z2_sd = 0.5;
  int n_rw_expected = 250;
  int n_trial = 250;

  std::vector<double> target_truncation = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<double> beta_entry = {-0.6931471805599453,  // log 0.5
                                    -0.2231435513142097,  // log 0.8
                                    0.0};
  std::vector<double> beta_z = {0.0, 0.4054651081081644,  // log 1.5
                                0.6931471805599453};      // log 2
};

SimConfig load_sim_config(const std::string& path);
std::string sim_config_to_json(const SimConfig& config);

/// Scenario list in a fixed order: target (outer), beta_entry, beta_z
/// (inner). Scenario index = (i_target * |beta_entry| + i_be) * |beta_z|
/// + i_bz.
std::vector<SimScenario> expand_grid(const SimConfig& config);

/// FNV-1a hash of a string, hex-encoded; used for config provenance.
std::string fnv1a_hex(const std::string& text);

}  // namespace ltsurv
