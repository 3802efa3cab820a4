#include "ltsurv/io/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ltsurv/errors.hpp"

namespace ltsurv {

namespace {

using nlohmann::json;

template <class T>
T get_field(const json& j, const std::string& path, const std::string& key,
            T fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path.empty() ? key : path + "." + key,
                      "has wrong type (found " + std::string(v.type_name()) + ")");
  }
}

std::vector<double> get_grid(const json& j, const std::string& key,
                             std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.empty())
    throw ConfigError("grid." + key, "must be a nonempty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number())
      throw ConfigError("grid." + key + "[" + std::to_string(i) + "]",
                        "must be a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

void check(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");

  SimConfig cfg;
  cfg.schema_version = get_field<int>(j, "", "schema_version", cfg.schema_version);
  check(cfg.schema_version == 1, "schema_version", "unsupported version");
  cfg.master_seed = get_field<std::uint64_t>(j, "", "master_seed", cfg.master_seed);
  cfg.n_iterations = get_field<int>(j, "", "n_iterations", cfg.n_iterations);
  cfg.bootstrap_resamples =
      get_field<int>(j, "", "bootstrap_resamples", cfg.bootstrap_resamples);
  cfg.confidence_level =
      get_field<double>(j, "", "confidence_level", cfg.confidence_level);
  cfg.ties = get_field<std::string>(j, "", "ties", cfg.ties);

  if (j.contains("calibration")) {
    const json& c = j.at("calibration");
    cfg.calibration_n = get_field<int>(c, "calibration", "n_montecarlo",
                                       cfg.calibration_n);
    cfg.calibration_tolerance = get_field<double>(c, "calibration", "tolerance",
                                                  cfg.calibration_tolerance);
  }
  if (j.contains("fixed")) {
    const json& f = j.at("fixed");
    cfg.p_entry_at_baseline = get_field<double>(f, "fixed", "p_entry_at_baseline",
                                                cfg.p_entry_at_baseline);
    cfg.beta_trt = get_field<double>(f, "fixed", "beta_trt", cfg.beta_trt);
    cfg.lambda_bh = get_field<double>(f, "fixed", "lambda_bh", cfg.lambda_bh);
    cfg.z2_sd = get_field<double>(f, "fixed", "z2_sd", cfg.z2_sd);
    cfg.n_rw_expected = get_field<int>(f, "fixed", "n_rw_expected", cfg.n_rw_expected);
    cfg.n_trial = get_field<int>(f, "fixed", "n_trial", cfg.n_trial);
  }
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    cfg.target_truncation = get_grid(g, "target_truncation", cfg.target_truncation);
    cfg.beta_entry = get_grid(g, "beta_entry", cfg.beta_entry);
    cfg.beta_z = get_grid(g, "beta_z", cfg.beta_z);
  }

  check(cfg.n_iterations >= 1, "n_iterations", "must be >= 1");
  check(cfg.bootstrap_resamples >= 1, "bootstrap_resamples", "must be >= 1");
  check(cfg.confidence_level > 0.0 && cfg.confidence_level < 1.0,
        "confidence_level", "must lie in (0,1)");
  check(cfg.ties == "breslow" || cfg.ties == "efron", "ties",
        "must be 'breslow' or 'efron'");
  check(cfg.calibration_n >= 1000, "calibration.n_montecarlo", "must be >= 1000");
  check(cfg.calibration_tolerance > 0.0, "calibration.tolerance",
        "must be positive");
  check(cfg.p_entry_at_baseline >= 0.0 && cfg.p_entry_at_baseline < 1.0,
        "fixed.p_entry_at_baseline", "must lie in [0,1)");
  check(cfg.lambda_bh > 0.0, "fixed.lambda_bh", "must be positive");
  check(cfg.z2_sd > 0.0, "fixed.z2_sd", "must be positive");
  check(cfg.n_rw_expected >= 1, "fixed.n_rw_expected", "must be >= 1");
  check(cfg.n_trial >= 1, "fixed.n_trial", "must be >= 1");
  for (std::size_t i = 0; i < cfg.target_truncation.size(); ++i)
    check(cfg.target_truncation[i] > 0.0 && cfg.target_truncation[i] < 1.0,
          "grid.target_truncation[" + std::to_string(i) + "]",
          "must lie in (0,1)");
  for (std::size_t i = 0; i < cfg.beta_entry.size(); ++i)
    check(std::isfinite(cfg.beta_entry[i]),
          "grid.beta_entry[" + std::to_string(i) + "]", "must be finite");
  for (std::size_t i = 0; i < cfg.beta_z.size(); ++i)
    check(std::isfinite(cfg.beta_z[i]), "grid.beta_z[" + std::to_string(i) + "]",
          "must be finite");
  return cfg;
}

std::string sim_config_to_json(const SimConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["master_seed"] = cfg.master_seed;
  j["n_iterations"] = cfg.n_iterations;
  j["bootstrap_resamples"] = cfg.bootstrap_resamples;
  j["confidence_level"] = cfg.confidence_level;
  j["ties"] = cfg.ties;
  j["calibration"] = {{"n_montecarlo", cfg.calibration_n},
                      {"tolerance", cfg.calibration_tolerance}};
  j["fixed"] = {{"p_entry_at_baseline", cfg.p_entry_at_baseline},
                {"beta_trt", cfg.beta_trt},
                {"lambda_bh", cfg.lambda_bh},
                {"z2_sd", cfg.z2_sd},
                {"n_rw_expected", cfg.n_rw_expected},
                {"n_trial", cfg.n_trial}};
  j["grid"] = {{"target_truncation", cfg.target_truncation},
               {"beta_entry", cfg.beta_entry},
               {"beta_z", cfg.beta_z}};
  return j.dump(2) + "\n";
}

std::vector<SimScenario> expand_grid(const SimConfig& cfg) {
  std::vector<SimScenario> scenarios;
  for (double target : cfg.target_truncation)
    for (double be : cfg.beta_entry)
      for (double bz : cfg.beta_z) {
        SimScenario s;
        s.p_entry_at_baseline = cfg.p_entry_at_baseline;
        s.beta_entry = be;
        s.beta_trt = cfg.beta_trt;
        s.beta_z = bz;
        s.lambda_bh = cfg.lambda_bh;
        s.target_truncation = target;
        s.n_rw_expected = cfg.n_rw_expected;
        s.n_trial = cfg.n_trial;
        s.z2_sd = cfg.z2_sd;
        scenarios.push_back(s);
      }
  return scenarios;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace ltsurv
