#include "ltsurv/io/simulate.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "ltsurv/io/csv.hpp"
#include "ltsurv/io/report.hpp"
#include "ltsurv/io/svg.hpp"

namespace ltsurv {

namespace {

using nlohmann::json;

constexpr Estimand kEstimands[] = {Estimand::conditional_hr, Estimand::marginal_hr,
                                   Estimand::rw_median};
constexpr EstimatorKind kKinds[] = {EstimatorKind::naive, EstimatorKind::adjusted,
                                    EstimatorKind::weighted};

json scenario_json(const SimScenario& s) {
  return {{"p_entry_at_baseline", s.p_entry_at_baseline},
          {"beta_entry", s.beta_entry},
          {"beta_trt", s.beta_trt},
          {"beta_z", s.beta_z},
          {"lambda_bh", s.lambda_bh},
          {"target_truncation", s.target_truncation},
          {"n_rw_expected", s.n_rw_expected},
          {"n_trial", s.n_trial},
          {"z2_sd", s.z2_sd}};
}

json cell_json(const SummaryCell& c) {
  return {{"relative_bias", c.relative_bias}, {"log_scale_bias", c.log_scale_bias},
          {"coverage", c.coverage},
          {"coverage_iteration_truth", c.coverage_iteration_truth},
          {"mc_se", c.mc_se},                 {"n_used", c.n_used},
          {"n_failures", c.n_failures},       {"n_with_ci", c.n_with_ci}};
}

SummaryCell cell_from_json(const json& j) {
  SummaryCell c;
  const auto num = [&](const char* key) {
    const json& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                       : v.get<double>();
  };
  c.relative_bias = num("relative_bias");
  c.log_scale_bias = num("log_scale_bias");
  c.coverage = num("coverage");
  c.coverage_iteration_truth = num("coverage_iteration_truth");
  c.mc_se = num("mc_se");
  c.n_used = j.at("n_used").get<int>();
  c.n_failures = j.at("n_failures").get<int>();
  c.n_with_ci = j.at("n_with_ci").get<int>();
  return c;
}

json summary_to_json(const SimSummary& s, std::size_t index) {
  json cells;
  for (Estimand e : kEstimands) {
    json per;
    for (EstimatorKind k : kKinds) {
      if (!estimator_defined(e, k)) continue;
      per[to_string(k)] = cell_json(s.at(e, k));
    }
    cells[to_string(e)] = per;
  }
  return {{"scenario_index", index},
          {"scenario", scenario_json(s.scenario)},
          {"lambda_ebh", s.lambda_ebh},
          {"n_iterations", s.n_iterations},
          {"truths",
           {{"conditional_hr", s.truths.conditional_hr},
            {"marginal_hr", s.truths.marginal_hr},
            {"rw_median", s.truths.rw_median}}},
          {"cells", cells}};
}

bool load_scenario_file(const std::string& path, const std::string& config_hash,
                        std::uint64_t master_seed, std::size_t index,
                        const SimScenario& expected, SimSummary& out) {
  std::ifstream in(path);
  if (!in) return false;
  json j;
  try {
    in >> j;
    const json& prov = j.at("provenance");
    if (prov.at("config_hash").get<std::string>() != config_hash) return false;
    if (prov.at("master_seed").get<std::uint64_t>() != master_seed) return false;
    if (j.at("scenario_index").get<std::size_t>() != index) return false;
    if (j.at("scenario") != scenario_json(expected)) return false;

    out.scenario = expected;
    out.lambda_ebh = j.at("lambda_ebh").get<double>();
    out.n_iterations = j.at("n_iterations").get<int>();
    const json& truths = j.at("truths");
    const auto truth_num = [&](const char* key) {
      const json& v = truths.at(key);
      return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                         : v.get<double>();
    };
    out.truths.conditional_hr = truth_num("conditional_hr");
    out.truths.marginal_hr = truth_num("marginal_hr");
    out.truths.rw_median = truth_num("rw_median");
    for (Estimand e : kEstimands)
      for (EstimatorKind k : kKinds) {
        if (!estimator_defined(e, k)) continue;
        out.at(e, k) = cell_from_json(j.at("cells").at(to_string(e)).at(to_string(k)));
      }
    return true;
  } catch (const json::exception&) {
    return false;
  }
}

std::string scenario_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scenario_%03zu.json", index);
  return buf;
}

void emit_plots(const GridRunResult& result, const std::string& out_dir);

}  // namespace

GridRunResult run_grid(const SimConfig& config, const std::string& out_dir,
                       bool plots, int n_threads, bool progress) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  GridRunResult result;
  result.config = config;
  result.config_hash = fnv1a_hex(sim_config_to_json(config));
  const std::vector<SimScenario> scenarios = expand_grid(config);
  result.summaries.resize(scenarios.size());

  HarnessOptions harness;
  harness.bootstrap_resamples = config.bootstrap_resamples;
  harness.level = config.confidence_level;
  harness.ties = config.ties == "efron" ? TieMethod::efron : TieMethod::breslow;
  CalibrationOptions calib;
  calib.n_montecarlo = config.calibration_n;
  calib.tolerance = config.calibration_tolerance;

  std::atomic<std::size_t> next{0};
  std::atomic<int> computed{0}, resumed{0};
  std::mutex io_mutex;
  std::vector<std::string> failures;

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= scenarios.size()) return;
      const std::string path =
          (fs::path(out_dir) / scenario_filename(i)).string();

      SimSummary summary;
      if (load_scenario_file(path, result.config_hash, config.master_seed, i,
                             scenarios[i], summary)) {
        result.summaries[i] = summary;
        resumed.fetch_add(1);
        if (progress) {
          std::lock_guard<std::mutex> lock(io_mutex);
          std::cerr << "scenario " << i << ": resumed from " << path << "\n";
        }
        continue;
      }

      try {
        ScenarioRun run = run_scenario(scenarios[i], config.n_iterations,
                                       config.master_seed, i, harness, calib);
        result.summaries[i] = run.summary;
        json j = summary_to_json(run.summary, i);
        j["provenance"] = {{"master_seed", config.master_seed},
                           {"config_hash", result.config_hash},
                           {"version", kVersion}};
        write_text_atomic(path, j.dump(2) + "\n");
        computed.fetch_add(1);
        if (progress) {
          std::lock_guard<std::mutex> lock(io_mutex);
          std::cerr << "scenario " << i << ": done (lambda_ebh="
                    << run.summary.lambda_ebh << ")\n";
        }
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(io_mutex);
        failures.push_back("scenario " + std::to_string(i) + ": " + e.what());
      }
    }
  };

  unsigned threads = n_threads > 0 ? static_cast<unsigned>(n_threads)
                                   : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(scenarios.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  if (!failures.empty()) {
    std::string all;
    for (const std::string& f : failures) all += f + "; ";
    throw NumericError("grid incomplete: " + all);
  }

  result.n_computed = computed.load();
  result.n_resumed = resumed.load();

  write_text_atomic((fs::path(out_dir) / "summary.json").string(),
                    summary_json_text(result));
  write_text_atomic((fs::path(out_dir) / "summary.csv").string(),
                    summary_csv(result));
  if (plots) emit_plots(result, out_dir);
  return result;
}

std::string summary_json_text(const GridRunResult& result) {
  json j;
  j["schema_version"] = 1;
  j["provenance"] = {{"master_seed", result.config.master_seed},
                     {"config_hash", result.config_hash},
                     {"version", kVersion}};
  json arr = json::array();
  for (std::size_t i = 0; i < result.summaries.size(); ++i)
    arr.push_back(summary_to_json(result.summaries[i], i));
  j["scenarios"] = arr;
  return j.dump(2) + "\n";
}

std::string summary_csv(const GridRunResult& result) {
  std::ostringstream out;
  out << "scenario_index,target_truncation,beta_entry,beta_z,lambda_ebh,"
         "estimand,estimator,relative_bias,log_scale_bias,coverage,"
         "coverage_iteration_truth,mc_se,n_used,n_failures,n_with_ci\n";
  for (std::size_t i = 0; i < result.summaries.size(); ++i) {
    const SimSummary& s = result.summaries[i];
    for (Estimand e : kEstimands)
      for (EstimatorKind k : kKinds) {
        if (!estimator_defined(e, k)) continue;
        const SummaryCell& c = s.at(e, k);
        out << i << ',' << format_double(s.scenario.target_truncation) << ','
            << format_double(s.scenario.beta_entry) << ','
            << format_double(s.scenario.beta_z) << ','
            << format_double(s.lambda_ebh) << ',' << to_string(e) << ','
            << to_string(k) << ',' << format_double(c.relative_bias) << ','
            << format_double(c.log_scale_bias) << ','
            << format_double(c.coverage) << ','
            << format_double(c.coverage_iteration_truth) << ','
            << format_double(c.mc_se) << ',' << c.n_used << ',' << c.n_failures
            << ',' << c.n_with_ci << '\n';
      }
  }
  return out.str();
}

namespace {

void emit_plots(const GridRunResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const SimConfig& cfg = result.config;

  const auto panel_title = [](double be, double bz) {
    std::ostringstream t;
    t.precision(3);
    t << "beta_entry=" << be << ", beta_z=" << bz;
    return t.str();
  };

  for (Estimand e : kEstimands) {
    for (const bool coverage_plot : {false, true}) {
      if (coverage_plot && e == Estimand::rw_median) continue;
      std::vector<SvgPanel> panels;
      for (std::size_t ibe = 0; ibe < cfg.beta_entry.size(); ++ibe)
        for (std::size_t ibz = 0; ibz < cfg.beta_z.size(); ++ibz) {
          SvgPanel panel;
          panel.title = panel_title(cfg.beta_entry[ibe], cfg.beta_z[ibz]);
          for (EstimatorKind k : kKinds) {
            if (!estimator_defined(e, k)) continue;
            SvgLineSeries series;
            series.label = to_string(k);
            for (std::size_t it = 0; it < cfg.target_truncation.size(); ++it) {
              const std::size_t idx =
                  (it * cfg.beta_entry.size() + ibe) * cfg.beta_z.size() + ibz;
              const SummaryCell& c = result.summaries[idx].at(e, k);
              series.x.push_back(cfg.target_truncation[it]);
              series.y.push_back(coverage_plot ? c.coverage : c.relative_bias);
            }
            panel.series.push_back(std::move(series));
          }
          panels.push_back(std::move(panel));
        }
      const std::string metric = coverage_plot ? "coverage" : "relative bias";
      const std::string fname = std::string(coverage_plot ? "coverage_" : "bias_") +
                                to_string(e) + ".svg";
      write_text_atomic(
          (fs::path(out_dir) / fname).string(),
          svg_panel_plot(std::string(to_string(e)) + ": " + metric,
                         "P(Y > E | trt = 0)", metric, panels,
                         static_cast<int>(cfg.beta_z.size()),
                         coverage_plot ? 0.95 : 0.0));
    }
  }
}

}  // namespace

}  // namespace ltsurv
