#include "tmdstat/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include "tmdstat/detector_model.hpp"

#ifndef TMDSTAT_VERSION
#define TMDSTAT_VERSION "0.0.0"
#endif

namespace tmdstat {

using io::json;

const char* tool_version() { return TMDSTAT_VERSION; }

bool PipelineResult::has_strict_warning() const {
  for (const auto& w : warnings) {
    if (w.strict) return true;
  }
  return false;
}

AnalysisOptions analysis_options_from_json(const json& j, const std::string& ptr) {
  AnalysisOptions a;
  if (!j.is_object()) throw ConfigError(ptr, "expected an object");
  for (const auto& [key, v] : j.items()) {
    const std::string p = ptr + "/" + key;
    if (key == "n_max") {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 1 || v.get<std::int64_t>() > 200) {
        throw ConfigError(p, "expected an integer in [1, 200]");
      }
      a.em.n_max = v.get<int>();
    } else if (key == "em_tol") {
      if (!v.is_number() || v.get<double>() < 0.0) throw ConfigError(p, "expected a nonnegative number");
      a.em.tol = v.get<double>();
    } else if (key == "em_max_iter") {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 1) throw ConfigError(p, "expected a positive integer");
      a.em.max_iter = v.get<long>();
    } else if (key == "sigma_threshold") {
      if (!v.is_number() || !(v.get<double>() > 0.0)) throw ConfigError(p, "expected a positive number");
      a.sigma_threshold = v.get<double>();
    } else if (key == "target_fock") {
      if (v.is_null()) continue;
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(p, "expected a nonnegative integer");
      a.target_fock = v.get<int>();
    } else if (key == "max_condition") {
      if (!v.is_number() || !(v.get<double>() >= 1.0)) throw ConfigError(p, "expected a number >= 1");
      a.max_condition = v.get<double>();
    } else if (key == "direct_diagnostic") {
      if (!v.is_boolean()) throw ConfigError(p, "expected a boolean");
      a.direct_diagnostic = v.get<bool>();
    } else {
      throw ConfigError(p, "unknown field");
    }
  }
  return a;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("/", "expected an object");
  PipelineConfig c;
  json experiment = j;
  if (j.contains("analysis")) {
    c.analysis = analysis_options_from_json(j.at("analysis"));
    experiment.erase("analysis");
  }
  c.experiment = io::experiment_config_from_json(experiment);
  if (c.analysis.target_fock && *c.analysis.target_fock > c.analysis.em.n_max) {
    throw ConfigError("/analysis/target_fock", "exceeds n_max");
  }
  return c;
}

json to_json(const AnalysisOptions& a) {
  json j;
  j["n_max"] = a.em.n_max;
  j["em_tol"] = a.em.tol;
  j["em_max_iter"] = a.em.max_iter;
  j["sigma_threshold"] = a.sigma_threshold;
  j["target_fock"] = a.target_fock ? json(*a.target_fock) : json(nullptr);
  j["max_condition"] = a.max_condition;
  j["direct_diagnostic"] = a.direct_diagnostic;
  return j;
}

json to_json(const PipelineConfig& c) {
  json j = io::to_json(c.experiment);
  j["analysis"] = to_json(c.analysis);
  return j;
}

std::vector<Warning> calibration_warnings(const CalibrationReport& r) {
  std::vector<Warning> out;
  if (!r.consistency.consistent) {
    std::ostringstream msg;
    msg << "efficiency estimates disagree: spread " << r.consistency.spread << " exceeds " << r.sigma_threshold
        << " x " << r.consistency.combined_std_err << "; the correlated-source assumption may not hold";
    out.push_back({"inconsistent_efficiency", msg.str(), true});
  }
  for (const auto& e : r.estimates) {
    if (!e.defined) {
      out.push_back({"undefined_estimator", std::string(to_string(e.order)) + ": " + e.diagnostic, true});
    }
  }
  if (r.resolved_negative) {
    out.push_back({"negative_resolved_statistics", "C-corrected statistics contain negative entries", false});
  }
  return out;
}

namespace {

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, int threads) {
  PipelineResult r;
  const ExperimentConfig& ex = config.experiment;
  const AnalysisOptions& an = config.analysis;
  r.target_fock = an.target_fock.value_or(ex.herald.label());

  r.simulation = staged("simulate", [&] { return run(ex, threads); });
  const CountHistogram& hist = r.simulation.heralded();
  if (hist.total() == 0) {
    r.warnings.push_back({"empty_herald",
                          "no heralded events in " + std::to_string(r.simulation.pulses_run) +
                              " pulses; calibration, inversion and analysis were skipped",
                          false});
    return r;
  }

  const ConvolutionMatrix c = staged("calibrate", [&] { return convolution_matrix(ex.bins, an.em.n_max); });
  r.calibration = staged("calibrate", [&] { return calibrate(hist, c, an.sigma_threshold); });
  for (auto& w : calibration_warnings(*r.calibration)) r.warnings.push_back(std::move(w));

  const double eta = r.calibration->weighted.eta_hat;
  if (!r.calibration->weighted.defined || !(eta > 0.0 && eta <= 1.0)) {
    throw StageError("invert", "calibrated efficiency " + std::to_string(eta) + " is not usable for inversion");
  }

  r.em = staged("invert", [&] { return em_invert(hist, eta, c, an.em); });
  if (!r.em->converged) {
    r.warnings.push_back(
        {"not_converged", "EM stopped at max_iter = " + std::to_string(an.em.max_iter) + " before reaching tol", false});
  }
  if (an.direct_diagnostic) {
    try {
      r.direct = direct_invert(ClickDistribution::empirical(hist), eta, c, {an.max_condition, false});
      if (r.direct->negativity_flag) {
        std::ostringstream msg;
        msg << "direct inversion gives negative probabilities (min " << r.direct->min_entry
            << "); the assumed model may not describe the source";
        r.warnings.push_back({"negativity", msg.str(), true});
      }
    } catch (const Error& e) {
      r.direct_error = e.what();
    }
  }

  staged("analyze", [&] {
    if (r.target_fock <= r.em->rho_hat.n_max()) {
      r.fidelity = fidelity(r.em->rho_hat, fock(r.target_fock, r.em->rho_hat.n_max()));
    }
    r.nonclassicality = report(r.em->rho_hat, ClickDistribution::empirical(hist));
    return 0;
  });
  return r;
}

json provenance(std::uint64_t seed, const std::string& timestamp) {
  json p;
  p["seed"] = seed;
  p["schema_version"] = io::kSchemaVersion;
  p["tool"] = "tmdstat";
  p["tool_version"] = tool_version();
  p["rng"] = rng_description();
  p["generated_at"] = timestamp;
  return p;
}

json pipeline_report(const PipelineConfig& config, const PipelineResult& r, const std::string& timestamp) {
  json j;
  j["schema_version"] = io::kSchemaVersion;
  j["config_echo"] = to_json(config);

  const CountHistogram& hist = r.simulation.heralded();
  json sim;
  sim["pulses_run"] = r.simulation.pulses_run;
  sim["herald_count"] = r.simulation.herald_count;
  sim["herald_rate"] = r.simulation.pulses_run ? static_cast<double>(r.simulation.herald_count) /
                                                     static_cast<double>(r.simulation.pulses_run)
                                               : 0.0;
  sim["histogram"] = io::to_json(hist);
  if (hist.total() > 0) {
    const auto clicks = ClickDistribution::empirical(hist);
    sim["detected_mean"] = clicks.mean();
  } else {
    sim["detected_mean"] = nullptr;
  }
  j["simulation"] = std::move(sim);

  j["efficiency"] = r.calibration ? io::to_json(*r.calibration) : json(nullptr);

  if (r.em) {
    json inv;
    inv["eta_used"] = r.em->eta;
    inv["eta_source"] = "calibration.weighted_average";
    json em = io::to_json(*r.em);
    const auto& trace = r.em->log_likelihood_trace;
    em.erase("log_likelihood_trace");
    em["trace_length"] = trace.size();
    em["log_likelihood_final"] = trace.empty() ? json(nullptr) : json(trace.back());
    em["monotone"] = is_monotone(trace);
    inv["em"] = std::move(em);
    if (r.direct) {
      json d = io::to_json(*r.direct);
      d.erase("log_likelihood_trace");
      inv["direct"] = std::move(d);
    } else if (!r.direct_error.empty()) {
      inv["direct"] = {{"error", r.direct_error}};
    } else {
      inv["direct"] = nullptr;
    }
    inv["target_fock"] = r.target_fock;
    inv["fidelity"] = r.fidelity ? json(*r.fidelity) : json(nullptr);
    j["inversion"] = std::move(inv);
  } else {
    j["inversion"] = nullptr;
  }

  j["nonclassicality"] = r.nonclassicality ? io::to_json(*r.nonclassicality) : json(nullptr);

  json w = json::array();
  for (const auto& x : r.warnings) w.push_back({{"code", x.code}, {"message", x.message}, {"strict", x.strict}});
  j["warnings"] = std::move(w);
  j["provenance"] = provenance(config.experiment.seed, timestamp);
  return j;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace tmdstat
