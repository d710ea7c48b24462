#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "tmdstat/pipeline.hpp"
#include "tmdstat/serialization.hpp"

namespace tmdstat::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

struct Logger {
  std::ostream* err;
  Level level = Level::warn;

  void log(Level l, const std::string& msg) const {
    if (static_cast<int>(l) > static_cast<int>(level)) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    *err << "tmdstat: " << names[static_cast<int>(l)] << ": " << msg << '\n';
  }
};

Level level_from_env() {
  const char* v = std::getenv("TMDSTAT_LOG_LEVEL");
  if (!v) return Level::warn;
  const std::string s = v;
  if (s == "error") return Level::error;
  if (s == "info") return Level::info;
  if (s == "debug") return Level::debug;
  return Level::warn;
}

fs::path resolve_out_dir(const std::string& flag) {
  fs::path dir = ".";
  if (!flag.empty()) {
    dir = flag;
  } else if (const char* env = std::getenv("TMDSTAT_OUT_DIR"); env && *env) {
    dir = env;
  }
  fs::create_directories(dir);
  return dir;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_json(const fs::path& p, const json& j) { io::write_file(p.string(), dump(j)); }

template <class F>
void write_stream(const fs::path& p, F&& f) {
  std::ostringstream os;
  f(os);
  io::write_file(p.string(), os.str());
}

json parse_json_file(const std::string& path) {
  const std::string text = io::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", "'" + path + "' is not valid JSON: " + e.what());
  }
}

bool has_extension(const std::string& path, const char* ext) { return fs::path(path).extension() == ext; }

CountHistogram load_histogram(const std::string& path, TriggerLabel label) {
  if (has_extension(path, ".json")) {
    json j = parse_json_file(path);
    // histograms.json written by `simulate` is an array; pick the matching label.
    if (j.is_object() && j.contains("histograms")) j = j.at("histograms");
    if (j.is_array() && !j.empty() && j.front().is_object()) {
      for (const auto& h : j) {
        if (h.value("trigger_label", kUnconditioned) == label) return io::histogram_from_json(h);
      }
      throw DomainError("'" + path + "' has no histogram for trigger " + trigger_label_name(label));
    }
    CountHistogram h = io::histogram_from_json(j);
    if (h.trigger == kUnconditioned) h.trigger = label;
    if (h.trigger != label) {
      throw DomainError("histogram trigger " + trigger_label_name(h.trigger) + " does not match --trigger (" +
                        trigger_label_name(label) + ")");
    }
    return h;
  }
  std::istringstream is(io::read_file(path));
  return io::read_histogram_csv(is, label);
}

std::vector<double> bins_from_flags(int bins, const std::vector<double>& bin_probs) {
  if (!bin_probs.empty()) {
    double total = 0.0;
    for (double q : bin_probs) {
      if (!(q > 0.0)) throw DomainError("--bin-probs entries must be positive");
      total += q;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("--bin-probs must sum to 1");
    return bin_probs;
  }
  if (bins < 1 || bins > 64) throw DomainError("--bins must lie in [1, 64]");
  return uniform_bins(bins);
}

void check_bins_match(const CountHistogram& h, const std::vector<double>& bins) {
  if (h.counts.size() != bins.size() + 1) {
    throw ShapeError("histogram has " + std::to_string(h.counts.size()) + " click outcomes but the detector has " +
                     std::to_string(bins.size()) + " bins (expected " + std::to_string(bins.size() + 1) + ")");
  }
}

TriggerLabel label_for(const std::string& trigger, int k) {
  HeraldConfig h;
  h.kind = trigger_kind_from_string(trigger);
  h.k = k;
  return h.label();
}

std::string hint_for(const std::exception& e) {
  if (dynamic_cast<const ConditioningError*>(&e)) {
    return "hint: the C-correction is ill-conditioned; use --method em, fewer bins, or raise --max-condition";
  }
  if (dynamic_cast<const TruncationError*>(&e)) return "hint: raise --n-max or lower lambda";
  if (dynamic_cast<const ComplexityError*>(&e)) return "hint: use uniform bins or at most 16 non-uniform bins";
  if (dynamic_cast<const InsufficientDataError*>(&e)) return "hint: the input has no counts";
  return {};
}

void report_warnings(const Logger& log, const std::vector<Warning>& ws) {
  for (const auto& w : ws) log.log(Level::warn, w.code + ": " + w.message);
}

// Common flags for commands reading a simulation config.
struct RunFlags {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> pulses;
  int threads = 1;
  bool strict = false;
};

PipelineConfig load_pipeline_config(const RunFlags& f) {
  PipelineConfig c = pipeline_config_from_json(parse_json_file(f.config));
  if (f.seed) c.experiment.seed = *f.seed;
  if (f.pulses) {
    c.experiment.pulses = *f.pulses;
    try {
      c.experiment.validate();
    } catch (const DomainError& e) {
      throw ConfigError("/pulses", e.what());
    }
  }
  return c;
}

int cmd_simulate(const RunFlags& f, std::ostream& out, const Logger& log) {
  const PipelineConfig cfg = load_pipeline_config(f);
  const fs::path dir = resolve_out_dir(f.out_dir);
  log.log(Level::info, "simulating " + std::to_string(cfg.experiment.pulses) + " pulses");
  const SimulationOutput sim = run(cfg.experiment, f.threads);
  const std::string ts = utc_timestamp();

  json hists = json::array();
  for (const auto& [label, h] : sim.histograms) {
    hists.push_back(io::to_json(h));
    const std::string name = "histogram_t" + (label < 0 ? std::string("u") : std::to_string(label)) + ".csv";
    write_stream(dir / name, [&](std::ostream& os) { io::write_histogram_csv(os, h); });
  }
  json hj;
  hj["histograms"] = std::move(hists);
  hj["provenance"] = provenance(sim.seed, ts);
  write_json(dir / "histograms.json", hj);

  json meta = io::to_json(sim);
  meta.erase("histograms");
  const CountHistogram& h = sim.heralded();
  meta["detected_mean"] = h.total() ? json(ClickDistribution::empirical(h).mean()) : json(nullptr);
  meta["provenance"] = provenance(sim.seed, ts);
  write_json(dir / "simulation.json", meta);

  out << "heralds " << sim.herald_count << " of " << sim.pulses_run << " pulses";
  if (h.total()) out << ", detected mean " << ClickDistribution::empirical(h).mean();
  out << "\nwrote " << (dir / "histograms.json").string() << "\n";
  if (h.total() == 0) log.log(Level::warn, "empty_herald: no heralded events");
  return kExitOk;
}

struct CalibrateFlags {
  std::string histogram;
  std::string trigger = "single_apd";
  int k = 1;
  int bins = kDefaultBins;
  std::vector<double> bin_probs;
  double sigma = kDefaultSigmaThreshold;
  std::string out_dir;
  bool strict = false;
};

int cmd_calibrate(const CalibrateFlags& f, std::ostream& out, const Logger& log) {
  const TriggerLabel label = label_for(f.trigger, f.k);
  const auto bins = bins_from_flags(f.bins, f.bin_probs);
  const CountHistogram h = load_histogram(f.histogram, label);
  check_bins_match(h, bins);
  const ConvolutionMatrix c = convolution_matrix(bins, static_cast<int>(bins.size()));
  const CalibrationReport r = calibrate(h, c, f.sigma);
  const auto warnings = calibration_warnings(r);
  report_warnings(log, warnings);

  const fs::path dir = resolve_out_dir(f.out_dir);
  json j = io::to_json(r);
  j["provenance"] = provenance(0, utc_timestamp());
  j["provenance"]["seed"] = nullptr;
  j["provenance"]["input"] = f.histogram;
  write_json(dir / "calibration.json", j);

  for (const auto& e : r.estimates) {
    out << to_string(e.order) << ": ";
    if (e.defined) {
      out << e.eta_hat << " +- " << e.std_err << "\n";
    } else {
      out << "undefined (" << e.diagnostic << ")\n";
    }
  }
  out << "weighted average: " << r.weighted.eta_hat << " +- " << r.weighted.std_err << "\n";
  out << "consistent: " << (r.consistency.consistent ? "yes" : "no") << "\n";

  const bool strict_hit = std::any_of(warnings.begin(), warnings.end(), [](const Warning& w) { return w.strict; });
  return f.strict && strict_hit ? kExitWarning : kExitOk;
}

struct InvertFlags {
  std::string histogram;
  std::optional<double> eta;
  std::string method = "em";
  std::string trigger;
  int k = 1;
  int bins = kDefaultBins;
  std::vector<double> bin_probs;
  int n_max = kDefaultNMax;
  double tol = EmOptions{}.tol;
  long max_iter = EmOptions{}.max_iter;
  double max_condition = kDefaultMaxCondition;
  std::string out_dir;
  bool strict = false;
};

int cmd_invert(const InvertFlags& f, std::ostream& out, const Logger& log) {
  if (!f.eta || !(*f.eta > 0.0 && *f.eta <= 1.0)) {
    throw DomainError("--eta must lie in (0, 1]; got " + (f.eta ? std::to_string(*f.eta) : std::string("nothing")));
  }
  const InversionMethod method = inversion_method_from_string(f.method);
  const auto bins = bins_from_flags(f.bins, f.bin_probs);
  const TriggerLabel label = f.trigger.empty() ? kUnconditioned : label_for(f.trigger, f.k);
  CountHistogram h = load_histogram(f.histogram, label);
  check_bins_match(h, bins);
  if (h.total() == 0) throw InsufficientDataError("histogram '" + f.histogram + "' is empty");

  EmOptions opts;
  opts.n_max = f.n_max;
  opts.tol = f.tol;
  opts.max_iter = f.max_iter;
  const ConvolutionMatrix c = convolution_matrix(bins, f.n_max);
  const ClickDistribution clicks = ClickDistribution::empirical(h);
  const InversionResult r = method == InversionMethod::em
                                ? em_invert(h, *f.eta, c, opts)
                                : direct_invert(clicks, *f.eta, c, {f.max_condition, false});

  std::vector<Warning> warnings;
  if (r.negativity_flag) {
    std::ostringstream msg;
    msg << "reconstruction has negative entries (min " << r.min_entry << ")";
    warnings.push_back({"negativity", msg.str(), true});
  }
  if (method == InversionMethod::em && !r.converged) {
    warnings.push_back({"not_converged", "EM reached max_iter", false});
  }
  report_warnings(log, warnings);

  const fs::path dir = resolve_out_dir(f.out_dir);
  json j = io::to_json(r);
  j.erase("log_likelihood_trace");
  j["trace_length"] = r.log_likelihood_trace.size();
  j["monotone"] = is_monotone(r.log_likelihood_trace);
  j["provenance"] = provenance(0, utc_timestamp());
  j["provenance"]["seed"] = nullptr;
  j["provenance"]["input"] = f.histogram;
  write_json(dir / "inversion.json", j);
  write_stream(dir / "rho_hat.csv", [&](std::ostream& os) { io::write_distribution_csv(os, r.rho_hat.probs()); });
  write_stream(dir / "likelihood_trace.csv", [&](std::ostream& os) {
    os << "iteration,log_likelihood\n";
    os.precision(17);
    for (std::size_t i = 0; i < r.log_likelihood_trace.size(); ++i) os << i << ',' << r.log_likelihood_trace[i] << '\n';
  });
  // Detected click statistics next to a Poisson law of the same mean.
  write_stream(dir / "clicks_plot.csv", [&](std::ostream& os) {
    const double mu = clicks.mean();
    os << "k,p_detected,poisson_reference\n";
    os.precision(17);
    for (std::size_t k = 0; k < clicks.size(); ++k) {
      const double kk = static_cast<double>(k);
      const double poisson = mu > 0.0 ? std::exp(kk * std::log(mu) - mu - std::lgamma(kk + 1.0)) : (k == 0 ? 1.0 : 0.0);
      os << k << ',' << clicks[k] << ',' << poisson << '\n';
    }
  });

  out << "method " << to_string(r.method) << ", eta " << r.eta;
  if (method == InversionMethod::em) out << ", iterations " << r.iterations << ", converged " << (r.converged ? "yes" : "no");
  out << "\n";
  for (std::size_t n = 0; n < std::min<std::size_t>(r.rho_hat.size(), 6); ++n) {
    out << "rho(" << n << ") = " << r.rho_hat[n] << "\n";
  }
  const bool strict_hit = std::any_of(warnings.begin(), warnings.end(), [](const Warning& w) { return w.strict; });
  return f.strict && strict_hit ? kExitWarning : kExitOk;
}

struct AnalyzeFlags {
  std::string rho;
  std::string histogram;
  double tol = kDefaultWitnessTol;
  std::string out_dir;
};

int cmd_analyze(const AnalyzeFlags& f, std::ostream& out, const Logger&) {
  PhotonDistribution rho = [&] {
    if (has_extension(f.rho, ".json")) {
      json j = parse_json_file(f.rho);
      if (j.is_object() && j.contains("rho_hat")) j = j.at("rho_hat");
      return io::distribution_from_json(j);
    }
    std::istringstream is(io::read_file(f.rho));
    return io::read_distribution_csv(is);
  }();

  NonclassicalityReport r;
  if (!f.histogram.empty()) {
    CountHistogram h = load_histogram(f.histogram, kUnconditioned);
    r = report(rho, ClickDistribution::empirical(h), f.tol);
  } else {
    r.tol = f.tol;
    r.b_values = b_sweep(rho);
    r.p_negativity_witnessed =
        !r.b_values.empty() && *std::min_element(r.b_values.begin(), r.b_values.end()) < -f.tol;
    r.detected.error = "no click histogram given";
    r.inferred.tol = f.tol;
    try {
      r.inferred.q = mandel_q(rho);
      r.inferred.negative = *r.inferred.q < -f.tol;
    } catch (const DomainError& e) {
      r.inferred.error = e.what();
    }
  }

  const fs::path dir = resolve_out_dir(f.out_dir);
  json j = io::to_json(r);
  j["provenance"] = provenance(0, utc_timestamp());
  j["provenance"]["seed"] = nullptr;
  j["provenance"]["input"] = f.rho;
  write_json(dir / "nonclassicality.json", j);
  write_stream(dir / "b_sweep.csv", [&](std::ostream& os) { io::write_b_sweep_csv(os, r.b_values); });

  auto show = [&](const char* name, const QValue& q) {
    out << name << ": ";
    if (q.q) {
      out << *q.q << (q.negative ? " (nonclassical)" : "") << "\n";
    } else {
      out << "undefined (" << q.error << ")\n";
    }
  };
  show("detected Q", r.detected);
  show("inferred Q", r.inferred);
  if (!r.b_values.empty()) out << "B(0) = " << r.b_values.front() << "\n";
  if (!r.detected_b_values.empty()) out << "B(0) on clicks = " << r.detected_b_values.front() << "\n";
  return kExitOk;
}

int cmd_pipeline(const RunFlags& f, std::ostream& out, const Logger& log) {
  const PipelineConfig cfg = load_pipeline_config(f);
  const fs::path dir = resolve_out_dir(f.out_dir);
  log.log(Level::info, "pipeline on " + std::to_string(cfg.experiment.pulses) + " pulses");
  const PipelineResult r = run_pipeline(cfg, f.threads);
  report_warnings(log, r.warnings);

  write_json(dir / "report.json", pipeline_report(cfg, r, utc_timestamp()));
  write_stream(dir / "histogram.csv", [&](std::ostream& os) { io::write_histogram_csv(os, r.simulation.heralded()); });
  if (r.em) {
    write_stream(dir / "rho_hat.csv", [&](std::ostream& os) { io::write_distribution_csv(os, r.em->rho_hat.probs()); });
  }
  if (r.nonclassicality) {
    write_stream(dir / "b_sweep.csv", [&](std::ostream& os) { io::write_b_sweep_csv(os, r.nonclassicality->b_values); });
  }

  out << "heralds " << r.simulation.herald_count << " of " << r.simulation.pulses_run << " pulses\n";
  if (r.calibration) {
    out << "eta (weighted) " << r.calibration->weighted.eta_hat << " +- " << r.calibration->weighted.std_err
        << ", consistent " << (r.calibration->consistency.consistent ? "yes" : "no") << "\n";
  }
  if (r.em && static_cast<std::size_t>(r.target_fock) < r.em->rho_hat.size()) {
    out << "rho(" << r.target_fock << ") = " << r.em->rho_hat[static_cast<std::size_t>(r.target_fock)];
    if (r.fidelity) out << ", fidelity " << *r.fidelity;
    out << "\n";
  }
  if (r.nonclassicality) {
    const auto& nc = *r.nonclassicality;
    if (nc.detected.q) out << "detected Q " << *nc.detected.q << "\n";
    if (nc.inferred.q) out << "inferred Q " << *nc.inferred.q << "\n";
  }
  out << "wrote " << (dir / "report.json").string() << "\n";
  return f.strict && r.has_strict_warning() ? kExitWarning : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heralded photon statistics through a time-multiplexed detector", "tmdstat"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));

  RunFlags sim_flags;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo simulation of a configured experiment");
  sim->add_option("--config", sim_flags.config, "experiment config (JSON)")->required();
  sim->add_option("--out-dir", sim_flags.out_dir, "output directory (default $TMDSTAT_OUT_DIR or .)");
  sim->add_option("--seed", sim_flags.seed, "override the config seed");
  sim->add_option("--pulses", sim_flags.pulses, "override the pulse count");
  sim->add_option("--threads", sim_flags.threads, "worker threads")->check(CLI::Range(1, 1024));

  CalibrateFlags cal_flags;
  auto* cal = app.add_subcommand("calibrate", "Signal efficiency from a conditional click histogram");
  cal->add_option("--histogram", cal_flags.histogram, "histogram (CSV clicks,count or JSON)")->required();
  cal->add_option("--trigger", cal_flags.trigger, "single_apd | double_apd_coincidence | ideal_k_resolving");
  cal->add_option("--k", cal_flags.k, "photon number for the ideal trigger");
  cal->add_option("--bins", cal_flags.bins, "number of uniform detector bins");
  cal->add_option("--bin-probs", cal_flags.bin_probs, "explicit bin probabilities")->delimiter(',');
  cal->add_option("--sigma", cal_flags.sigma, "consistency threshold in standard errors");
  cal->add_option("--out-dir", cal_flags.out_dir, "output directory");
  cal->add_flag("--strict", cal_flags.strict, "exit 1 on inconsistent estimates");

  InvertFlags inv_flags;
  auto* inv = app.add_subcommand("invert", "Reconstruct the photon-number distribution");
  inv->add_option("--histogram", inv_flags.histogram, "histogram (CSV clicks,count or JSON)")->required();
  inv->add_option("--eta", inv_flags.eta, "signal efficiency")->required();
  inv->add_option("--method", inv_flags.method, "em | direct");
  inv->add_option("--trigger", inv_flags.trigger, "trigger kind, to select a histogram from JSON");
  inv->add_option("--k", inv_flags.k, "photon number for the ideal trigger");
  inv->add_option("--bins", inv_flags.bins, "number of uniform detector bins");
  inv->add_option("--bin-probs", inv_flags.bin_probs, "explicit bin probabilities")->delimiter(',');
  inv->add_option("--n-max", inv_flags.n_max, "photon-number truncation")->check(CLI::Range(1, 200));
  inv->add_option("--tol", inv_flags.tol, "EM relative log-likelihood gain to stop at");
  inv->add_option("--max-iter", inv_flags.max_iter, "EM iteration cap");
  inv->add_option("--max-condition", inv_flags.max_condition, "refuse direct inversion above this condition number");
  inv->add_option("--out-dir", inv_flags.out_dir, "output directory");
  inv->add_flag("--strict", inv_flags.strict, "exit 1 on negativity");

  AnalyzeFlags an_flags;
  auto* an = app.add_subcommand("analyze", "Nonclassicality witnesses");
  an->add_option("--rho", an_flags.rho, "photon distribution (CSV n,rho or JSON)")->required();
  an->add_option("--histogram", an_flags.histogram, "click histogram for the detected Q");
  an->add_option("--tol", an_flags.tol, "witness tolerance");
  an->add_option("--out-dir", an_flags.out_dir, "output directory");

  RunFlags pipe_flags;
  auto* pipe = app.add_subcommand("pipeline", "simulate, calibrate, invert and analyze in one run");
  pipe->add_option("--config", pipe_flags.config, "experiment config (JSON)")->required();
  pipe->add_option("--out-dir", pipe_flags.out_dir, "output directory");
  pipe->add_option("--seed", pipe_flags.seed, "override the config seed");
  pipe->add_option("--pulses", pipe_flags.pulses, "override the pulse count");
  pipe->add_option("--threads", pipe_flags.threads, "worker threads")->check(CLI::Range(1, 1024));
  pipe->add_flag("--strict", pipe_flags.strict, "exit 1 on inconsistency or negativity warnings");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  const Logger log{&err, level_from_env()};
  try {
    if (*sim) return cmd_simulate(sim_flags, out, log);
    if (*cal) return cmd_calibrate(cal_flags, out, log);
    if (*inv) return cmd_invert(inv_flags, out, log);
    if (*an) return cmd_analyze(an_flags, out, log);
    if (*pipe) return cmd_pipeline(pipe_flags, out, log);
  } catch (const ConfigError& e) {
    log.log(Level::error, std::string("invalid config at ") + e.what());
    return kExitUsage;
  } catch (const StageError& e) {
    log.log(Level::error, e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log.log(Level::error, e.what());
    if (const auto hint = hint_for(e); !hint.empty()) log.log(Level::error, hint);
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace tmdstat::cli
