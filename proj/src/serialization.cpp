#include "tmdstat/serialization.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "tmdstat/errors.hpp"

namespace tmdstat::io {

namespace {

// JSON has no NaN; undefined values become null.
json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json number_array(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void put_double(std::ostream& os, double x) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  // strtod, unlike stod, returns subnormals instead of throwing on underflow
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || std::isnan(v) || std::isinf(v)) {
    throw Error("CSV line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_count(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    if (!s.empty() && s.front() == '-') throw std::invalid_argument(s);
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("CSV line " + std::to_string(line) + ": not a nonnegative integer: '" + s + "'");
  }
}

// Field readers for config validation. Every failure names its JSON pointer.

double get_real(const json& obj, const std::string& key, const std::string& ptr, double lo, double hi,
                bool lo_open, bool hi_open, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  const std::string p = ptr + "/" + key;
  if (!v.is_number()) throw ConfigError(p, "expected a number");
  const double x = v.get<double>();
  const bool lo_ok = lo_open ? x > lo : x >= lo;
  const bool hi_ok = hi_open ? x < hi : x <= hi;
  if (!lo_ok || !hi_ok) {
    std::ostringstream msg;
    msg << "value " << x << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << (hi_open ? ")" : "]");
    throw ConfigError(p, msg.str());
  }
  return x;
}

std::uint64_t get_uint(const json& obj, const std::string& key, const std::string& ptr, std::uint64_t lo,
                       std::uint64_t hi, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  const std::string p = ptr + "/" + key;
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(p, "expected a nonnegative integer");
  }
  const auto x = v.get<std::uint64_t>();
  if (x < lo || x > hi) {
    throw ConfigError(p, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return x;
}

void reject_unknown(const json& obj, const std::string& ptr, std::initializer_list<const char*> known) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(ptr + "/" + key, "unknown field");
  }
}

HeraldConfig herald_from_json(const json& j, const std::string& ptr) {
  if (!j.is_object()) throw ConfigError(ptr, "expected an object");
  reject_unknown(j, ptr, {"kind", "k", "eta_trigger", "dark_click_prob"});
  HeraldConfig h;
  if (j.contains("kind")) {
    if (!j.at("kind").is_string()) throw ConfigError(ptr + "/kind", "expected a string");
    try {
      h.kind = trigger_kind_from_string(j.at("kind").get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(ptr + "/kind", e.what());
    }
  }
  h.k = static_cast<int>(get_uint(j, "k", ptr, 0, 64, 1));
  h.eta_trigger = get_real(j, "eta_trigger", ptr, 0.0, 1.0, false, false, h.eta_trigger);
  h.dark_click_prob = get_real(j, "dark_click_prob", ptr, 0.0, 1.0, false, true, h.dark_click_prob);
  return h;
}

}  // namespace

json to_json(const PhotonDistribution& p) { return number_array(p.probs()); }

PhotonDistribution distribution_from_json(const json& j) {
  const json& arr = j.is_object() ? j.at("rho") : j;
  if (!arr.is_array() || arr.empty()) throw Error("distribution must be a nonempty array of numbers");
  std::vector<double> v;
  for (const auto& x : arr) {
    if (!x.is_number()) throw Error("distribution entries must be numbers");
    v.push_back(x.get<double>());
  }
  for (double x : v) {
    if (x < 0.0) return PhotonDistribution::quasi(std::move(v));
  }
  return PhotonDistribution::from_probs(std::move(v));
}

void write_distribution_column_csv(std::ostream& os, const PhotonDistribution& p) {
  os << "rho_n\n";
  for (double x : p.probs()) {
    put_double(os, x);
    os << '\n';
  }
}

void write_distribution_csv(std::ostream& os, std::span<const double> rho) {
  os << "n,rho\n";
  for (std::size_t n = 0; n < rho.size(); ++n) {
    os << n << ',';
    put_double(os, rho[n]);
    os << '\n';
  }
}

PhotonDistribution read_distribution_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> v;
  bool two_column = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto cells = split_csv_line(line);
    if (cells.empty() || (cells.size() == 1 && cells[0].empty())) continue;
    if (lineno == 1 && (cells[0] == "n" || cells[0] == "rho_n")) {
      two_column = cells.size() == 2;
      continue;
    }
    if (two_column) {
      if (cells.size() != 2) throw Error("CSV line " + std::to_string(lineno) + ": expected n,rho");
      const auto n = parse_count(cells[0], lineno);
      if (n != v.size()) throw Error("CSV line " + std::to_string(lineno) + ": photon numbers must be 0, 1, 2, ...");
      v.push_back(parse_double(cells[1], lineno));
    } else {
      v.push_back(parse_double(cells.back(), lineno));
    }
  }
  if (v.empty()) throw InsufficientDataError("distribution CSV has no rows");
  for (double x : v) {
    if (x < 0.0) return PhotonDistribution::quasi(std::move(v));
  }
  return PhotonDistribution::from_probs(std::move(v));
}

json to_json(const LossMatrix& l) {
  json j;
  j["kind"] = "loss";
  j["eta"] = l.eta;
  j["n_max"] = l.entries.cols() - 1;
  j["entries"] = matrix_rows(l.entries);
  return j;
}

json to_json(const ConvolutionMatrix& c) {
  json j;
  j["kind"] = "convolution";
  j["bin_probs"] = c.bin_probs;
  j["n_max"] = c.n_max();
  j["entries"] = matrix_rows(c.entries);
  return j;
}

json to_json(const TransferMatrix& t) {
  json j;
  j["kind"] = "transfer";
  j["entries"] = matrix_rows(t.entries);
  return j;
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
  os << "row";
  for (Eigen::Index c = 0; c < m.cols(); ++c) os << ",c" << c;
  os << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    os << r;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << ',';
      put_double(os, m(r, c));
    }
    os << '\n';
  }
}

json to_json(const CountHistogram& h) {
  json j;
  j["trigger"] = trigger_label_name(h.trigger);
  j["trigger_label"] = h.trigger;
  j["total"] = h.total();
  j["counts"] = h.counts;
  return j;
}

CountHistogram histogram_from_json(const json& j) {
  CountHistogram h;
  const json& counts = j.is_object() ? j.at("counts") : j;
  if (!counts.is_array()) throw Error("histogram counts must be an array");
  for (const auto& c : counts) {
    if (!c.is_number_unsigned() && !(c.is_number_integer() && c.get<std::int64_t>() >= 0)) {
      throw Error("histogram counts must be nonnegative integers");
    }
    h.counts.push_back(c.get<std::uint64_t>());
  }
  if (j.is_object() && j.contains("trigger_label")) h.trigger = j.at("trigger_label").get<int>();
  return h;
}

void write_histogram_csv(std::ostream& os, const CountHistogram& h) {
  os << "clicks,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) os << k << ',' << h.counts[k] << '\n';
}

CountHistogram read_histogram_csv(std::istream& is, TriggerLabel trigger) {
  CountHistogram h;
  h.trigger = trigger;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto cells = split_csv_line(line);
    if (cells.empty() || (cells.size() == 1 && cells[0].empty())) continue;
    if (lineno == 1 && cells[0] == "clicks") continue;
    if (cells.size() != 2) throw Error("CSV line " + std::to_string(lineno) + ": expected clicks,count");
    const auto k = parse_count(cells[0], lineno);
    if (k != h.counts.size()) throw Error("CSV line " + std::to_string(lineno) + ": click numbers must be 0, 1, 2, ...");
    h.counts.push_back(parse_count(cells[1], lineno));
  }
  if (h.counts.empty()) throw InsufficientDataError("histogram CSV has no rows");
  return h;
}

json to_json(const EfficiencyEstimate& e) {
  json j;
  j["order"] = to_string(e.order);
  j["defined"] = e.defined;
  j["eta_hat"] = number(e.eta_hat);
  j["std_err"] = number(e.std_err);
  if (!e.diagnostic.empty()) j["diagnostic"] = e.diagnostic;
  if (e.order == EstimatorOrder::single_trigger) j["residual"] = number(e.residual);
  if (e.order == EstimatorOrder::average) {
    j["consistent"] = e.consistent;
    j["spread"] = number(e.spread);
  }
  return j;
}

json to_json(const CalibrationReport& r) {
  json j;
  j["trigger"] = trigger_label_name(r.trigger);
  j["total"] = r.total;
  json est = json::array();
  for (const auto& e : r.estimates) est.push_back(to_json(e));
  j["estimates"] = std::move(est);
  j["weighted_average"] = to_json(r.weighted);
  j["plain_average"] = to_json(r.plain);
  j["consistency"] = {{"consistent", r.consistency.consistent},
                      {"spread", number(r.consistency.spread)},
                      {"combined_std_err", number(r.consistency.combined_std_err)},
                      {"sigma_threshold", r.sigma_threshold}};
  j["resolved"] = number_array(r.resolved);
  j["resolved_negative"] = r.resolved_negative;
  return j;
}

json to_json(const InversionResult& r) {
  json j;
  j["method"] = to_string(r.method);
  j["eta"] = r.eta;
  j["rho_hat"] = to_json(r.rho_hat);
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["negativity_flag"] = r.negativity_flag;
  j["min_entry"] = r.min_entry;
  j["condition_number"] = number(r.condition_number);
  j["log_likelihood_trace"] = number_array(r.log_likelihood_trace);
  return j;
}

namespace {
json to_json(const QValue& q) {
  json j;
  j["q"] = q.q ? json(*q.q) : json(nullptr);
  j["negative"] = q.negative;
  j["tol"] = q.tol;
  if (!q.error.empty()) j["error"] = q.error;
  return j;
}
}  // namespace

json to_json(const NonclassicalityReport& r) {
  json j;
  j["detected_q"] = to_json(r.detected);
  j["inferred_q"] = to_json(r.inferred);
  j["b_values"] = r.b_values;
  j["detected_b_values"] = r.detected_b_values;
  j["tol"] = r.tol;
  j["p_negativity_witnessed"] = r.p_negativity_witnessed;
  return j;
}

void write_b_sweep_csv(std::ostream& os, const std::vector<double>& b) {
  os << "n,B\n";
  for (std::size_t n = 0; n < b.size(); ++n) {
    os << n << ',';
    put_double(os, b[n]);
    os << '\n';
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["lambda"] = c.lambda;
  j["herald"] = {{"kind", to_string(c.herald.kind)},
                 {"k", c.herald.k},
                 {"eta_trigger", c.herald.eta_trigger},
                 {"dark_click_prob", c.herald.dark_click_prob}};
  j["splitter_ratio"] = c.splitter_ratio;
  j["eta_signal"] = c.eta_signal;
  j["extra_transmission"] = c.extra_transmission;
  j["bins"] = c.bins;
  if (c.contaminant) {
    j["contaminant"] = {{"kind", to_string(c.contaminant->kind)}, {"mean", c.contaminant->mean}};
  } else {
    j["contaminant"] = nullptr;
  }
  j["pulses"] = c.pulses;
  j["seed"] = c.seed;
  j["chunk_pulses"] = c.chunk_pulses;
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, const std::string& base) {
  if (!j.is_object()) throw ConfigError(base.empty() ? "/" : base, "expected an object");
  reject_unknown(j, base,
                 {"lambda", "herald", "splitter_ratio", "eta_signal", "extra_transmission", "bins", "contaminant",
                  "pulses", "seed", "chunk_pulses"});
  ExperimentConfig c;
  c.lambda = get_real(j, "lambda", base, 0.0, 1.0, false, true, c.lambda);
  if (j.contains("herald")) c.herald = herald_from_json(j.at("herald"), base + "/herald");
  c.splitter_ratio = get_real(j, "splitter_ratio", base, 0.0, 1.0, true, true, c.splitter_ratio);
  c.eta_signal = get_real(j, "eta_signal", base, 0.0, 1.0, false, false, c.eta_signal);
  c.extra_transmission = get_real(j, "extra_transmission", base, 0.0, 1.0, true, false, c.extra_transmission);

  if (j.contains("bins")) {
    const json& b = j.at("bins");
    const std::string p = base + "/bins";
    if (b.is_number_integer()) {
      const auto n = b.get<std::int64_t>();
      if (n < 1 || n > 64) throw ConfigError(p, "bin count must lie in [1, 64]");
      c.bins = uniform_bins(static_cast<int>(n));
    } else if (b.is_array()) {
      if (b.empty() || b.size() > 64) throw ConfigError(p, "need between 1 and 64 bin probabilities");
      c.bins.clear();
      double total = 0.0;
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (!b[i].is_number() || !(b[i].get<double>() > 0.0)) {
          throw ConfigError(p + "/" + std::to_string(i), "bin probability must be a positive number");
        }
        c.bins.push_back(b[i].get<double>());
        total += c.bins.back();
      }
      if (std::abs(total - 1.0) > 1e-9) throw ConfigError(p, "bin probabilities must sum to 1");
    } else {
      throw ConfigError(p, "expected a bin count or an array of bin probabilities");
    }
  }

  if (j.contains("contaminant") && !j.at("contaminant").is_null()) {
    const json& cj = j.at("contaminant");
    const std::string p = base + "/contaminant";
    if (!cj.is_object()) throw ConfigError(p, "expected an object or null");
    reject_unknown(cj, p, {"kind", "mean"});
    Contaminant cont;
    if (cj.contains("kind")) {
      const json& k = cj.at("kind");
      if (!k.is_string()) throw ConfigError(p + "/kind", "expected a string");
      const auto s = k.get<std::string>();
      if (s == "coherent") {
        cont.kind = Contaminant::Kind::coherent;
      } else if (s == "thermal") {
        cont.kind = Contaminant::Kind::thermal;
      } else {
        throw ConfigError(p + "/kind", "unknown contaminant kind '" + s + "' (coherent, thermal)");
      }
    }
    if (!cj.contains("mean")) throw ConfigError(p + "/mean", "required");
    cont.mean = get_real(cj, "mean", p, 0.0, 100.0, false, false, 0.0);
    c.contaminant = cont;
  }

  c.pulses = get_uint(j, "pulses", base, 1, kMaxPulses, c.pulses);
  c.seed = get_uint(j, "seed", base, 0, std::numeric_limits<std::uint64_t>::max(), c.seed);
  c.chunk_pulses = get_uint(j, "chunk_pulses", base, 1, kMaxPulses, c.chunk_pulses);

  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(base.empty() ? "/" : base, e.what());
  }
  return c;
}

json to_json(const SimulationOutput& s) {
  json j;
  j["seed"] = s.seed;
  j["pulses_run"] = s.pulses_run;
  j["herald_count"] = s.herald_count;
  j["rng"] = s.rng;
  json h = json::array();
  for (const auto& [label, hist] : s.histograms) h.push_back(to_json(hist));
  j["histograms"] = std::move(h);
  j["config_echo"] = to_json(s.config_echo);
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << contents;
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace tmdstat::io
