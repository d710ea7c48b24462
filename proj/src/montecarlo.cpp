#include "tmdstat/montecarlo.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "tmdstat/errors.hpp"

namespace tmdstat {
namespace {

// Uniform doubles from raw 64-bit output; std::uniform_real_distribution is
// implementation-defined, and these streams must be reproducible everywhere.
class Uniform {
 public:
  explicit Uniform(std::mt19937_64& g) : g_(g) {}
  /// [0, 1)
  double half_open() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  /// (0, 1], safe for log()
  double positive() { return static_cast<double>((g_() >> 11) + 1) * 0x1.0p-53; }

 private:
  std::mt19937_64& g_;
};

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
  return std::mt19937_64(seq);
}

// Failures before the first success of a Bernoulli trial whose failure
// probability has natural log `log_fail` (< 0).
std::uint64_t geometric_failures(Uniform& u, double log_fail) {
  if (log_fail == -std::numeric_limits<double>::infinity()) return 0;
  const double g = std::floor(std::log(u.positive()) / log_fail);
  return g >= static_cast<double>(kMaxPulses) ? kMaxPulses : static_cast<std::uint64_t>(g);
}

// A pulse is "trivial" when it has no pair, no dark click and no contaminant
// photon. Trivial pulses cannot produce a signal click and (except for an
// ideal k=0 trigger) cannot herald, so runs of them are skipped with a single
// geometric draw. The first non-trivial component of an interesting pulse is
// chosen from its exact conditional law; later components are sampled
// unconditionally.
class PulseSampler {
 public:
  explicit PulseSampler(const ExperimentConfig& cfg) : cfg_(cfg) {
    const HeraldConfig& h = cfg.herald;
    pair_gain_ = cfg.lambda * cfg.lambda;
    log_pair_gain_ = std::log(pair_gain_);
    const bool uses_apds = h.kind != TriggerKind::ideal_k_resolving;
    const int apds = !uses_apds ? 0 : (h.kind == TriggerKind::double_apd_coincidence ? 2 : 1);

    if (pair_gain_ > 0.0) components_.push_back({Kind::pairs, pair_gain_});
    if (h.dark_click_prob > 0.0) {
      for (int a = 0; a < apds; ++a) components_.push_back({a == 0 ? Kind::dark_a : Kind::dark_b, h.dark_click_prob});
    }
    if (cfg.contaminant && cfg.contaminant->mean > 0.0) {
      const double mu = cfg.contaminant->mean;
      if (cfg.contaminant->kind == Contaminant::Kind::coherent) {
        components_.push_back({Kind::contaminant, -std::expm1(-mu)});
      } else {
        components_.push_back({Kind::contaminant, mu / (1.0 + mu)});
        log_thermal_ratio_ = std::log(mu / (1.0 + mu));
      }
    }
    // suffix sums of log P(trivial) give P(component i fires | some j >= i fires)
    double suffix = 0.0;
    select_prob_.assign(components_.size(), 1.0);
    for (std::size_t i = components_.size(); i-- > 0;) {
      suffix += std::log1p(-components_[i].p_nontrivial);
      const double any = -std::expm1(suffix);
      select_prob_[i] = any > 0.0 ? components_[i].p_nontrivial / any : 1.0;
    }
    log_all_trivial_ = suffix;

    double acc = 0.0;
    for (double q : cfg.bins) {
      acc += q;
      cumulative_bins_.push_back(acc);
    }
    cumulative_bins_.back() = 1.0;
    eta_ = cfg.signal_transmission();
    trivial_heralds_ = h.kind == TriggerKind::ideal_k_resolving && h.k == 0;
  }

  bool has_interesting_pulses() const { return !components_.empty(); }
  double log_all_trivial() const { return log_all_trivial_; }
  bool trivial_pulses_herald() const { return trivial_heralds_; }

  struct Outcome {
    bool heralded = false;
    int clicks = 0;
  };

  /// Samples one pulse conditioned on being non-trivial.
  Outcome interesting_pulse(Uniform& u) const {
    int pairs = 0, contaminant = 0;
    bool dark_a = false, dark_b = false;
    bool forced = true;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const Component& c = components_[i];
      bool nontrivial;
      if (forced) {
        nontrivial = u.half_open() < select_prob_[i];
        if (nontrivial) forced = false;
      } else {
        nontrivial = false;  // decided by the unconditional draw below
      }
      switch (c.kind) {
        case Kind::pairs:
          pairs = nontrivial ? 1 + sample_pairs(u) : (forced ? 0 : sample_pairs(u));
          break;
        case Kind::dark_a:
          dark_a = nontrivial || (!forced && u.half_open() < c.p_nontrivial);
          break;
        case Kind::dark_b:
          dark_b = nontrivial || (!forced && u.half_open() < c.p_nontrivial);
          break;
        case Kind::contaminant:
          contaminant = nontrivial ? sample_contaminant(u, true) : (forced ? 0 : sample_contaminant(u, false));
          break;
      }
    }
    return finish(u, pairs, contaminant, dark_a, dark_b);
  }

 private:
  enum class Kind { pairs, dark_a, dark_b, contaminant };
  struct Component {
    Kind kind;
    double p_nontrivial;
  };

  int sample_pairs(Uniform& u) const {
    return static_cast<int>(std::floor(std::log(u.positive()) / log_pair_gain_));
  }

  int sample_contaminant(Uniform& u, bool at_least_one) const {
    const double mu = cfg_.contaminant->mean;
    if (cfg_.contaminant->kind == Contaminant::Kind::thermal) {
      const int k = static_cast<int>(std::floor(std::log(u.positive()) / log_thermal_ratio_));
      return at_least_one ? k + 1 : k;
    }
    // Poisson by CDF inversion; conditioning on k >= 1 maps u above P(0).
    const double p0 = std::exp(-mu);
    double v = u.half_open();
    if (at_least_one) v = p0 + v * (1.0 - p0);
    int k = 0;
    double p = p0, cdf = p0;
    while (v >= cdf && k < 100000) {
      ++k;
      p *= mu / k;
      cdf += p;
      if (p == 0.0 && cdf <= v) break;
    }
    return k;
  }

  Outcome finish(Uniform& u, int pairs, int contaminant, bool dark_a, bool dark_b) const {
    const HeraldConfig& h = cfg_.herald;
    bool fired = false;
    switch (h.kind) {
      case TriggerKind::single_apd: {
        bool hit = dark_a;
        for (int i = 0; i < pairs && !hit; ++i) hit = u.half_open() < h.eta_trigger;
        fired = hit;
        break;
      }
      case TriggerKind::double_apd_coincidence: {
        bool a = dark_a, b = dark_b;
        const double to_a = h.eta_trigger * cfg_.splitter_ratio;
        for (int i = 0; i < pairs && !(a && b); ++i) {
          const double x = u.half_open();
          if (x < to_a) {
            a = true;
          } else if (x < h.eta_trigger) {
            b = true;
          }
        }
        fired = a && b;
        break;
      }
      case TriggerKind::ideal_k_resolving:
        fired = pairs == h.k;
        break;
    }
    Outcome out;
    if (!fired) return out;
    out.heralded = true;

    std::uint64_t occupied = 0;
    const int photons = pairs + contaminant;
    for (int i = 0; i < photons; ++i) {
      const double x = u.half_open();
      if (!(x < eta_)) continue;
      const double where = x / eta_;
      std::size_t bin = 0;
      while (bin + 1 < cumulative_bins_.size() && where >= cumulative_bins_[bin]) ++bin;
      occupied |= std::uint64_t{1} << bin;
    }
    out.clicks = std::popcount(occupied);
    return out;
  }

  const ExperimentConfig& cfg_;
  std::vector<Component> components_;
  std::vector<double> select_prob_;
  std::vector<double> cumulative_bins_;
  double pair_gain_ = 0.0;
  double log_pair_gain_ = 0.0;
  double log_thermal_ratio_ = 0.0;
  double log_all_trivial_ = 0.0;
  double eta_ = 1.0;
  bool trivial_heralds_ = false;
};

struct ChunkTally {
  std::vector<std::uint64_t> counts;
};

void run_chunk(const PulseSampler& sampler, std::uint64_t seed, std::uint64_t chunk, std::uint64_t pulses,
               ChunkTally& tally) {
  std::mt19937_64 gen = substream(seed, chunk);
  Uniform u(gen);
  std::uint64_t trivial = 0;
  if (!sampler.has_interesting_pulses()) {
    trivial = pulses;
  } else {
    std::uint64_t done = 0;
    while (done < pulses) {
      const std::uint64_t gap = geometric_failures(u, sampler.log_all_trivial());
      if (gap >= pulses - done) {
        trivial += pulses - done;
        break;
      }
      trivial += gap;
      done += gap + 1;
      const auto outcome = sampler.interesting_pulse(u);
      if (outcome.heralded) ++tally.counts[static_cast<std::size_t>(outcome.clicks)];
    }
  }
  if (sampler.trivial_pulses_herald()) tally.counts[0] += trivial;
}

}  // namespace

PhotonDistribution Contaminant::distribution(int n_max) const {
  return kind == Kind::coherent ? coherent(mean, n_max) : thermal(mean, n_max);
}

const char* to_string(Contaminant::Kind kind) { return kind == Contaminant::Kind::coherent ? "coherent" : "thermal"; }

void ExperimentConfig::validate() const {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("lambda must lie in [0, 1)");
  herald.validate();
  if (!(splitter_ratio > 0.0 && splitter_ratio < 1.0)) throw DomainError("splitter ratio must lie in (0, 1)");
  if (!(eta_signal >= 0.0 && eta_signal <= 1.0)) throw DomainError("signal efficiency outside [0, 1]");
  if (!(extra_transmission > 0.0 && extra_transmission <= 1.0)) throw DomainError("extra transmission outside (0, 1]");
  if (bins.empty() || bins.size() > 64) throw DomainError("detector needs between 1 and 64 bins");
  double total = 0.0;
  for (double q : bins) {
    if (!(q > 0.0)) throw DomainError("bin probabilities must be positive");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("bin probabilities must sum to 1");
  if (contaminant && !(contaminant->mean >= 0.0 && contaminant->mean <= 100.0)) {
    throw DomainError("contaminant mean must lie in [0, 100]");
  }
  if (pulses < 1) throw DomainError("pulses must be >= 1");
  if (pulses > kMaxPulses) throw DomainError("pulses exceed 2^62");
  if (chunk_pulses < 1) throw DomainError("chunk_pulses must be >= 1");
}

const CountHistogram& SimulationOutput::heralded() const { return histograms.at(config_echo.herald.label()); }

std::string rng_description() { return "mt19937_64, one substream per chunk seeded by seed_seq{seed, chunk index}"; }

SimulationOutput run(const ExperimentConfig& config, int threads) {
  config.validate();
  if (threads < 1) threads = 1;
  const PulseSampler sampler(config);
  const std::uint64_t chunks = (config.pulses + config.chunk_pulses - 1) / config.chunk_pulses;
  const std::size_t outcomes = config.bins.size() + 1;
  const auto workers = static_cast<std::uint64_t>(std::min<std::uint64_t>(static_cast<std::uint64_t>(threads), chunks));

  std::vector<ChunkTally> tallies(workers, ChunkTally{std::vector<std::uint64_t>(outcomes, 0)});
  auto work = [&](std::uint64_t w) {
    for (std::uint64_t c = w; c < chunks; c += workers) {
      const std::uint64_t first = c * config.chunk_pulses;
      const std::uint64_t n = std::min(config.chunk_pulses, config.pulses - first);
      run_chunk(sampler, config.seed, c, n, tallies[w]);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::uint64_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  SimulationOutput out;
  CountHistogram hist{std::vector<std::uint64_t>(outcomes, 0), config.herald.label()};
  for (const auto& t : tallies) {
    for (std::size_t k = 0; k < outcomes; ++k) hist.counts[k] += t.counts[k];
  }
  out.herald_count = hist.total();
  out.histograms.emplace(hist.trigger, std::move(hist));
  out.pulses_run = config.pulses;
  out.seed = config.seed;
  out.config_echo = config;
  out.rng = rng_description();
  return out;
}

SimulationOutput replay(std::uint64_t seed, ExperimentConfig config, int threads) {
  config.seed = seed;
  return run(config, threads);
}

AnalyticPrediction predict(const ExperimentConfig& config, int n_max) {
  config.validate();
  if (config.herald.kind == TriggerKind::double_apd_coincidence && std::abs(config.splitter_ratio - 0.5) > 1e-12) {
    throw DomainError("analytic heralding assumes a balanced trigger splitter");
  }
  ConditionalStats cond = herald(TwoModeSqueezedSource{config.lambda}, config.herald, n_max);
  PhotonDistribution signal = cond.signal_dist;
  if (config.contaminant && config.contaminant->mean > 0.0) {
    signal = mix(signal, config.contaminant->distribution(n_max), 0.0, MixMode::convolution);
  }
  AnalyticPrediction p;
  p.herald_rate = cond.herald_rate;
  p.clicks = forward_model(signal, config.signal_transmission(), config.bins);
  p.signal = std::move(signal);
  return p;
}

}  // namespace tmdstat
