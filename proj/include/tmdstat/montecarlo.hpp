#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tmdstat/detector_model.hpp"
#include "tmdstat/heralding.hpp"
#include "tmdstat/statistics.hpp"

namespace tmdstat {

/// Uncorrelated light added to the signal arm after the PBS, before signal loss.
struct Contaminant {
  enum class Kind { coherent, thermal };
  Kind kind = Kind::coherent;
  double mean = 0.0;

  /// Photon-number law of the contaminant, truncated at n_max.
  PhotonDistribution distribution(int n_max) const;
};

const char* to_string(Contaminant::Kind kind);

inline constexpr std::uint64_t kDefaultChunkPulses = std::uint64_t{1} << 22;
inline constexpr std::uint64_t kMaxPulses = std::uint64_t{1} << 62;

struct ExperimentConfig {
  double lambda = 0.1;
  HeraldConfig herald{};
  double splitter_ratio = 0.5;  ///< fraction of trigger photons sent to APD A (Monte Carlo only)
  double eta_signal = 0.5;
  double extra_transmission = 1.0;  ///< optional neutral-density filter before the TMD
  std::vector<double> bins = uniform_bins(kDefaultBins);
  std::optional<Contaminant> contaminant;
  std::uint64_t pulses = 1'000'000;
  std::uint64_t seed = 1;
  /// Pulses per independent RNG substream. Part of the result's identity:
  /// changing it changes the sampled histograms, changing the thread count does not.
  std::uint64_t chunk_pulses = kDefaultChunkPulses;

  /// Total signal transmission seen by the TMD.
  double signal_transmission() const { return eta_signal * extra_transmission; }
  void validate() const;
};

struct SimulationOutput {
  std::map<TriggerLabel, CountHistogram> histograms;
  std::uint64_t herald_count = 0;
  std::uint64_t pulses_run = 0;
  std::uint64_t seed = 0;
  ExperimentConfig config_echo;
  std::string rng;

  /// The histogram for the configured trigger (empty counts if no heralds).
  const CountHistogram& heralded() const;
};

/// Name of the generator and substream scheme, echoed into outputs.
std::string rng_description();

/// Simulates `config.pulses` pulses. Results depend only on the config
/// (including seed and chunk size), never on `threads`.
SimulationOutput run(const ExperimentConfig& config, int threads = 1);

/// run() with the seed replaced.
SimulationOutput replay(std::uint64_t seed, ExperimentConfig config, int threads = 1);

/// Analytic counterpart of run(): heralding, contamination by convolution,
/// then C * L(eta_signal * extra_transmission). Balanced splitter only.
struct AnalyticPrediction {
  double herald_rate = 0.0;
  PhotonDistribution signal;  ///< at the TMD input side, before loss
  ClickDistribution clicks;
};
AnalyticPrediction predict(const ExperimentConfig& config, int n_max = 40);

}  // namespace tmdstat
