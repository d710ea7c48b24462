#pragma once

#include <string>
#include <vector>

#include "tmdstat/distributions.hpp"
#include "tmdstat/statistics.hpp"

namespace tmdstat {

enum class TriggerKind {
  single_apd,              ///< one binary detector; fires on >= 1 detected photon or a dark click
  double_apd_coincidence,  ///< balanced splitter + two APDs in coincidence
  ideal_k_resolving,       ///< lossless, noiseless detector that fires on exactly k photons
};

struct HeraldConfig {
  TriggerKind kind = TriggerKind::single_apd;
  int k = 1;                     ///< only used by ideal_k_resolving
  double eta_trigger = 1.0;      ///< lumped trigger-arm efficiency
  double dark_click_prob = 0.0;  ///< per APD per pulse

  /// Photon number this trigger nominally announces (1, 2 or k).
  TriggerLabel label() const;
  void validate() const;
};

/// Probability that the trigger fires given n photons in the trigger arm.
double trigger_probability(const HeraldConfig& cfg, int n);

struct ConditionalStats {
  double herald_rate = 0.0;         ///< P(trigger) per pulse
  PhotonDistribution signal_dist;   ///< signal photons at the source, given a trigger
};

/// Signal-arm photon law conditioned on the trigger. Throws TruncationError
/// when lambda leaves more than 1e-6 of pair probability beyond n_max.
ConditionalStats herald(const TwoModeSqueezedSource& src, const HeraldConfig& cfg, int n_max = kDefaultNMax);

/// Click statistics of the heralded signal after loss `eta_signal` and the TMD.
ClickDistribution heralded_click_distribution(const TwoModeSqueezedSource& src, const HeraldConfig& cfg,
                                              double eta_signal, const std::vector<double>& bin_probs,
                                              int n_max = kDefaultNMax);

const char* to_string(TriggerKind kind);
TriggerKind trigger_kind_from_string(const std::string& s);

}  // namespace tmdstat
