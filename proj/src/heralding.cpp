#include "tmdstat/heralding.hpp"

#include <cmath>
#include <string>

#include "tmdstat/detector_model.hpp"
#include "tmdstat/errors.hpp"

namespace tmdstat {

TriggerLabel HeraldConfig::label() const {
  switch (kind) {
    case TriggerKind::single_apd:
      return 1;
    case TriggerKind::double_apd_coincidence:
      return 2;
    case TriggerKind::ideal_k_resolving:
      return k;
  }
  return kUnconditioned;
}

void HeraldConfig::validate() const {
  if (!(eta_trigger >= 0.0 && eta_trigger <= 1.0)) throw DomainError("trigger efficiency outside [0, 1]");
  if (!(dark_click_prob >= 0.0 && dark_click_prob < 1.0)) throw DomainError("dark click probability outside [0, 1)");
  if (kind == TriggerKind::ideal_k_resolving && k < 0) throw DomainError("ideal trigger photon number must be >= 0");
}

double trigger_probability(const HeraldConfig& cfg, int n) {
  const double d = cfg.dark_click_prob;
  const double eta = cfg.eta_trigger;
  switch (cfg.kind) {
    case TriggerKind::single_apd:
      return 1.0 - (1.0 - d) * std::pow(1.0 - eta, n);
    case TriggerKind::double_apd_coincidence: {
      // 1 - P(A silent) - P(B silent) + P(both silent)
      const double one_silent = (1.0 - d) * std::pow(1.0 - eta / 2.0, n);
      const double both_silent = (1.0 - d) * (1.0 - d) * std::pow(1.0 - eta, n);
      return std::max(0.0, 1.0 - 2.0 * one_silent + both_silent);
    }
    case TriggerKind::ideal_k_resolving:
      return n == cfg.k ? 1.0 : 0.0;
  }
  return 0.0;
}

ConditionalStats herald(const TwoModeSqueezedSource& src, const HeraldConfig& cfg, int n_max) {
  cfg.validate();
  if (!(src.lambda >= 0.0 && src.lambda < 1.0)) throw DomainError("parametric gain lambda must lie in [0, 1)");
  if (n_max < 0) throw DomainError("n_max must be nonnegative");
  const double tail = src.tail_beyond(n_max);
  if (tail > kDefaultMaxTail) {
    throw TruncationError("lambda = " + std::to_string(src.lambda) + " leaves pair tail " + std::to_string(tail) +
                          " beyond n_max = " + std::to_string(n_max));
  }
  if (cfg.kind == TriggerKind::ideal_k_resolving && cfg.k > n_max) {
    throw TruncationError("ideal trigger photon number exceeds n_max");
  }

  std::vector<double> w(static_cast<std::size_t>(n_max) + 1);
  double rate = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    double joint = src.pair_probability(n) * trigger_probability(cfg, n);
    w[static_cast<std::size_t>(n)] = joint;
    rate += joint;
  }
  if (!(rate > 0.0)) throw DomainError("trigger can never fire for this source (herald rate is zero)");
  return {rate, PhotonDistribution::from_weights(std::move(w), tail)};
}

ClickDistribution heralded_click_distribution(const TwoModeSqueezedSource& src, const HeraldConfig& cfg,
                                              double eta_signal, const std::vector<double>& bin_probs, int n_max) {
  return forward_model(herald(src, cfg, n_max).signal_dist, eta_signal, bin_probs);
}

const char* to_string(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::single_apd:
      return "single_apd";
    case TriggerKind::double_apd_coincidence:
      return "double_apd_coincidence";
    case TriggerKind::ideal_k_resolving:
      return "ideal_k_resolving";
  }
  return "?";
}

TriggerKind trigger_kind_from_string(const std::string& s) {
  if (s == "single_apd" || s == "single") return TriggerKind::single_apd;
  if (s == "double_apd_coincidence" || s == "double") return TriggerKind::double_apd_coincidence;
  if (s == "ideal_k_resolving" || s == "ideal") return TriggerKind::ideal_k_resolving;
  throw DomainError("unknown trigger kind '" + s + "'");
}

}  // namespace tmdstat
