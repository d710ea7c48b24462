#include "tmdstat/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "tmdstat/errors.hpp"
#include "tmdstat/inversion.hpp"

namespace tmdstat {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_normalized(const ResolvedStatistics& p) {
  if (p.probs.empty()) throw DomainError("empty conditional distribution");
  double total = 0.0;
  for (double x : p.probs) total += x;
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "conditional distribution sums to " << total << ", not 1";
    throw DomainError(os.str());
  }
}

EfficiencyEstimate undefined(EstimatorOrder order, std::string why) {
  EfficiencyEstimate e;
  e.order = order;
  e.eta_hat = kNaN;
  e.std_err = kNaN;
  e.defined = false;
  e.diagnostic = std::move(why);
  return e;
}

// Delta method: |d eta / d p| * sd(p). At a zero derivative singularity
// (p -> 0 for sqrt) we fall back to the scale of sqrt(sd).
double delta_err(double derivative, double variance) {
  if (variance <= 0.0) return 0.0;
  if (!std::isfinite(derivative)) return std::sqrt(std::sqrt(variance));
  return std::abs(derivative) * std::sqrt(variance);
}

template <typename Fn>
EfficiencyEstimate guarded(EstimatorOrder order, Fn&& fn) {
  try {
    return fn();
  } catch (const EstimatorDomainError& e) {
    return undefined(order, e.what());
  }
}

std::vector<const EfficiencyEstimate*> defined_only(std::span<const EfficiencyEstimate> estimates) {
  std::vector<const EfficiencyEstimate*> out;
  for (const auto& e : estimates) {
    if (e.defined && std::isfinite(e.eta_hat)) out.push_back(&e);
  }
  return out;
}

std::string quasi_warning(const ResolvedStatistics& p) {
  return p.has_negative(1e-12) ? "conditional statistics contain negative entries (quasi-distribution)" : "";
}

}  // namespace

const char* to_string(EstimatorOrder order) {
  switch (order) {
    case EstimatorOrder::klyshko:
      return "klyshko";
    case EstimatorOrder::single_trigger:
      return "single_trigger";
    case EstimatorOrder::j0:
      return "j0";
    case EstimatorOrder::j1:
      return "j1";
    case EstimatorOrder::j2:
      return "j2";
    case EstimatorOrder::average:
      return "average";
  }
  return "?";
}

EfficiencyEstimate klyshko_efficiency(const CountHistogram& h) {
  const std::uint64_t total = h.total();
  if (total == 0) throw InsufficientDataError("Klyshko efficiency of an empty histogram");
  EfficiencyEstimate e;
  e.order = EstimatorOrder::klyshko;
  const double none = h.counts.empty() ? 0.0 : static_cast<double>(h.counts[0]);
  e.eta_hat = 1.0 - none / static_cast<double>(total);
  e.std_err = std::sqrt(e.eta_hat * (1.0 - e.eta_hat) / static_cast<double>(total));
  return e;
}

EfficiencyEstimate klyshko_efficiency(const ClickDistribution& p) {
  if (p.size() == 0) throw InsufficientDataError("Klyshko efficiency of an empty click distribution");
  EfficiencyEstimate e;
  e.order = EstimatorOrder::klyshko;
  e.eta_hat = 1.0 - p[0];
  const std::uint64_t total = p.total_counts();
  e.std_err = total > 0 ? std::sqrt(e.eta_hat * (1.0 - e.eta_hat) / static_cast<double>(total)) : 0.0;
  return e;
}

EfficiencyEstimate single_trigger_efficiency(const ResolvedStatistics& p) {
  check_normalized(p);
  EfficiencyEstimate e;
  e.order = EstimatorOrder::single_trigger;
  e.eta_hat = p.at(1);
  e.std_err = std::sqrt(p.variance(1));
  e.residual = std::abs(p.at(0) - (1.0 - e.eta_hat));
  e.diagnostic = quasi_warning(p);
  return e;
}

double eta_from_vacuum(double p0) {
  if (p0 < 0.0) throw EstimatorDomainError("p(0|t=2) < 0: no real efficiency");
  return 1.0 - std::sqrt(p0);
}

double eta_from_single(double p1) {
  if (p1 > 0.5) {
    std::ostringstream os;
    os << "p(1|t=2) = " << p1 << " > 1/2: single-loss relation has a complex root";
    throw EstimatorDomainError(os.str());
  }
  if (p1 < 0.0) throw EstimatorDomainError("p(1|t=2) < 0: no real efficiency");
  return 0.5 * (1.0 - std::sqrt(1.0 - 2.0 * p1));
}

double eta_from_pair(double p2) {
  if (p2 < 0.0) throw EstimatorDomainError("p(2|t=2) < 0: no real efficiency");
  return std::sqrt(p2);
}

std::array<EfficiencyEstimate, 3> double_trigger_efficiencies(const ResolvedStatistics& p) {
  check_normalized(p);
  const std::string warning = quasi_warning(p);
  const double p0 = p.at(0), p1 = p.at(1), p2 = p.at(2);

  auto j0 = guarded(EstimatorOrder::j0, [&] {
    EfficiencyEstimate e;
    e.order = EstimatorOrder::j0;
    e.eta_hat = eta_from_vacuum(p0);
    e.std_err = delta_err(-0.5 / std::sqrt(p0), p.variance(0));
    return e;
  });
  auto j1 = guarded(EstimatorOrder::j1, [&] {
    EfficiencyEstimate e;
    e.order = EstimatorOrder::j1;
    e.eta_hat = eta_from_single(p1);
    e.std_err = delta_err(0.5 / std::sqrt(1.0 - 2.0 * p1), p.variance(1));
    return e;
  });
  auto j2 = guarded(EstimatorOrder::j2, [&] {
    EfficiencyEstimate e;
    e.order = EstimatorOrder::j2;
    e.eta_hat = eta_from_pair(p2);
    e.std_err = delta_err(0.5 / std::sqrt(p2), p.variance(2));
    return e;
  });
  std::array<EfficiencyEstimate, 3> out{j0, j1, j2};
  if (!warning.empty()) {
    for (auto& e : out) e.diagnostic = e.diagnostic.empty() ? warning : e.diagnostic + "; " + warning;
  }
  return out;
}

std::vector<double> conditional_loss_pmf(int k, double eta) {
  if (k < 0) throw DomainError("trigger photon number must be nonnegative");
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("efficiency outside [0, 1]");
  std::vector<double> p(static_cast<std::size_t>(k) + 1);
  for (int n = 0; n <= k; ++n) {
    p[static_cast<std::size_t>(n)] = binomial(k, n) * std::pow(eta, n) * std::pow(1.0 - eta, k - n);
  }
  return p;
}

ConsistencyResult consistency_check(std::span<const EfficiencyEstimate> estimates, double sigma_threshold) {
  const auto defined = defined_only(estimates);
  if (defined.size() < 2) throw InsufficientDataError("consistency check needs at least two defined estimates");
  double lo = defined.front()->eta_hat, hi = lo, var = 0.0;
  for (const auto* e : defined) {
    lo = std::min(lo, e->eta_hat);
    hi = std::max(hi, e->eta_hat);
    var += e->std_err * e->std_err;
  }
  ConsistencyResult r;
  r.spread = hi - lo;
  r.combined_std_err = std::sqrt(var);
  r.consistent = r.spread <= sigma_threshold * r.combined_std_err;
  return r;
}

EfficiencyEstimate weighted_average(std::span<const EfficiencyEstimate> estimates, double sigma_threshold) {
  const auto defined = defined_only(estimates);
  if (defined.empty()) throw InsufficientDataError("no defined efficiency estimate to average");
  EfficiencyEstimate avg;
  avg.order = EstimatorOrder::average;
  const bool exact = std::any_of(defined.begin(), defined.end(), [](const auto* e) { return !(e->std_err > 0.0); });
  if (exact) {
    double s = 0.0;
    for (const auto* e : defined) s += e->eta_hat;
    avg.eta_hat = s / static_cast<double>(defined.size());
    avg.std_err = 0.0;
  } else {
    double sw = 0.0, swx = 0.0;
    for (const auto* e : defined) {
      const double w = 1.0 / (e->std_err * e->std_err);
      sw += w;
      swx += w * e->eta_hat;
    }
    avg.eta_hat = swx / sw;
    avg.std_err = 1.0 / std::sqrt(sw);
  }
  if (defined.size() >= 2) {
    auto c = consistency_check(estimates, sigma_threshold);
    avg.consistent = c.consistent;
    avg.spread = c.spread;
  }
  return avg;
}

EfficiencyEstimate plain_average(std::span<const EfficiencyEstimate> estimates) {
  const auto defined = defined_only(estimates);
  if (defined.empty()) throw InsufficientDataError("no defined efficiency estimate to average");
  double s = 0.0, lo = defined.front()->eta_hat, hi = lo;
  for (const auto* e : defined) {
    s += e->eta_hat;
    lo = std::min(lo, e->eta_hat);
    hi = std::max(hi, e->eta_hat);
  }
  EfficiencyEstimate avg;
  avg.order = EstimatorOrder::average;
  avg.eta_hat = s / static_cast<double>(defined.size());
  avg.spread = hi - lo;
  avg.std_err = 0.5 * avg.spread;
  return avg;
}

TransmissionRatio transmission_ratio(const EfficiencyEstimate& with_filter, const EfficiencyEstimate& without_filter) {
  if (!with_filter.defined || !without_filter.defined) throw DomainError("transmission ratio of an undefined estimate");
  if (!(without_filter.eta_hat > 0.0)) throw DomainError("transmission ratio with zero reference efficiency");
  TransmissionRatio r;
  r.t_hat = with_filter.eta_hat / without_filter.eta_hat;
  const double rel_with = with_filter.eta_hat > 0.0 ? with_filter.std_err / with_filter.eta_hat : 0.0;
  const double rel_without = without_filter.std_err / without_filter.eta_hat;
  r.std_err = std::abs(r.t_hat) * std::hypot(rel_with, rel_without);
  if (with_filter.eta_hat == 0.0) r.std_err = with_filter.std_err / without_filter.eta_hat;
  return r;
}

CalibrationReport calibrate(const CountHistogram& h, const ConvolutionMatrix& c, double sigma_threshold) {
  if (h.total() == 0) throw InsufficientDataError("calibration of an empty histogram");
  CalibrationReport r;
  r.trigger = h.trigger;
  r.total = h.total();
  r.sigma_threshold = sigma_threshold;

  Deconvolved d = deconvolve_clicks(ClickDistribution::empirical(h), c);
  d.stats.trigger = h.trigger;
  r.resolved = d.stats.probs;
  r.resolved_negative = d.negativity_flag;

  switch (h.trigger) {
    case 1:
      r.estimates.push_back(klyshko_efficiency(h));
      r.estimates.push_back(single_trigger_efficiency(d.stats));
      break;
    case 2: {
      auto three = double_trigger_efficiencies(d.stats);
      r.estimates.assign(three.begin(), three.end());
      break;
    }
    default:
      throw DomainError("no efficiency estimator for trigger label " + trigger_label_name(h.trigger));
  }
  r.weighted = weighted_average(r.estimates, sigma_threshold);
  r.plain = plain_average(r.estimates);
  r.consistency = consistency_check(r.estimates, sigma_threshold);
  return r;
}

double bootstrap_std_err(const CountHistogram& h, const ConvolutionMatrix& c, EstimatorOrder order, int replicas,
                         std::uint64_t seed) {
  if (replicas < 2) throw DomainError("bootstrap needs at least two replicas");
  const std::uint64_t total = h.total();
  if (total == 0) throw InsufficientDataError("bootstrap of an empty histogram");
  const std::vector<double> f = h.frequencies();
  std::mt19937_64 rng(seed);

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(replicas));
  for (int r = 0; r < replicas; ++r) {
    // multinomial draw as a chain of conditional binomials
    CountHistogram resampled{std::vector<std::uint64_t>(f.size(), 0), h.trigger};
    std::uint64_t left = total;
    double mass_left = 1.0;
    for (std::size_t i = 0; i + 1 < f.size() && left > 0; ++i) {
      const double p = mass_left > 0.0 ? std::clamp(f[i] / mass_left, 0.0, 1.0) : 0.0;
      std::binomial_distribution<std::uint64_t> draw(left, p);
      resampled.counts[i] = draw(rng);
      left -= resampled.counts[i];
      mass_left -= f[i];
    }
    resampled.counts.back() += left;

    const auto stats = deconvolve_clicks(ClickDistribution::empirical(resampled), c).stats;
    double v = kNaN;
    switch (order) {
      case EstimatorOrder::klyshko:
        v = klyshko_efficiency(resampled).eta_hat;
        break;
      case EstimatorOrder::single_trigger:
        v = single_trigger_efficiency(stats).eta_hat;
        break;
      case EstimatorOrder::j0:
      case EstimatorOrder::j1:
      case EstimatorOrder::j2:
        v = double_trigger_efficiencies(stats)[static_cast<std::size_t>(order) - 2].eta_hat;
        break;
      case EstimatorOrder::average:
        throw DomainError("bootstrap of the average is not supported; bootstrap each order");
    }
    if (std::isfinite(v)) values.push_back(v);
  }
  if (values.size() < 2) throw InsufficientDataError("bootstrap produced fewer than two defined replicas");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace tmdstat
