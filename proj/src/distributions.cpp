#include "tmdstat/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tmdstat/errors.hpp"

namespace tmdstat {
namespace {

constexpr double kNormTol = 1e-9;

double sum_of(const std::vector<double>& v) {
  // Neumaier summation; distributions have at most a few hundred entries but
  // tails span many orders of magnitude.
  double sum = 0.0, comp = 0.0;
  for (double x : v) {
    double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

void check_n_max(int n_max) {
  if (n_max < 0) throw DomainError("n_max must be nonnegative");
}

void check_tail(double tail, const TruncationPolicy& policy, const char* what) {
  if (tail > policy.max_tail) {
    std::ostringstream os;
    os << what << ": truncated tail mass " << tail << " exceeds " << policy.max_tail
       << "; raise n_max";
    throw TruncationError(os.str());
  }
}

}  // namespace

PhotonDistribution PhotonDistribution::from_probs(std::vector<double> probs) {
  if (probs.empty()) throw ShapeError("empty photon distribution");
  for (double p : probs) {
    if (!(p >= 0.0)) throw DomainError("photon distribution has a negative or NaN entry");
  }
  double total = sum_of(probs);
  if (std::abs(total - 1.0) > kNormTol) {
    std::ostringstream os;
    os << "photon distribution sums to " << total << ", not 1";
    throw DomainError(os.str());
  }
  for (double& p : probs) p /= total;
  PhotonDistribution d;
  d.probs_ = std::move(probs);
  return d;
}

PhotonDistribution PhotonDistribution::quasi(std::vector<double> probs) {
  if (probs.empty()) throw ShapeError("empty photon distribution");
  double total = sum_of(probs);
  if (!std::isfinite(total) || total == 0.0) throw DomainError("quasi-distribution has zero or non-finite sum");
  for (double& p : probs) p /= total;
  PhotonDistribution d;
  d.probs_ = std::move(probs);
  d.quasi_ = std::any_of(d.probs_.begin(), d.probs_.end(), [](double p) { return p < 0.0; });
  return d;
}

PhotonDistribution PhotonDistribution::from_weights(std::vector<double> weights, double folded_tail) {
  if (weights.empty()) throw ShapeError("empty photon distribution");
  for (double w : weights) {
    if (!(w >= 0.0)) throw DomainError("negative or NaN weight");
  }
  double total = sum_of(weights);
  if (!(total > 0.0)) throw DomainError("weights sum to zero");
  for (double& w : weights) w /= total;
  PhotonDistribution d;
  d.probs_ = std::move(weights);
  d.folded_tail_ = folded_tail;
  return d;
}

double PhotonDistribution::min_entry() const {
  return probs_.empty() ? 0.0 : *std::min_element(probs_.begin(), probs_.end());
}

PhotonDistribution PhotonDistribution::resized(int n_max) const {
  check_n_max(n_max);
  std::vector<double> v(static_cast<std::size_t>(n_max) + 1, 0.0);
  double dropped = 0.0;
  for (std::size_t n = 0; n < probs_.size(); ++n) {
    if (n < v.size()) {
      v[n] = probs_[n];
    } else {
      dropped += probs_[n];
    }
  }
  if (quasi_) return quasi(std::move(v));
  return from_weights(std::move(v), folded_tail_ + dropped);
}

double TwoModeSqueezedSource::pair_probability(int n) const {
  if (n < 0) return 0.0;
  double g = lambda * lambda;
  return (1.0 - g) * std::pow(g, n);
}

double TwoModeSqueezedSource::tail_beyond(int n_max) const {
  return std::pow(lambda * lambda, n_max + 1);
}

double TwoModeSqueezedSource::mean_pairs() const {
  double g = lambda * lambda;
  return g / (1.0 - g);
}

PhotonDistribution fock(int n, int n_max) {
  check_n_max(n_max);
  if (n < 0) throw DomainError("Fock number must be nonnegative");
  if (n > n_max) throw TruncationError("Fock state |" + std::to_string(n) + "> lies beyond n_max " + std::to_string(n_max));
  std::vector<double> v(static_cast<std::size_t>(n_max) + 1, 0.0);
  v[static_cast<std::size_t>(n)] = 1.0;
  return PhotonDistribution::from_probs(std::move(v));
}

PhotonDistribution coherent(double mean, int n_max, TruncationPolicy policy) {
  check_n_max(n_max);
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("coherent mean must be nonnegative");
  std::vector<double> v(static_cast<std::size_t>(n_max) + 1, 0.0);
  if (mean == 0.0) {
    v[0] = 1.0;
    return PhotonDistribution::from_probs(std::move(v));
  }
  // log-space recurrence stays finite for means far beyond double's exp range
  double log_mean = std::log(mean);
  for (int n = 0; n <= n_max; ++n) {
    v[static_cast<std::size_t>(n)] = std::exp(-mean + n * log_mean - std::lgamma(n + 1.0));
  }
  double tail = std::max(0.0, 1.0 - sum_of(v));
  check_tail(tail, policy, "coherent");
  return PhotonDistribution::from_weights(std::move(v), tail);
}

PhotonDistribution thermal(double mean, int n_max, TruncationPolicy policy) {
  check_n_max(n_max);
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("thermal mean must be nonnegative");
  std::vector<double> v(static_cast<std::size_t>(n_max) + 1, 0.0);
  double ratio = mean / (1.0 + mean);
  double p = 1.0 / (1.0 + mean);
  for (int n = 0; n <= n_max; ++n) {
    v[static_cast<std::size_t>(n)] = p;
    p *= ratio;
  }
  double tail = std::pow(ratio, n_max + 1);
  check_tail(tail, policy, "thermal");
  return PhotonDistribution::from_weights(std::move(v), tail);
}

PhotonDistribution tms_marginal(const TwoModeSqueezedSource& src, int n_max, TruncationPolicy policy) {
  check_n_max(n_max);
  if (!(src.lambda >= 0.0) || !(src.lambda < 1.0)) throw DomainError("parametric gain lambda must lie in [0, 1)");
  std::vector<double> v(static_cast<std::size_t>(n_max) + 1, 0.0);
  for (int n = 0; n <= n_max; ++n) v[static_cast<std::size_t>(n)] = src.pair_probability(n);
  double tail = src.tail_beyond(n_max);
  check_tail(tail, policy, "two-mode squeezed marginal");
  return PhotonDistribution::from_weights(std::move(v), tail);
}

PhotonDistribution mix(const PhotonDistribution& a, const PhotonDistribution& b, double weight, MixMode mode) {
  if (a.size() != b.size()) throw ShapeError("mix: distributions have different n_max");
  if (!(weight >= 0.0 && weight <= 1.0)) throw DomainError("mix weight must lie in [0, 1]");
  const std::size_t len = a.size();
  std::vector<double> out(len, 0.0);
  double dropped = 0.0;
  if (mode == MixMode::convex) {
    for (std::size_t n = 0; n < len; ++n) out[n] = weight * a[n] + (1.0 - weight) * b[n];
  } else {
    std::vector<double> conv(len, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        double w = a[i] * b[j];
        if (i + j < len) {
          conv[i + j] += w;
        } else {
          dropped += w;
        }
      }
    }
    dropped *= 1.0 - weight;
    for (std::size_t n = 0; n < len; ++n) out[n] = weight * a[n] + (1.0 - weight) * conv[n];
  }
  if (a.is_quasi() || b.is_quasi()) return PhotonDistribution::quasi(std::move(out));
  return PhotonDistribution::from_weights(std::move(out), a.folded_tail() + b.folded_tail() + dropped);
}

Moments moments(std::span<const double> p) {
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    double x = static_cast<double>(n);
    m1 += x * p[n];
    m2 += x * x * p[n];
  }
  return {m1, m2 - m1 * m1};
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  std::size_t len = std::max(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    double x = i < a.size() ? a[i] : 0.0;
    double y = i < b.size() ? b[i] : 0.0;
    s += std::abs(x - y);
  }
  return 0.5 * s;
}

}  // namespace tmdstat
