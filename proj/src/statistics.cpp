#include "tmdstat/statistics.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>

#include "tmdstat/errors.hpp"

namespace tmdstat {

std::string trigger_label_name(TriggerLabel label) {
  if (label == kUnconditioned) return "unconditioned";
  return "t=" + std::to_string(label);
}

std::uint64_t CountHistogram::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::vector<double> CountHistogram::frequencies() const {
  const std::uint64_t n = total();
  if (n == 0) throw InsufficientDataError("histogram " + trigger_label_name(trigger) + " is empty");
  std::vector<double> f(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) f[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  return f;
}

CountHistogram& CountHistogram::operator+=(const CountHistogram& other) {
  if (other.counts.size() > counts.size()) counts.resize(other.counts.size(), 0);
  for (std::size_t i = 0; i < other.counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ClickDistribution ClickDistribution::analytic(std::vector<double> probs) {
  if (probs.empty()) throw ShapeError("empty click distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-15)) throw DomainError("click distribution has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("click distribution does not sum to 1");
  ClickDistribution c;
  for (double& p : probs) p = std::max(p, 0.0) / total;
  c.probs_ = std::move(probs);
  return c;
}

ClickDistribution ClickDistribution::empirical(const CountHistogram& hist) {
  ClickDistribution c;
  c.probs_ = hist.frequencies();
  c.source_ = Source::empirical;
  c.total_ = hist.total();
  return c;
}

double ClickDistribution::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < probs_.size(); ++k) m += static_cast<double>(k) * probs_[k];
  return m;
}

ResolvedStatistics ResolvedStatistics::analytic(std::vector<double> probs, TriggerLabel trigger) {
  ResolvedStatistics r;
  r.probs = std::move(probs);
  r.trigger = trigger;
  return r;
}

double ResolvedStatistics::variance(std::size_t n) const {
  const auto i = static_cast<Eigen::Index>(n);
  if (covariance.rows() <= i || covariance.cols() <= i) return 0.0;
  return std::max(0.0, covariance(i, i));
}

bool ResolvedStatistics::has_negative(double tol) const {
  for (double p : probs) {
    if (p < -tol) return true;
  }
  return false;
}

}  // namespace tmdstat
