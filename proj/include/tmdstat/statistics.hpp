#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tmdstat {

/// Which trigger outcome a histogram was conditioned on.
/// Values 1, 2, ... are the number of trigger photons registered;
/// `kUnconditioned` marks histograms taken without heralding.
using TriggerLabel = int;
inline constexpr TriggerLabel kUnconditioned = -1;

std::string trigger_label_name(TriggerLabel label);

/// Raw counts N_i of events in which i clicks were registered.
struct CountHistogram {
  std::vector<std::uint64_t> counts;
  TriggerLabel trigger = kUnconditioned;

  std::uint64_t total() const noexcept;
  /// counts / total; throws InsufficientDataError when empty.
  std::vector<double> frequencies() const;
  std::size_t size() const noexcept { return counts.size(); }

  CountHistogram& operator+=(const CountHistogram& other);
  friend bool operator==(const CountHistogram&, const CountHistogram&) = default;
};

/// Click-number distribution p(k), k = 0..N_bins.
class ClickDistribution {
 public:
  enum class Source { analytic, empirical };

  ClickDistribution() = default;
  /// Checks nonnegativity and unit sum (1e-9).
  static ClickDistribution analytic(std::vector<double> probs);
  static ClickDistribution empirical(const CountHistogram& hist);

  std::span<const double> probs() const noexcept { return probs_; }
  const std::vector<double>& vector() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t k) const { return probs_[k]; }
  Source source() const noexcept { return source_; }
  /// Number of trials behind an empirical distribution, 0 for analytic.
  std::uint64_t total_counts() const noexcept { return total_; }
  double mean() const;

 private:
  std::vector<double> probs_;
  Source source_ = Source::analytic;
  std::uint64_t total_ = 0;
};

/// Photon-number-resolved statistics at the detector input (loss still
/// included), usually obtained by undoing the TMD convolution. `covariance`
/// is empty for analytic inputs; otherwise it is the sampling covariance
/// propagated from the multinomial click counts.
struct ResolvedStatistics {
  std::vector<double> probs;
  Eigen::MatrixXd covariance;
  std::uint64_t total = 0;
  TriggerLabel trigger = kUnconditioned;

  static ResolvedStatistics analytic(std::vector<double> probs, TriggerLabel trigger = kUnconditioned);
  double at(std::size_t n) const { return n < probs.size() ? probs[n] : 0.0; }
  double variance(std::size_t n) const;
  bool has_negative(double tol = 0.0) const;
};

}  // namespace tmdstat
