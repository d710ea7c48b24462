#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tmdstat {

inline constexpr int kDefaultNMax = 20;
inline constexpr double kDefaultMaxTail = 1e-6;

/// Photon-number distribution rho(n), n = 0..n_max.
///
/// Constructed values are nonnegative and sum to one. Constructors that
/// truncate an infinite law fold the discarded tail back in by renormalizing
/// and remember how much mass that was (`folded_tail()`).
///
/// A quasi-distribution (output of unconstrained inversion) may carry
/// negative entries; it is still normalized and is flagged by `is_quasi()`.
class PhotonDistribution {
 public:
  PhotonDistribution() = default;

  /// Validates nonnegativity and normalization (within 1e-9), then
  /// renormalizes exactly.
  static PhotonDistribution from_probs(std::vector<double> probs);

  /// Normalizes to unit sum without a sign check. Used for direct-inversion output.
  static PhotonDistribution quasi(std::vector<double> probs);

  /// Renormalizes an unnormalized nonnegative weight vector. `folded_tail` is
  /// the mass the caller dropped when truncating.
  static PhotonDistribution from_weights(std::vector<double> weights, double folded_tail = 0.0);

  int n_max() const noexcept { return static_cast<int>(probs_.size()) - 1; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t n) const { return probs_[n]; }
  double at(std::size_t n) const { return n < probs_.size() ? probs_[n] : 0.0; }
  std::span<const double> probs() const noexcept { return probs_; }
  const std::vector<double>& vector() const noexcept { return probs_; }
  double folded_tail() const noexcept { return folded_tail_; }
  bool is_quasi() const noexcept { return quasi_; }
  double min_entry() const;

  /// Zero-pads or truncates-with-renormalization to a new bound.
  PhotonDistribution resized(int n_max) const;

  friend bool operator==(const PhotonDistribution&, const PhotonDistribution&) = default;

 private:
  std::vector<double> probs_;
  double folded_tail_ = 0.0;
  bool quasi_ = false;
};

/// Two-mode squeezed vacuum with real, nonnegative parametric gain lambda.
/// Joint pair-number law P(n_h, n_v) = (1 - lambda^2) lambda^{2n} delta(n_h, n_v).
struct TwoModeSqueezedSource {
  double lambda = 0.0;

  /// Probability of exactly n pairs (untruncated).
  double pair_probability(int n) const;
  /// P(N > n_max).
  double tail_beyond(int n_max) const;
  double mean_pairs() const;
};

struct TruncationPolicy {
  double max_tail = kDefaultMaxTail;  ///< reject if the folded tail exceeds this
  static TruncationPolicy allow_any() { return {1.0}; }
};

PhotonDistribution fock(int n, int n_max = kDefaultNMax);
PhotonDistribution coherent(double mean, int n_max = kDefaultNMax, TruncationPolicy policy = {});
PhotonDistribution thermal(double mean, int n_max = kDefaultNMax, TruncationPolicy policy = {});
PhotonDistribution tms_marginal(const TwoModeSqueezedSource& src, int n_max = kDefaultNMax,
                                TruncationPolicy policy = {});

enum class MixMode {
  convex,       ///< statistical mixture w*a + (1-w)*b
  convolution,  ///< independent fields: photon numbers add
};

/// Combines two distributions with equal n_max. In both modes `weight` is the
/// probability of getting `a` unchanged, so mix(a, b, 1) == a.
///
/// `convex`: w*a + (1-w)*b.
/// `convolution`: w*a + (1-w)*(a conv b), where a conv b is the photon-number
/// law of two independent fields, truncated back to n_max and renormalized.
/// weight = 0 is the plain superposition of an independent beam.
PhotonDistribution mix(const PhotonDistribution& a, const PhotonDistribution& b, double weight,
                       MixMode mode = MixMode::convex);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of an arbitrary weight vector indexed by photon (or click) number.
Moments moments(std::span<const double> p);
inline Moments moments(const PhotonDistribution& p) { return moments(p.probs()); }

/// Half the L1 distance; shorter vectors are zero-padded.
double total_variation(std::span<const double> a, std::span<const double> b);

}  // namespace tmdstat
