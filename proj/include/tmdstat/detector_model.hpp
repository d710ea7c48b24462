#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "tmdstat/distributions.hpp"
#include "tmdstat/statistics.hpp"

namespace tmdstat {

/// Dense column-stochastic matrix: column n is the outcome law for n input photons.
using Matrix = Eigen::MatrixXd;

inline constexpr int kDefaultBins = 8;
inline constexpr int kMaxNonUniformBins = 16;

/// Binomial loss L(eta): entry(m, n) = C(n, m) eta^m (1 - eta)^(n - m).
struct LossMatrix {
  double eta = 1.0;
  Matrix entries;
  int n_max() const { return static_cast<int>(entries.cols()) - 1; }
};

/// Time-multiplexed detector map C: entry(k, n) = P(k of N bins occupied | n photons).
struct ConvolutionMatrix {
  std::vector<double> bin_probs;
  Matrix entries;
  int bins() const { return static_cast<int>(bin_probs.size()); }
  int n_max() const { return static_cast<int>(entries.cols()) - 1; }
  bool uniform() const;
};

/// Generic outcome-by-photon-number map, e.g. C * L(eta).
struct TransferMatrix {
  Matrix entries;
};

/// `n` equal splitting ratios.
std::vector<double> uniform_bins(int n);

/// Binomial coefficient as a double, multiplicative recurrence.
double binomial(int n, int k);

LossMatrix loss_matrix(double eta, int n_max = kDefaultNMax);
PhotonDistribution apply_loss(const PhotonDistribution& p, double eta);

/// Builds C for the given splitting ratios. Uniform ratios use the closed form;
/// otherwise subset inclusion-exclusion (O(2^N n_max), N <= 16).
ConvolutionMatrix convolution_matrix(const std::vector<double>& bin_probs, int n_max = kDefaultNMax);

/// Always evaluates C by subset inclusion-exclusion; exposed to cross-check the
/// uniform closed form.
ConvolutionMatrix convolution_matrix_by_subsets(const std::vector<double>& bin_probs, int n_max);

/// p(k) = C * L(eta) * rho.
ClickDistribution forward_model(const PhotonDistribution& p, double eta, const std::vector<double>& bin_probs);

TransferMatrix compose(const ConvolutionMatrix& c, const LossMatrix& l);

/// Largest |column sum - 1| of a matrix.
double stochasticity_defect(const Matrix& m);

Eigen::VectorXd to_eigen(std::span<const double> v);
std::vector<double> to_std(const Eigen::VectorXd& v);

}  // namespace tmdstat
