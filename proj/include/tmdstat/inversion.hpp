#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmdstat/detector_model.hpp"
#include "tmdstat/distributions.hpp"
#include "tmdstat/statistics.hpp"

namespace tmdstat {

inline constexpr double kDefaultMaxCondition = 1e12;

struct DeconvolutionOptions {
  double max_condition = kDefaultMaxCondition;  ///< refuse above this unless `force`
  bool force = false;
};

/// Result of undoing the TMD map on the square (N+1) x (N+1) block of C.
struct Deconvolved {
  ResolvedStatistics stats;
  double condition_number = 1.0;
  bool negativity_flag = false;  ///< some entry < -1e-9 (sampling noise or model mismatch)
};

/// C^-1 * p on clicks 0..N versus photons 0..N. The output keeps any negative
/// entries. For empirical input the multinomial covariance is propagated.
Deconvolved deconvolve_clicks(const ClickDistribution& p_click, const ConvolutionMatrix& c,
                              DeconvolutionOptions opts = {});

/// Closed-form inverse of the binomial loss matrix:
/// entry(n, m) = C(m, n) eta^-n (1 - 1/eta)^(m - n), i.e. L(1/eta).
Matrix loss_matrix_inverse(double eta, int n_max);

enum class InversionMethod { em, direct };
const char* to_string(InversionMethod m);
InversionMethod inversion_method_from_string(const std::string& s);

struct EmOptions {
  int n_max = kDefaultNMax;
  /// Stop once the log-likelihood gain falls below tol * |log-likelihood|.
  /// 0 runs all max_iter iterations (near the optimum the gain sinks below roundoff).
  double tol = 1e-10;
  long max_iter = 100000;
  bool record_trace = true;
};

struct InversionResult {
  PhotonDistribution rho_hat;
  std::vector<double> log_likelihood_trace;  ///< value after each iteration, index 0 = initial guess
  long iterations = 0;
  bool converged = false;
  InversionMethod method = InversionMethod::em;
  bool negativity_flag = false;
  double min_entry = 0.0;
  double eta = 1.0;
  double condition_number = 1.0;
};

/// rho = L(eta)^-1 C^-1 p, on photon numbers 0..N. Diagnostic only: the
/// result may be a quasi-distribution.
InversionResult direct_invert(const ClickDistribution& p_click, double eta, const ConvolutionMatrix& c,
                              DeconvolutionOptions opts = {});

/// Maximum-likelihood reconstruction under rho >= 0 by expectation-maximization
/// on M = C * L(eta). `c` may have any n_max; it is rebuilt at opts.n_max.
InversionResult em_invert(const CountHistogram& hist, double eta, const ConvolutionMatrix& c, EmOptions opts = {});
/// Same, on analytic click probabilities (weights f instead of counts).
InversionResult em_invert(const ClickDistribution& p_click, double eta, const ConvolutionMatrix& c,
                          EmOptions opts = {});

/// One EM update. Exposed for fixed-point checks.
Eigen::VectorXd em_step(const Matrix& m, const Eigen::VectorXd& weights, const Eigen::VectorXd& rho);

/// Weighted log-likelihood sum_k w_k log (M rho)_k over outcomes with w_k > 0.
double log_likelihood(const Matrix& m, const Eigen::VectorXd& weights, const Eigen::VectorXd& rho);

/// True if every step of the trace is a gain up to `rel_tol` * |value| of roundoff.
bool is_monotone(const std::vector<double>& trace, double rel_tol = 1e-12);

/// Bhattacharyya fidelity (sum_n sqrt(p_n q_n))^2. Negative quasi-probabilities
/// contribute nothing.
double fidelity(const PhotonDistribution& p, const PhotonDistribution& q);

}  // namespace tmdstat
