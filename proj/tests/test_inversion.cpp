#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tmdstat/errors.hpp"
#include "tmdstat/inversion.hpp"

using namespace tmdstat;

namespace {

ClickDistribution exact_clicks(const std::vector<double>& rho, double eta, int bins) {
  return ClickDistribution::analytic(oracle::clicks(rho, eta, uniform_bins(bins)));
}

}  // namespace

TEST(Inversion, LossInverseIsLossAtReciprocalEfficiency) {
  for (double eta : {0.1, 0.315, 0.8, 1.0}) {
    const Matrix inv = loss_matrix_inverse(eta, 10);
    const Matrix prod = inv * loss_matrix(eta, 10).entries;
    EXPECT_LT((prod - Matrix::Identity(11, 11)).cwiseAbs().maxCoeff(), 1e-9) << eta;
  }
  EXPECT_THROW(loss_matrix_inverse(0.0, 5), DomainError);
  EXPECT_THROW(loss_matrix_inverse(0.01, 30), DomainError);
}

TEST(Inversion, DeconvolveIsIdentityOnZeroAndOnePhoton) {
  const auto p = ClickDistribution::analytic({0.4, 0.6, 0, 0, 0, 0, 0, 0, 0});
  const auto d = deconvolve_clicks(p, convolution_matrix(uniform_bins(8), 8));
  EXPECT_NEAR(d.stats.probs[0], 0.4, 1e-12);
  EXPECT_NEAR(d.stats.probs[1], 0.6, 1e-12);
  for (std::size_t n = 2; n < d.stats.probs.size(); ++n) EXPECT_NEAR(d.stats.probs[n], 0.0, 1e-12);
  EXPECT_FALSE(d.negativity_flag);
}

TEST(Inversion, DeconvolvedCovarianceMatchesDirectPropagation) {
  const CountHistogram h{{500, 300, 150, 50}, 2};
  const auto c = convolution_matrix(uniform_bins(3), 3);
  const auto d = deconvolve_clicks(ClickDistribution::empirical(h), c);
  // Var(a . C^-1 p) for a = e_0 computed from the multinomial covariance by hand
  const Matrix inv = c.entries.inverse();
  const std::vector<double> f{0.5, 0.3, 0.15, 0.05};
  double var = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double cov = ((i == j) ? f[i] : 0.0) - f[i] * f[j];
      var += inv(0, i) * inv(0, j) * cov / 1000.0;
    }
  }
  EXPECT_NEAR(d.stats.variance(0), var, 1e-15);
}

TEST(Inversion, ConditioningGuard) {
  const auto c = convolution_matrix(uniform_bins(8), 8);
  const auto p = exact_clicks({0, 1}, 0.5, 8);
  EXPECT_THROW(deconvolve_clicks(p, c, {10.0, false}), ConditioningError);
  EXPECT_NO_THROW(deconvolve_clicks(p, c, {10.0, true}));
}

TEST(Inversion, DirectInversionRecoversExactDistribution) {
  const std::vector<double> rho{0.05, 0.25, 0.4, 0.2, 0.1};
  const auto r = direct_invert(exact_clicks(rho, 0.6, 8), 0.6, convolution_matrix(uniform_bins(8), 8));
  for (std::size_t n = 0; n < rho.size(); ++n) EXPECT_NEAR(r.rho_hat[n], rho[n], 1e-9);
  EXPECT_FALSE(r.negativity_flag);
  EXPECT_EQ(r.method, InversionMethod::direct);
}

TEST(Inversion, DirectAtUnitEfficiencyEqualsDeconvolution) {
  const auto p = exact_clicks({0.1, 0.2, 0.7}, 0.8, 4);
  const auto c = convolution_matrix(uniform_bins(4), 4);
  const auto r = direct_invert(p, 1.0, c);
  const auto d = deconvolve_clicks(p, c);
  for (std::size_t n = 0; n < d.stats.probs.size(); ++n) EXPECT_NEAR(r.rho_hat[n], d.stats.probs[n], 1e-14);
}

TEST(Inversion, DirectWithTooSmallEtaGoesNegative) {
  // thermal light analysed as if the loss were tiny; cut at 6 photons to keep
  // the enumeration oracle small
  std::vector<double> th(7);
  double s = 0.0;
  for (int k = 0; k <= 6; ++k) s += th[k] = oracle::bose_einstein(0.5, k);
  for (double& x : th) x /= s;
  const auto r = direct_invert(exact_clicks(th, 0.3, 8), 0.05, convolution_matrix(uniform_bins(8), 8));
  EXPECT_TRUE(r.negativity_flag);
  EXPECT_TRUE(r.rho_hat.is_quasi());
}

TEST(Inversion, EmFixedPointOnExactData) {
  const std::vector<double> rho{0.03, 0.9, 0.07};
  const double eta = 0.4;
  const auto c = convolution_matrix(uniform_bins(8), 2);
  const Matrix m = compose(c, loss_matrix(eta, 2)).entries;
  const Eigen::VectorXd truth = to_eigen(rho);
  const Eigen::VectorXd p = m * truth;
  const Eigen::VectorXd next = em_step(m, p, truth);
  EXPECT_LT((next - truth).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Inversion, EmLikelihoodIsMonotone) {
  const CountHistogram h{{6000, 3500, 420, 60, 15, 5, 0, 0, 0}, 1};
  const auto r = em_invert(h, 0.4, convolution_matrix(uniform_bins(8), 20), {20, 1e-12, 5000, true});
  ASSERT_GT(r.log_likelihood_trace.size(), 10u);
  EXPECT_TRUE(is_monotone(r.log_likelihood_trace));
  EXPECT_GE(r.rho_hat.min_entry(), 0.0);
  EXPECT_FALSE(r.negativity_flag);
}

TEST(Inversion, EmRecoversFockStatesAtModerateEfficiency) {
  for (double eta : {0.55, 0.8}) {
    const auto p = exact_clicks({0, 0, 1}, eta, 8);
    const auto r = em_invert(p, eta, convolution_matrix(uniform_bins(8), 20), {20, 0.0, 3'000'000, false});
    EXPECT_LT(total_variation(r.rho_hat.probs(), fock(2, 20).probs()), 1e-6) << eta;
  }
}

TEST(Inversion, EmRecoversFockTwoAtLowEfficiency) {
  const auto p = exact_clicks({0, 0, 1}, 0.315, 8);
  const auto r = em_invert(p, 0.315, convolution_matrix(uniform_bins(8), 20), {20, 0.0, 8'000'000, false});
  EXPECT_LT(total_variation(r.rho_hat.probs(), fock(2, 20).probs()), 1e-6);
}

TEST(Inversion, EmStopsOnTolerance) {
  const auto p = exact_clicks({0.1, 0.9}, 0.5, 8);
  const auto r = em_invert(p, 0.5, convolution_matrix(uniform_bins(8), 10), {10, 1e-8, 100000, true});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 100000);
  EXPECT_EQ(r.log_likelihood_trace.size(), static_cast<std::size_t>(r.iterations) + 1);
}

TEST(Inversion, EmInputErrors) {
  const auto c = convolution_matrix(uniform_bins(8), 10);
  EXPECT_THROW(em_invert(CountHistogram{{10, 5}, 1}, 0.0, c), DomainError);
  EXPECT_THROW(em_invert(CountHistogram{{0, 0}, 1}, 0.5, c), InsufficientDataError);
  EXPECT_THROW(em_invert(CountHistogram{std::vector<std::uint64_t>(12, 1), 1}, 0.5, c), ShapeError);
}

TEST(Inversion, Fidelity) {
  EXPECT_NEAR(fidelity(fock(1, 5), fock(1, 5)), 1.0, 1e-15);
  EXPECT_EQ(fidelity(fock(1, 5), fock(2, 5)), 0.0);
  const auto a = PhotonDistribution::from_probs({0.1, 0.9});
  const auto b = PhotonDistribution::from_probs({0.4, 0.6});
  const double s = std::sqrt(0.04) + std::sqrt(0.54);
  EXPECT_NEAR(fidelity(a, b), s * s, 1e-15);
  EXPECT_THROW(fidelity(fock(1, 5), fock(1, 6)), ShapeError);
}

TEST(Inversion, MethodNames) {
  EXPECT_EQ(inversion_method_from_string("em"), InversionMethod::em);
  EXPECT_EQ(inversion_method_from_string(to_string(InversionMethod::direct)), InversionMethod::direct);
  EXPECT_THROW(inversion_method_from_string("svd"), DomainError);
}
