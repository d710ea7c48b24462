#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmdstat/detector_model.hpp"
#include "tmdstat/statistics.hpp"

namespace tmdstat {

enum class EstimatorOrder { klyshko, single_trigger, j0, j1, j2, average };
const char* to_string(EstimatorOrder order);

inline constexpr double kDefaultSigmaThreshold = 3.0;

/// Signal-arm efficiency inferred from conditional statistics.
///
/// `defined` is false when the estimator has no real solution for the data;
/// `diagnostic` then says why and `eta_hat` is NaN. For single-trigger
/// estimates `residual` holds |p(0|t=1) - (1 - eta)|, which grows with
/// multi-pair contamination. `consistent`/`spread` are filled on averages.
struct EfficiencyEstimate {
  EstimatorOrder order = EstimatorOrder::average;
  double eta_hat = 0.0;
  double std_err = 0.0;
  bool defined = true;
  std::string diagnostic;
  double residual = 0.0;
  bool consistent = true;
  double spread = 0.0;
};

/// eta_K = sum_{i>=1} N_i / sum_{i>=0} N_i with binomial standard error.
EfficiencyEstimate klyshko_efficiency(const CountHistogram& h);
/// Same on click probabilities; zero error for analytic input.
EfficiencyEstimate klyshko_efficiency(const ClickDistribution& p);

/// eta = p(1|t=1) on photon-number-resolved statistics.
EfficiencyEstimate single_trigger_efficiency(const ResolvedStatistics& p);

/// The three two-photon-trigger relations: from p(0|t=2), p(1|t=2), p(2|t=2).
/// An estimator without a real root is returned with defined == false.
std::array<EfficiencyEstimate, 3> double_trigger_efficiencies(const ResolvedStatistics& p);

/// Individual inverse relations. Throw EstimatorDomainError outside their range.
double eta_from_vacuum(double p0);     ///< 1 - sqrt(p0)
double eta_from_single(double p1);     ///< (1 - sqrt(1 - 2 p1)) / 2
double eta_from_pair(double p2);       ///< sqrt(p2)

/// p(n|t=k) = C(k, n) eta^n (1 - eta)^(k - n), n = 0..k.
std::vector<double> conditional_loss_pmf(int k, double eta);

struct ConsistencyResult {
  bool consistent = true;
  double spread = 0.0;          ///< max - min of the defined estimates
  double combined_std_err = 0.0;  ///< sqrt of the summed variances
};

/// Defined estimates agree if their spread is within sigma_threshold combined
/// standard errors. Needs at least two defined estimates.
ConsistencyResult consistency_check(std::span<const EfficiencyEstimate> estimates,
                                    double sigma_threshold = kDefaultSigmaThreshold);

/// Inverse-variance weighted mean of the defined estimates; a plain mean when
/// any of them carries zero error (analytic input).
EfficiencyEstimate weighted_average(std::span<const EfficiencyEstimate> estimates,
                                    double sigma_threshold = kDefaultSigmaThreshold);

/// Plain mean with half the spread as its error bar.
EfficiencyEstimate plain_average(std::span<const EfficiencyEstimate> estimates);

struct TransmissionRatio {
  double t_hat = 0.0;
  double std_err = 0.0;
};

/// eta_with / eta_without, errors combined in quadrature.
TransmissionRatio transmission_ratio(const EfficiencyEstimate& with_filter, const EfficiencyEstimate& without_filter);

/// Everything the calibration stage derives from one conditional histogram.
struct CalibrationReport {
  TriggerLabel trigger = kUnconditioned;
  std::uint64_t total = 0;
  std::vector<EfficiencyEstimate> estimates;  ///< per-order, each order once
  EfficiencyEstimate weighted;                ///< feeds the inversion
  EfficiencyEstimate plain;
  ConsistencyResult consistency;
  double sigma_threshold = kDefaultSigmaThreshold;
  std::vector<double> resolved;               ///< C^-1 p that the estimators saw
  bool resolved_negative = false;
};

/// t=1: Klyshko and p(1|t=1); t=2: the three two-photon relations.
/// Other labels have no estimator and throw DomainError.
CalibrationReport calibrate(const CountHistogram& h, const ConvolutionMatrix& c,
                            double sigma_threshold = kDefaultSigmaThreshold);

/// Standard error of one estimator order by multinomial resampling of `h`.
double bootstrap_std_err(const CountHistogram& h, const ConvolutionMatrix& c, EstimatorOrder order, int replicas,
                         std::uint64_t seed);

}  // namespace tmdstat
