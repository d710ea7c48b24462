#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmdstat/distributions.hpp"
#include "tmdstat/statistics.hpp"

namespace tmdstat {

inline constexpr double kDefaultWitnessTol = 1e-9;

/// Mandel Q = (variance - mean) / mean. Click distributions are treated as
/// photon counts. Throws DomainError for zero mean.
double mandel_q(std::span<const double> p);
inline double mandel_q(const PhotonDistribution& p) { return mandel_q(p.probs()); }
inline double mandel_q(const ClickDistribution& p) { return mandel_q(p.probs()); }

/// Delta-method standard error of Q estimated from `total` multinomial samples
/// with frequencies `f`.
double mandel_q_std_err(std::span<const double> f, std::uint64_t total);

/// B(n) = (n+2) rho(n) rho(n+2) - (n+1) rho(n+1)^2; negative at any n means
/// the P function is not a classical probability density.
double b_criterion(const PhotonDistribution& p, int n);

/// B(n) for n = 0 .. n_max - 2.
std::vector<double> b_sweep(const PhotonDistribution& p);

struct QValue {
  std::optional<double> q;  ///< empty when undefined (zero mean)
  std::string error;        ///< why q is empty
  double tol = kDefaultWitnessTol;
  bool negative = false;    ///< q < -tol
};

struct NonclassicalityReport {
  QValue detected;  ///< on click statistics
  QValue inferred;  ///< on the reconstructed photon distribution
  std::vector<double> b_values;           ///< on the inferred distribution
  std::vector<double> detected_b_values;  ///< on the click statistics, clicks read as photon numbers
  double tol = kDefaultWitnessTol;
  bool p_negativity_witnessed = false;  ///< min B(n) < -tol
};

/// Q on both stages and the B(n) sweep on the inferred distribution. `tol`
/// applies to the inferred witnesses; for empirical clicks the detected-Q
/// tolerance is raised to three propagated standard errors.
NonclassicalityReport report(const PhotonDistribution& inferred, const ClickDistribution& clicks,
                             double tol = kDefaultWitnessTol);

}  // namespace tmdstat
