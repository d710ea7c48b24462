#include "tmdstat/nonclassicality.hpp"

#include <algorithm>
#include <cmath>

#include "tmdstat/errors.hpp"

namespace tmdstat {

double mandel_q(std::span<const double> p) {
  const Moments m = moments(p);
  if (!(m.mean > 0.0)) throw DomainError("Mandel Q is undefined for zero mean (vacuum)");
  return (m.variance - m.mean) / m.mean;
}

double mandel_q_std_err(std::span<const double> f, std::uint64_t total) {
  if (total == 0) return 0.0;
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double x = static_cast<double>(k);
    m1 += x * f[k];
    m2 += x * x * f[k];
  }
  if (!(m1 > 0.0)) return 0.0;
  // Q = m2/m1 - m1 - 1
  const double d1 = -m2 / (m1 * m1) - 1.0;
  const double d2 = 1.0 / m1;
  double eg = 0.0, eg2 = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double x = static_cast<double>(k);
    const double g = x * d1 + x * x * d2;
    eg += g * f[k];
    eg2 += g * g * f[k];
  }
  return std::sqrt(std::max(0.0, eg2 - eg * eg) / static_cast<double>(total));
}

double b_criterion(const PhotonDistribution& p, int n) {
  if (n < 0 || n + 2 > p.n_max()) {
    throw DomainError("B(" + std::to_string(n) + ") needs rho up to n + 2 <= n_max = " + std::to_string(p.n_max()));
  }
  const auto i = static_cast<std::size_t>(n);
  return (n + 2) * p[i] * p[i + 2] - (n + 1) * p[i + 1] * p[i + 1];
}

std::vector<double> b_sweep(const PhotonDistribution& p) {
  std::vector<double> out;
  for (int n = 0; n + 2 <= p.n_max(); ++n) out.push_back(b_criterion(p, n));
  return out;
}

namespace {

QValue q_value(std::span<const double> p, double tol) {
  QValue v;
  v.tol = tol;
  try {
    v.q = mandel_q(p);
    v.negative = *v.q < -tol;
  } catch (const DomainError& e) {
    v.error = e.what();
  }
  return v;
}

}  // namespace

NonclassicalityReport report(const PhotonDistribution& inferred, const ClickDistribution& clicks, double tol) {
  NonclassicalityReport r;
  r.tol = tol;
  double detected_tol = tol;
  if (clicks.source() == ClickDistribution::Source::empirical) {
    detected_tol = std::max(tol, 3.0 * mandel_q_std_err(clicks.probs(), clicks.total_counts()));
  }
  r.detected = q_value(clicks.probs(), detected_tol);
  r.inferred = q_value(inferred.probs(), tol);
  r.b_values = b_sweep(inferred);
  r.detected_b_values = b_sweep(PhotonDistribution::from_probs(clicks.vector()));
  r.p_negativity_witnessed =
      !r.b_values.empty() && *std::min_element(r.b_values.begin(), r.b_values.end()) < -tol;
  return r;
}

}  // namespace tmdstat
