#include "tmdstat/inversion.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "tmdstat/errors.hpp"

namespace tmdstat {
namespace {

constexpr double kNegativityTol = 1e-9;

Matrix square_block(const ConvolutionMatrix& c) {
  const int bins = c.bins();
  if (c.n_max() >= bins) return c.entries.topLeftCorner(bins + 1, bins + 1);
  return convolution_matrix(c.bin_probs, bins).entries;
}

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

Eigen::VectorXd padded(std::span<const double> v, Eigen::Index len) {
  if (static_cast<Eigen::Index>(v.size()) > len) {
    std::ostringstream os;
    os << "click statistics have " << v.size() << " outcomes but the detector has only " << len;
    throw ShapeError(os.str());
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(len);
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

InversionResult run_em(const Eigen::VectorXd& counts_or_probs, double eta, const ConvolutionMatrix& c,
                       const EmOptions& opts) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("EM inversion needs an efficiency in (0, 1]");
  if (opts.n_max < 0) throw DomainError("n_max must be nonnegative");
  const double total = counts_or_probs.sum();
  if (!(total > 0.0)) throw InsufficientDataError("EM inversion of an all-zero histogram");

  const Matrix m = compose(convolution_matrix(c.bin_probs, opts.n_max), loss_matrix(eta, opts.n_max)).entries;
  const Eigen::VectorXd w = padded({counts_or_probs.data(), static_cast<std::size_t>(counts_or_probs.size())},
                                   m.rows());
  const Eigen::VectorXd f = w / total;

  // Uniform, strictly positive start: EM can never revive an entry that hits zero.
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(m.cols(), 1.0 / static_cast<double>(m.cols()));
  Eigen::VectorXd q = m * rho;

  InversionResult out;
  out.method = InversionMethod::em;
  out.eta = eta;
  double ll = log_likelihood(m, w, rho);
  if (opts.record_trace) out.log_likelihood_trace.push_back(ll);

  for (long it = 0; it < opts.max_iter; ++it) {
    Eigen::VectorXd ratio(m.rows());
    for (Eigen::Index k = 0; k < m.rows(); ++k) ratio(k) = (f(k) > 0.0 && q(k) > 0.0) ? f(k) / q(k) : 0.0;
    rho = rho.cwiseProduct(m.transpose() * ratio);
    Eigen::VectorXd q_next = m * rho;

    // Gain from the ratio of successive predictions; stays accurate when the
    // likelihood itself no longer changes in its leading digits.
    double gain = 0.0;
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      if (w(k) > 0.0) gain += w(k) * std::log1p((q_next(k) - q(k)) / q(k));
    }
    q = std::move(q_next);
    ll = 0.0;
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      if (w(k) > 0.0) ll += w(k) * std::log(q(k));
    }
    ++out.iterations;
    if (opts.record_trace) out.log_likelihood_trace.push_back(ll);
    if (opts.tol > 0.0 && gain <= opts.tol * std::abs(ll)) {
      out.converged = true;
      break;
    }
  }

  rho /= rho.sum();
  out.rho_hat = PhotonDistribution::from_weights(to_std(rho));
  out.min_entry = out.rho_hat.min_entry();
  out.negativity_flag = false;
  return out;
}

}  // namespace

Deconvolved deconvolve_clicks(const ClickDistribution& p_click, const ConvolutionMatrix& c,
                              DeconvolutionOptions opts) {
  const Matrix block = square_block(c);
  const double cond = condition_number(block);
  if (!(cond <= opts.max_condition) && !opts.force) {
    std::ostringstream os;
    os << "TMD convolution block has condition number " << cond << " > " << opts.max_condition
       << "; use fewer bins or force the inversion";
    throw ConditioningError(os.str(), cond);
  }
  const Eigen::VectorXd p = padded(p_click.probs(), block.rows());
  const auto lu = block.partialPivLu();
  const Matrix inv = lu.inverse();

  Deconvolved out;
  out.condition_number = cond;
  out.stats.probs = to_std(inv * p);
  out.stats.total = p_click.total_counts();
  if (p_click.source() == ClickDistribution::Source::empirical && p_click.total_counts() > 0) {
    Matrix sigma = Matrix(p.asDiagonal()) - p * p.transpose();
    sigma /= static_cast<double>(p_click.total_counts());
    out.stats.covariance = inv * sigma * inv.transpose();
  }
  out.negativity_flag = out.stats.has_negative(kNegativityTol);
  return out;
}

Matrix loss_matrix_inverse(double eta, int n_max) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("loss matrix is singular for eta outside (0, 1]");
  if (eta < 0.05 && n_max > 20) {
    throw DomainError("loss inversion at eta < 0.05 with n_max > 20 overflows; reduce n_max");
  }
  Matrix inv = Matrix::Zero(n_max + 1, n_max + 1);
  const double back = 1.0 - 1.0 / eta;
  for (int m = 0; m <= n_max; ++m) {
    for (int n = 0; n <= m; ++n) {
      inv(n, m) = binomial(m, n) * std::pow(eta, -n) * std::pow(back, m - n);
    }
  }
  return inv;
}

const char* to_string(InversionMethod m) { return m == InversionMethod::em ? "em" : "direct"; }

InversionMethod inversion_method_from_string(const std::string& s) {
  if (s == "em") return InversionMethod::em;
  if (s == "direct") return InversionMethod::direct;
  throw DomainError("unknown inversion method '" + s + "' (expected em or direct)");
}

InversionResult direct_invert(const ClickDistribution& p_click, double eta, const ConvolutionMatrix& c,
                              DeconvolutionOptions opts) {
  if (!(eta > 0.0)) throw DomainError("direct inversion is singular at eta = 0");
  Deconvolved d = deconvolve_clicks(p_click, c, opts);
  const int n_max = c.bins();
  Eigen::VectorXd rho = loss_matrix_inverse(eta, n_max) * to_eigen(d.stats.probs);
  InversionResult out;
  out.method = InversionMethod::direct;
  out.eta = eta;
  out.condition_number = d.condition_number;
  out.converged = true;
  out.rho_hat = PhotonDistribution::quasi(to_std(rho));
  out.min_entry = out.rho_hat.min_entry();
  out.negativity_flag = out.min_entry < -kNegativityTol;
  return out;
}

InversionResult em_invert(const CountHistogram& hist, double eta, const ConvolutionMatrix& c, EmOptions opts) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(hist.counts.size()));
  for (std::size_t i = 0; i < hist.counts.size(); ++i) w(static_cast<Eigen::Index>(i)) = static_cast<double>(hist.counts[i]);
  return run_em(w, eta, c, opts);
}

InversionResult em_invert(const ClickDistribution& p_click, double eta, const ConvolutionMatrix& c, EmOptions opts) {
  return run_em(to_eigen(p_click.probs()), eta, c, opts);
}

Eigen::VectorXd em_step(const Matrix& m, const Eigen::VectorXd& weights, const Eigen::VectorXd& rho) {
  const Eigen::VectorXd f = weights / weights.sum();
  const Eigen::VectorXd q = m * rho;
  Eigen::VectorXd ratio(m.rows());
  for (Eigen::Index k = 0; k < m.rows(); ++k) ratio(k) = (f(k) > 0.0 && q(k) > 0.0) ? f(k) / q(k) : 0.0;
  return rho.cwiseProduct(m.transpose() * ratio);
}

double log_likelihood(const Matrix& m, const Eigen::VectorXd& weights, const Eigen::VectorXd& rho) {
  const Eigen::VectorXd q = m * rho;
  double ll = 0.0;
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    if (weights(k) > 0.0) ll += weights(k) * std::log(q(k));
  }
  return ll;
}

bool is_monotone(const std::vector<double>& trace, double rel_tol) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i] < trace[i - 1] - rel_tol * std::abs(trace[i - 1])) return false;
  }
  return true;
}

double fidelity(const PhotonDistribution& p, const PhotonDistribution& q) {
  if (p.size() != q.size()) throw ShapeError("fidelity: distributions have different n_max");
  double s = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    if (p[n] > 0.0 && q[n] > 0.0) s += std::sqrt(p[n] * q[n]);
  }
  return std::min(1.0, s * s);
}

}  // namespace tmdstat
