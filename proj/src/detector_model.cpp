#include "tmdstat/detector_model.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "tmdstat/errors.hpp"

namespace tmdstat {
namespace {

struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

void check_eta(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    std::ostringstream os;
    os << "efficiency " << eta << " outside [0, 1]";
    throw DomainError(os.str());
  }
}

void check_bins(const std::vector<double>& bin_probs) {
  if (bin_probs.empty()) throw DomainError("detector needs at least one bin");
  double total = 0.0;
  for (double q : bin_probs) {
    if (!(q > 0.0)) throw DomainError("bin probabilities must be positive");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("bin probabilities must sum to 1");
}

bool all_equal(const std::vector<double>& v) {
  for (double q : v) {
    if (std::abs(q - v.front()) > 1e-15) return false;
  }
  return true;
}

}  // namespace

bool ConvolutionMatrix::uniform() const { return all_equal(bin_probs); }

std::vector<double> uniform_bins(int n) {
  if (n < 1) throw DomainError("detector needs at least one bin");
  return std::vector<double>(static_cast<std::size_t>(n), 1.0 / n);
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  // exact below 2^53; the running product is always an integer there
  return r < 9e15 ? std::round(r) : r;
}

LossMatrix loss_matrix(double eta, int n_max) {
  check_eta(eta);
  if (n_max < 0) throw DomainError("n_max must be nonnegative");
  LossMatrix l{eta, Matrix::Zero(n_max + 1, n_max + 1)};
  for (int n = 0; n <= n_max; ++n) {
    for (int m = 0; m <= n; ++m) {
      l.entries(m, n) = binomial(n, m) * std::pow(eta, m) * std::pow(1.0 - eta, n - m);
    }
  }
  return l;
}

PhotonDistribution apply_loss(const PhotonDistribution& p, double eta) {
  LossMatrix l = loss_matrix(eta, p.n_max());
  Eigen::VectorXd out = l.entries * to_eigen(p.probs());
  if (p.is_quasi()) return PhotonDistribution::quasi(to_std(out));
  for (auto& x : out) x = std::max(x, 0.0);
  return PhotonDistribution::from_weights(to_std(out), p.folded_tail());
}

ConvolutionMatrix convolution_matrix_by_subsets(const std::vector<double>& bin_probs, int n_max) {
  check_bins(bin_probs);
  const int bins = static_cast<int>(bin_probs.size());
  if (bins > kMaxNonUniformBins) {
    throw ComplexityError("subset inclusion-exclusion limited to " + std::to_string(kMaxNonUniformBins) + " bins");
  }
  if (n_max < 0) throw DomainError("n_max must be nonnegative");

  // entry(k, n) = sum over occupied-candidate sets S, |S| <= k, of
  //   (-1)^(k-|S|) * C(N-|S|, k-|S|) * q(S)^n
  std::vector<NeumaierSum> acc(static_cast<std::size_t>((bins + 1) * (n_max + 1)));
  const std::uint32_t subsets = 1u << bins;
  std::vector<double> power(static_cast<std::size_t>(n_max) + 1);
  for (std::uint32_t mask = 0; mask < subsets; ++mask) {
    const int s = std::popcount(mask);
    double q = 0.0;
    for (int b = 0; b < bins; ++b) {
      if (mask & (1u << b)) q += bin_probs[static_cast<std::size_t>(b)];
    }
    power[0] = 1.0;
    for (int n = 1; n <= n_max; ++n) power[static_cast<std::size_t>(n)] = power[static_cast<std::size_t>(n) - 1] * q;
    for (int k = s; k <= bins; ++k) {
      double coef = binomial(bins - s, k - s) * (((k - s) % 2) ? -1.0 : 1.0);
      for (int n = 0; n <= n_max; ++n) {
        acc[static_cast<std::size_t>(k * (n_max + 1) + n)].add(coef * power[static_cast<std::size_t>(n)]);
      }
    }
  }
  ConvolutionMatrix c{bin_probs, Matrix::Zero(bins + 1, n_max + 1)};
  for (int k = 0; k <= bins; ++k) {
    for (int n = k; n <= n_max; ++n) {
      c.entries(k, n) = acc[static_cast<std::size_t>(k * (n_max + 1) + n)].value();
    }
  }
  return c;
}

ConvolutionMatrix convolution_matrix(const std::vector<double>& bin_probs, int n_max) {
  check_bins(bin_probs);
  if (n_max < 0) throw DomainError("n_max must be nonnegative");
  if (!all_equal(bin_probs)) return convolution_matrix_by_subsets(bin_probs, n_max);

  const int bins = static_cast<int>(bin_probs.size());
  ConvolutionMatrix c{bin_probs, Matrix::Zero(bins + 1, n_max + 1)};
  // binom(N,k) * sum_j (-1)^j binom(k,j) ((k-j)/N)^n
  for (int n = 0; n <= n_max; ++n) {
    for (int k = 0; k <= std::min(n, bins); ++k) {
      NeumaierSum s;
      for (int j = 0; j <= k; ++j) {
        double term = binomial(k, j) * std::pow(static_cast<double>(k - j) / bins, n);
        s.add(j % 2 ? -term : term);
      }
      c.entries(k, n) = binomial(bins, k) * s.value();
    }
  }
  return c;
}

ClickDistribution forward_model(const PhotonDistribution& p, double eta, const std::vector<double>& bin_probs) {
  LossMatrix l = loss_matrix(eta, p.n_max());
  ConvolutionMatrix c = convolution_matrix(bin_probs, p.n_max());
  Eigen::VectorXd out = compose(c, l).entries * to_eigen(p.probs());
  for (auto& x : out) x = std::max(x, 0.0);
  out /= out.sum();
  return ClickDistribution::analytic(to_std(out));
}

TransferMatrix compose(const ConvolutionMatrix& c, const LossMatrix& l) {
  if (c.entries.cols() != l.entries.rows()) {
    std::ostringstream os;
    os << "compose: convolution matrix takes " << c.entries.cols() << " photon numbers, loss matrix emits "
       << l.entries.rows();
    throw ShapeError(os.str());
  }
  return {c.entries * l.entries};
}

double stochasticity_defect(const Matrix& m) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) worst = std::max(worst, std::abs(m.col(j).sum() - 1.0));
  return worst;
}

Eigen::VectorXd to_eigen(std::span<const double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace tmdstat
