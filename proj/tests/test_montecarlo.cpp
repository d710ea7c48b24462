#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "oracles.hpp"
#include "tmdstat/errors.hpp"
#include "tmdstat/montecarlo.hpp"

using namespace tmdstat;

namespace {

ExperimentConfig single_trigger_config() {
  ExperimentConfig c;
  c.lambda = 0.1;
  c.herald = {TriggerKind::single_apd, 1, 0.25, 0.0};
  c.eta_signal = 0.373;
  c.pulses = 10'000'000;
  c.seed = 42;
  return c;
}

// Every frequency within `sigmas` binomial standard errors of the prediction.
void expect_matches(const CountHistogram& h, const ClickDistribution& p, double sigmas = 4.0) {
  const double n = static_cast<double>(h.total());
  ASSERT_GT(n, 0.0);
  ASSERT_EQ(h.counts.size(), p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f = static_cast<double>(h.counts[k]) / n;
    const double se = std::sqrt(std::max(p[k] * (1 - p[k]), 1e-300) / n);
    EXPECT_LE(std::abs(f - p[k]), sigmas * se + 1e-12) << "k=" << k << " f=" << f << " p=" << p[k];
  }
}

void expect_rate_matches(const SimulationOutput& s, double rate) {
  const double n = static_cast<double>(s.pulses_run);
  const double se = std::sqrt(rate * (1 - rate) / n);
  EXPECT_LE(std::abs(static_cast<double>(s.herald_count) / n - rate), 4 * se);
}

// Two-sample chi-square homogeneity p-value, pooling outcomes with few counts.
double homogeneity_p_value(const CountHistogram& a, const CountHistogram& b) {
  const double na = static_cast<double>(a.total()), nb = static_cast<double>(b.total());
  double chi2 = 0.0;
  int cells = 0;
  double pool_a = 0.0, pool_b = 0.0;
  auto add = [&](double xa, double xb) {
    const double tot = xa + xb;
    const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    chi2 += (xa - ea) * (xa - ea) / ea + (xb - eb) * (xb - eb) / eb;
    ++cells;
  };
  for (std::size_t k = 0; k < a.counts.size(); ++k) {
    const double xa = static_cast<double>(a.counts[k]), xb = static_cast<double>(b.counts[k]);
    if (xa + xb >= 20) {
      add(xa, xb);
    } else {
      pool_a += xa;
      pool_b += xb;
    }
  }
  if (pool_a + pool_b > 0) add(pool_a, pool_b);
  boost::math::chi_squared dist(cells - 1);
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

}  // namespace

TEST(MonteCarlo, VacuumSourceOnlyDarkHeralds) {
  ExperimentConfig c;
  c.lambda = 0.0;
  c.herald = {TriggerKind::single_apd, 1, 0.5, 1e-3};
  c.pulses = 2'000'000;
  const auto s = run(c);
  const auto& h = s.heralded();
  EXPECT_EQ(h.total(), h.counts[0]);
  EXPECT_EQ(s.herald_count, h.total());
  expect_rate_matches(s, 1e-3);
}

TEST(MonteCarlo, VacuumWithoutNoiseNeverHeralds) {
  ExperimentConfig c;
  c.lambda = 0.0;
  c.pulses = 1000;
  const auto s = run(c);
  EXPECT_EQ(s.herald_count, 0u);
  EXPECT_EQ(s.heralded().counts.size(), 9u);
}

TEST(MonteCarlo, SingleTriggerMatchesAnalyticModel) {
  const auto c = single_trigger_config();
  const auto s = run(c);
  const auto pred = predict(c);
  expect_matches(s.heralded(), pred.clicks);
  expect_rate_matches(s, pred.herald_rate);
  EXPECT_EQ(s.pulses_run, c.pulses);
}

TEST(MonteCarlo, TotalVariationShrinksWithHeralds) {
  auto c = single_trigger_config();
  c.pulses = 500'000'000;
  const auto s = run(c);
  const auto& h = s.heralded();
  ASSERT_GE(h.total(), 1'000'000u);
  const auto f = h.frequencies();
  const double tv = total_variation(f, predict(c).clicks.probs());
  EXPECT_LT(tv, 5.0 * std::sqrt(static_cast<double>(f.size()) / static_cast<double>(h.total())));
}

TEST(MonteCarlo, DoubleTriggerMatchesAnalyticModel) {
  ExperimentConfig c;
  c.lambda = std::sqrt(0.045);
  c.herald = {TriggerKind::double_apd_coincidence, 1, 0.8, 1e-3};
  c.eta_signal = 0.315;
  c.pulses = 100'000'000;
  c.seed = 3;
  const auto s = run(c);
  const auto pred = predict(c);
  expect_matches(s.heralded(), pred.clicks);
  expect_rate_matches(s, pred.herald_rate);
  EXPECT_EQ(s.heralded().trigger, 2);
}

TEST(MonteCarlo, ContaminantsMatchAnalyticModel) {
  for (auto kind : {Contaminant::Kind::coherent, Contaminant::Kind::thermal}) {
    auto c = single_trigger_config();
    c.contaminant = Contaminant{kind, 0.6};
    c.seed = 5;
    const auto s = run(c);
    expect_matches(s.heralded(), predict(c).clicks);
  }
}

TEST(MonteCarlo, NonUniformBinsAndFilter) {
  auto c = single_trigger_config();
  c.bins = {0.1, 0.2, 0.3, 0.4};
  c.lambda = 0.3;
  c.extra_transmission = 0.5;
  c.eta_signal = 0.9;
  c.seed = 8;
  const auto s = run(c);
  expect_matches(s.heralded(), predict(c).clicks);
}

TEST(MonteCarlo, IdealTriggerHeraldsExactFockState) {
  ExperimentConfig c;
  c.lambda = 0.4;
  c.herald = {TriggerKind::ideal_k_resolving, 2, 1.0, 0.0};
  c.eta_signal = 1.0;
  c.bins = uniform_bins(8);
  c.pulses = 1'000'000;
  const auto s = run(c);
  const auto pred = predict(c);
  expect_matches(s.heralded(), pred.clicks);
  expect_rate_matches(s, pred.herald_rate);
}

TEST(MonteCarlo, IdealZeroTriggerHeraldsVacuum) {
  ExperimentConfig c;
  c.lambda = 0.2;
  c.herald = {TriggerKind::ideal_k_resolving, 0, 1.0, 0.0};
  c.pulses = 200'000;
  const auto s = run(c);
  EXPECT_EQ(s.heralded().total(), s.heralded().counts[0]);
  expect_rate_matches(s, 1 - 0.04);
}

TEST(MonteCarlo, UnbalancedSplitterChangesCoincidences) {
  ExperimentConfig c;
  c.lambda = 0.3;
  c.herald = {TriggerKind::double_apd_coincidence, 1, 1.0, 0.0};
  c.pulses = 5'000'000;
  c.splitter_ratio = 0.9;
  const auto s = run(c);
  // two photons both at A or both at B do not coincide: P = 2 r (1 - r) for n = 2
  double rate = 0.0;
  for (int n = 2; n < 40; ++n) {
    const double g = std::pow(0.09, n) * 0.91;
    rate += g * (1 - std::pow(0.9, n) - std::pow(0.1, n));
  }
  expect_rate_matches(s, rate);
  EXPECT_THROW(predict(c), DomainError);
}

TEST(MonteCarlo, ReplayIsBitExact) {
  auto c = single_trigger_config();
  c.pulses = 3'000'000;
  c.chunk_pulses = 1 << 18;
  const auto a = run(c);
  const auto b = replay(c.seed, c);
  EXPECT_EQ(a.histograms, b.histograms);
  EXPECT_EQ(a.herald_count, b.herald_count);
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults) {
  auto c = single_trigger_config();
  c.pulses = 3'000'000;
  c.chunk_pulses = 100'000;
  const auto one = run(c, 1);
  for (int t : {2, 3, 8}) {
    const auto many = run(c, t);
    EXPECT_EQ(one.histograms, many.histograms) << t;
  }
}

TEST(MonteCarlo, DifferentSeedsAgreeStatistically) {
  auto c = single_trigger_config();
  const auto a = run(c);
  const auto b = replay(c.seed + 1, c);
  EXPECT_NE(a.heralded().counts, b.heralded().counts);
  EXPECT_GT(homogeneity_p_value(a.heralded(), b.heralded()), 1e-3);
}

TEST(MonteCarlo, ConfigValidation) {
  ExperimentConfig c;
  c.lambda = 1.0;
  EXPECT_THROW(run(c), DomainError);
  c = ExperimentConfig{};
  c.pulses = 0;
  EXPECT_THROW(run(c), DomainError);
  c = ExperimentConfig{};
  c.pulses = kMaxPulses + 1;
  EXPECT_THROW(run(c), DomainError);
  c = ExperimentConfig{};
  c.extra_transmission = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c = ExperimentConfig{};
  c.bins = {0.5, 0.4};
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(MonteCarlo, OutputEchoesConfigAndGenerator) {
  const auto c = single_trigger_config();
  auto small = c;
  small.pulses = 1000;
  const auto s = run(small);
  EXPECT_EQ(s.seed, small.seed);
  EXPECT_EQ(s.config_echo.pulses, 1000u);
  EXPECT_NE(s.rng.find("mt19937_64"), std::string::npos);
}
