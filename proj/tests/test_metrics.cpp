#include <gtest/gtest.h>

#include <cmath>

#include "nest/etas.hpp"
#include "nest/kernel_net.hpp"
#include "nest/metrics.hpp"
#include "nest/prediction.hpp"
#include "nest/sampler.hpp"
#include "nest/synthetic.hpp"
#include "oracles/oracles.hpp"

using namespace nest;

namespace {

const ObservationWindow kWin = ObservationWindow::canonical();

EtasParams poisson(double rate) { return {rate, 1.0, 0.0, 0.1, 0.1}; }

std::vector<EventSequence> simulate(const EtasParams& e, int n, std::uint64_t seed,
                                    const ObservationWindow& w = kWin) {
  SamplerConfig sc;
  sc.seed = seed;
  sc.bound_strategy = BoundStrategy::MixtureBound;
  sc.bound_margin = 1.0;
  return sample_rollouts(e, w, n, sc);
}

/// Returns the true next event; relies on the history being a prefix of a stored sequence.
Prediction truth_predictor(std::span<const Event> history, const ObservationWindow&) {
  const Event& next = *(history.data() + history.size());
  return {next.t, next.s, 1.0};
}

}  // namespace

TEST(Quantile, TypeSevenInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.75), 7.0);
  EXPECT_THROW(quantile({}, 0.5), EmptyInput);
}

TEST(PredictNext, PoissonMeanWaitAndCentroid) {
  const ObservationWindow w(50.0, -1, 1, -1, 1);
  const EtasParams p = poisson(0.25);
  for (SpatialRule rule : {SpatialRule::Analytic, SpatialRule::GaussLegendre}) {
    PredictOptions o;
    o.spatial = rule;
    const Prediction pred = predict_next({}, p, w, o);
    EXPECT_NEAR(pred.t, 1.0, 0.01);
    EXPECT_NEAR(pred.s.x, 0.0, 1e-12);
    EXPECT_NEAR(pred.s.y, 0.0, 1e-12);
    EXPECT_NEAR(pred.mass, 1.0, 1e-6);
  }
}

TEST(PredictNext, SymmetricKernelAtOriginPredictsOrigin) {
  const EtasParams e{0.2, 1.0, 0.6, 0.1, 0.1};
  const std::vector<Event> h{{2.0, {0.0, 0.0}}};
  for (SpatialRule rule : {SpatialRule::Analytic, SpatialRule::GaussLegendre}) {
    PredictOptions o;
    o.spatial = rule;
    const Prediction pred = predict_next(h, e, kWin, o);
    EXPECT_NEAR(pred.s.x, 0.0, 1e-9);
    EXPECT_NEAR(pred.s.y, 0.0, 1e-9);
  }
}

TEST(PredictNext, MatchesMonteCarloThinning) {
  NetShape shape;
  shape.hidden = {6};
  shape.offset_scale_x = shape.offset_scale_y = 0.2;
  ModelParams p = ModelParams::initialized(shape, 8);
  p.set_head_bias(0, Head::SigmaX, softplus_inverse(0.08));
  p.set_head_bias(0, Head::SigmaY, softplus_inverse(0.06));
  p.set_head_bias(0, Head::MuX, 1.0);
  p.set_lambda0(0.05);
  p.set_beta(0.8);
  p.set_magnitude(0.7);
  const std::vector<Event> h{{3.0, {0.2, -0.1}}, {3.4, {0.25, -0.05}}};
  const ObservationWindow w(6.0, -1, 1, -1, 1);
  const Prediction pred = predict_next(h, p, w);

  SamplerConfig cfg;
  cfg.bound_strategy = BoundStrategy::MixtureBound;
  cfg.bound_margin = 1.0;
  Rng rng(77);
  std::vector<double> ts, xs, ys;
  const int n = 1000000;
  for (int i = 0; i < n; ++i)
    if (auto e = sample_next_event(p, h, w, cfg, rng)) {
      ts.push_back(e->t);
      xs.push_back(e->s.x);
      ys.push_back(e->s.y);
    }
  const double k = static_cast<double>(ts.size());
  EXPECT_NEAR(pred.mass, k / n, 3.0 * std::sqrt(pred.mass * (1 - pred.mass) / n));
  EXPECT_NEAR(pred.t, oracle::mean(ts), 3.0 * std::sqrt(oracle::variance(ts) / k));
  EXPECT_NEAR(pred.s.x, oracle::mean(xs), 3.0 * std::sqrt(oracle::variance(xs) / k));
  EXPECT_NEAR(pred.s.y, oracle::mean(ys), 3.0 * std::sqrt(oracle::variance(ys) / k));
}

TEST(PredictNext, RejectsHistoryAtHorizon) {
  const std::vector<Event> h{{10.0, {0.0, 0.0}}};
  EXPECT_THROW(predict_next(h, poisson(0.5), kWin), DegenerateWindow);
  EXPECT_THROW(predict_next({}, poisson(0.0), kWin), DegenerateWindow);
}

TEST(MseOneStep, PerfectPredictorScoresZero) {
  const auto test = simulate(poisson(0.5), 5, 1);
  EXPECT_EQ(mse_one_step(truth_predictor, test, MseMode::SpaceTime).estimate, 0.0);
  EXPECT_EQ(mse_one_step(truth_predictor, test, MseMode::TimeOnly).estimate, 0.0);
}

TEST(MseOneStep, RandomPredictorMatchesUniformExpectation) {
  const auto test = simulate(poisson(0.5), 200, 2);
  double expected = 0.0, count = 0.0;
  for (const auto& s : test)
    for (std::size_t i = 1; i < s.size(); ++i) {
      const double a = s.events[i - 1].t, b = 10.0, t = s.events[i].t;
      expected += (b - a) * (b - a) / 12.0 + std::pow(0.5 * (a + b) - t, 2);
      expected += 8.0 / 12.0 + std::pow(s.events[i].s.x, 2) + std::pow(s.events[i].s.y, 2);
      count += 1.0;
    }
  expected /= count;
  const auto r = mse_one_step(random_predictor(3), test, MseMode::SpaceTime);
  EXPECT_NEAR(r.estimate, expected, 0.05 * expected);
  const auto fitted = mse_one_step(model_predictor(poisson(0.5)), test, MseMode::SpaceTime);
  EXPECT_LT(fitted.estimate, r.estimate);
}

TEST(MseOneStep, TimeOnlyIgnoresSpatialPerturbation) {
  const auto test = simulate(poisson(0.5), 10, 4);
  const Predictor base = model_predictor(poisson(0.5));
  const Predictor shifted = [&](std::span<const Event> h, const ObservationWindow& w) {
    Prediction p = base(h, w);
    p.s.x += 0.7;
    return p;
  };
  EXPECT_EQ(mse_one_step(base, test, MseMode::TimeOnly).estimate, mse_one_step(shifted, test, MseMode::TimeOnly).estimate);
  EXPECT_NE(mse_one_step(base, test, MseMode::SpaceTime).estimate,
            mse_one_step(shifted, test, MseMode::SpaceTime).estimate);
}

TEST(MseOneStep, SpaceTimeDecomposes) {
  const auto test = simulate(EtasParams{0.3, 1.0, 0.5, 0.1, 0.1}, 10, 5);
  const auto b = mse_breakdown(model_predictor(EtasParams{0.3, 1.0, 0.5, 0.1, 0.1}), test);
  const double st = mse_report(b, MseMode::SpaceTime).estimate, to = mse_report(b, MseMode::TimeOnly).estimate;
  EXPECT_NEAR(st, to + b.space_mse(), 1e-12);
}

TEST(MseOneStep, RejectsShortSequences) {
  std::vector<EventSequence> test{{{{1.0, {0, 0}}}, kWin}};
  EXPECT_THROW(mse_one_step(truth_predictor, test, MseMode::TimeOnly), EmptyInput);
  EXPECT_THROW(mse_one_step(truth_predictor, {}, MseMode::TimeOnly), EmptyInput);
}

TEST(MetricReport, QuantilesBracketMedianAndAreDeterministic) {
  const auto test = simulate(poisson(0.5), 30, 6);
  const auto a = mse_one_step(random_predictor(9), test, MseMode::SpaceTime);
  const auto b = mse_one_step(random_predictor(9), test, MseMode::SpaceTime);
  EXPECT_EQ(a.repetitions, 20);
  EXPECT_LE(a.q25, a.median);
  EXPECT_LE(a.median, a.q75);
  EXPECT_EQ(a.q25, b.q25);
  EXPECT_EQ(a.q75, b.q75);
}

TEST(MmdMetric, IdenticalSequencesGiveExactZero) {
  const auto s = simulate(poisson(0.5), 20, 7);
  for (const auto& seq : s) {
    const std::vector<EventSequence> one{seq};
    EXPECT_EQ(mmd_metric(one, one, MmdConfig{}, 10).estimate, 0.0);
  }
  const std::vector<EventSequence> copies(5, s[0]);
  EXPECT_EQ(mmd_metric(copies, copies, MmdConfig{}, 10).estimate, 0.0);
}

TEST(MmdMetric, SeparatesPoissonRates) {
  std::vector<double> diff;
  for (int r = 0; r < 20; ++r) {
    const auto high = simulate(poisson(2.0), 30, 1000 + r), high2 = simulate(poisson(2.0), 30, 2000 + r);
    const auto low = simulate(poisson(0.5), 30, 3000 + r);
    MetricOptions o;
    o.seed = static_cast<std::uint64_t>(r);
    o.repetitions = 5;
    diff.push_back(mmd_metric(high, low, MmdConfig{}, 50, o).estimate - mmd_metric(high, high2, MmdConfig{}, 50, o).estimate);
  }
  const double se = std::sqrt(oracle::variance(diff) / 20.0);
  EXPECT_GT(oracle::mean(diff), 2.539 * se);  // one-sided t, 19 dof, 99%
}

TEST(MmdMetric, SymmetricInArguments) {
  const auto a = simulate(poisson(0.5), 7, 8), b = simulate(poisson(1.0), 11, 9);
  EXPECT_DOUBLE_EQ(mmd_metric(a, b, MmdConfig{}, 30).estimate, mmd_metric(b, a, MmdConfig{}, 30).estimate);
}

TEST(SequenceMmd, MatchesBruteForce) {
  const auto s = simulate(poisson(0.3), 2, 10);
  MmdConfig m{0.8, 1.0, 1.0};
  auto k = [&](const Event& x, const Event& y) {
    const double d = std::pow(x.t - y.t, 2) + std::pow(x.s.x - y.s.x, 2) + std::pow(x.s.y - y.s.y, 2);
    return std::exp(-d / (2 * 0.64));
  };
  double total = 0.0;
  for (const auto& x : s[0].events)
    for (const auto& y : s[0].events) total += k(x, y);
  for (const auto& x : s[1].events)
    for (const auto& y : s[1].events) total += k(x, y);
  for (const auto& x : s[0].events)
    for (const auto& y : s[1].events) total -= 2 * k(x, y);
  EXPECT_NEAR(sequence_mmd(s[0], s[1], m), std::sqrt(total), 1e-12);
}

TEST(Loglik, TrueRateBeatsDoubledRate) {
  const auto test = simulate(poisson(0.5), 50, 11);
  const auto good = loglik_per_sequence(poisson(0.5), test), bad = loglik_per_sequence(poisson(1.0), test);
  EXPECT_GT(good.estimate, bad.estimate);
  double oracle_ll = 0.0;
  for (const auto& s : test) oracle_ll += static_cast<double>(s.size()) * std::log(0.5) - 0.5 * 40.0;
  EXPECT_NEAR(good.estimate, oracle_ll / 50.0, 1e-9);
}

TEST(Loglik, EmptyTestSetRejected) { EXPECT_THROW(loglik_per_sequence(poisson(0.5), {}), EmptyInput); }

TEST(Loglik, OrderInvariant) {
  auto test = simulate(EtasParams{0.3, 1.0, 0.5, 0.1, 0.1}, 12, 12);
  const auto a = loglik_per_sequence(EtasParams{0.3, 1.0, 0.5, 0.1, 0.1}, test);
  std::reverse(test.begin(), test.end());
  const auto b = loglik_per_sequence(EtasParams{0.3, 1.0, 0.5, 0.1, 0.1}, test);
  EXPECT_NEAR(a.estimate, b.estimate, 1e-12 * std::abs(a.estimate));
  EXPECT_EQ(a.q25, b.q25);
  EXPECT_EQ(a.q75, b.q75);
}

TEST(Recovery, SelfComparisonIsPerfect) {
  const auto g = make_synthetic_generator(FieldPreset::Nonlinear, 1);
  const auto truth = g.truth(20, 20);
  const RecoveryReport r = recovery_report(truth, g.model);
  for (KernelField f : {KernelField::SigmaX, KernelField::SigmaY, KernelField::Rho}) {
    EXPECT_NEAR(r.get(f).correlation, 1.0, 1e-12);
    EXPECT_EQ(r.get(f).rmse, 0.0);
    EXPECT_FALSE(r.get(f).degenerate);
  }
}

TEST(Recovery, ConstantFittedFieldIsFlagged) {
  const auto truth = make_synthetic_generator(FieldPreset::Linear, 1).truth(10, 10);
  const RecoveryReport r = recovery_report(truth, EtasParams{0.1, 1.0, 0.5, 0.2, 0.2});
  EXPECT_TRUE(r.get(KernelField::SigmaX).degenerate);
  EXPECT_EQ(r.get(KernelField::SigmaX).correlation, 0.0);
  EXPECT_GT(r.get(KernelField::SigmaX).rmse, 0.0);
}

TEST(Recovery, MismatchedLatticesRejected) {
  const auto g = make_synthetic_generator(FieldPreset::Linear, 1);
  EXPECT_THROW(recovery_report(g.truth(10, 10), g.truth(11, 10)), MismatchedLattice);
}
