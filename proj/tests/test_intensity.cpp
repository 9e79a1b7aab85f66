#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nest/gradients.hpp"
#include "nest/intensity.hpp"
#include "nest/kernel_net.hpp"
#include "oracles/oracles.hpp"

using namespace nest;

namespace {

const ObservationWindow kWin = ObservationWindow::canonical();

std::vector<oracle::Source> oracle_sources(std::span<const Event> events, const ModelParams& p) {
  std::vector<oracle::Source> out;
  for (const Event& e : events) {
    oracle::Source s{e.t, e.s.x, e.s.y, {}};
    for (const Component& c : p.mixture_at(e.s))
      s.comps.push_back({c.params.mu_x, c.params.mu_y, c.params.sigma_x, c.params.sigma_y, c.params.rho, c.weight});
    out.push_back(s);
  }
  return out;
}

/// Small random model with kernel spreads near 0.1 so mass stays inside the region.
ModelParams random_model(int K, std::uint64_t seed, double weight_scale = 0.5) {
  NetShape shape;
  shape.components = K;
  shape.hidden = {4, 3};
  shape.offset_scale_x = 0.1;
  shape.offset_scale_y = 0.1;
  ModelParams p(shape);
  Rng rng(seed);
  for (std::size_t i = ModelParams::kNetworkBegin; i < p.size(); ++i) p.values()[i] = rng.uniform(-1, 1) * weight_scale;
  for (int k = 0; k < K; ++k) {
    p.set_head_bias(k, Head::SigmaX, softplus_inverse(0.1) + rng.uniform(-0.2, 0.2));
    p.set_head_bias(k, Head::SigmaY, softplus_inverse(0.1) + rng.uniform(-0.2, 0.2));
  }
  for (int k = 0; k < K; ++k)
    for (Head h : {Head::SigmaX, Head::SigmaY}) {
      auto* w = p.values().data() + p.head_weight_offset(k, h);
      for (int i = 0; i < p.embedding_dim(); ++i) w[i] *= 0.05;
    }
  p.set_lambda0(0.3);
  p.set_beta(1.2);
  p.set_magnitude(0.6);
  return p;
}

std::vector<Event> random_events(std::size_t n, std::uint64_t seed, double T = 10.0, double half = 0.5) {
  Rng rng(seed);
  std::vector<Event> ev;
  for (std::size_t i = 0; i < n; ++i) ev.push_back({rng.uniform(0.05, T - 0.05), {rng.uniform(-half, half), rng.uniform(-half, half)}});
  std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return ev;
}

}  // namespace

TEST(DiffusionKernel, IdentityCovarianceAtModeIsInverseTwoPiE) {
  const LocalKernelParams p{0.2, -0.1, 1.0, 1.0, 0.0};
  const double g = diffusion_kernel(2.0, 1.0, {0.2, -0.1}, {0.0, 0.0}, p, 1.0, 1.0);
  EXPECT_NEAR(g, 0.0585498315243192, 1e-15);
}

TEST(DiffusionKernel, RejectsNonCausalArguments) {
  const LocalKernelParams p{0, 0, 1, 1, 0};
  EXPECT_THROW(diffusion_kernel(1.0, 1.0, {}, {}, p, 1, 1), NonCausal);
  EXPECT_THROW(diffusion_kernel(0.5, 1.0, {}, {}, p, 1, 1), NonCausal);
}

TEST(DiffusionKernel, CorrelatedCaseMatchesExtendedPrecisionOracle) {
  const LocalKernelParams p{0.1, 0.2, 2.0, 1.0, 0.5};
  const Location s{1.1, 0.2}, sp{0.0, 0.0};  // s - s' - mu = (1, 0)
  const double g = diffusion_kernel(3.0, 2.5, s, sp, p, 0.8, 1.0);
  const long double ref = oracle::kernel(0.5L, 1.1L, 0.2L, 0.1L, 0.2L, 2.0L, 1.0L, 0.5L, 0.8L, 1.0L);
  EXPECT_NEAR(g, static_cast<double>(ref), 1e-15 * static_cast<double>(ref));
}

TEST(MixtureKernel, SingleComponentEqualsDiffusionKernel) {
  const LocalKernelParams p{0.05, 0.0, 0.3, 0.2, 0.1};
  const Mixture m{{p, 1.0}};
  EXPECT_EQ(mixture_kernel(1.5, 1.0, {0.1, 0.1}, {0, 0}, m, 1.0, 0.7),
            diffusion_kernel(1.5, 1.0, {0.1, 0.1}, {0, 0}, p, 1.0, 0.7));
}

TEST(MixtureKernel, TwoIdenticalHalvesEqualOneComponent) {
  const LocalKernelParams p{0.05, 0.0, 0.3, 0.2, 0.1};
  const Mixture one{{p, 1.0}}, two{{p, 0.5}, {p, 0.5}};
  EXPECT_NEAR(mixture_kernel(1.5, 1.0, {0.1, 0.1}, {0, 0}, two, 1.0, 0.7),
              mixture_kernel(1.5, 1.0, {0.1, 0.1}, {0, 0}, one, 1.0, 0.7), 1e-15);
}

TEST(MixtureKernel, ThreeComponentsMatchTermByTermOracle) {
  const ModelParams p = random_model(3, 5);
  const Location s{0.12, -0.05}, sp{0.1, 0.0};
  const std::vector<Event> src{{1.0, sp}};
  const auto o = oracle_sources(src, p);
  long double ref = 0.0L;
  for (const auto& c : o[0].comps) ref += c.w * oracle::kernel(0.3L, s.x - sp.x, s.y - sp.y, c.mu_x, c.mu_y, c.sx, c.sy, c.rho, 1.2L, 0.6L);
  EXPECT_NEAR(mixture_kernel(1.3, 1.0, s, sp, p), static_cast<double>(ref), 1e-13 * static_cast<double>(ref));
}

TEST(ConditionalIntensity, EmptyHistoryIsBackground) {
  const ModelParams p = random_model(2, 1);
  EXPECT_EQ(conditional_intensity(3.0, {0.1, 0.2}, {}, p), 0.3);
}

TEST(ConditionalIntensity, OnePastEventAddsOneKernel) {
  const ModelParams p = random_model(1, 2);
  const std::vector<Event> h{{1.0, {0.0, 0.0}}};
  const Mixture m = p.mixture_at(h[0].s);
  const double expected = 0.3 + diffusion_kernel(1.4, 1.0, {0.05, 0.02}, h[0].s, m[0].params, 1.2, 0.6);
  EXPECT_NEAR(conditional_intensity(1.4, {0.05, 0.02}, h, p), expected, 1e-14);
}

TEST(ConditionalIntensity, FivePastEventsTwoComponentsMatchBruteForce) {
  const ModelParams p = random_model(2, 3);
  const std::vector<Event> h = random_events(5, 4, 5.0);
  const auto o = oracle_sources(h, p);
  for (Location s : {Location{0.0, 0.0}, Location{0.3, -0.2}, Location{-0.45, 0.4}}) {
    const double ref = static_cast<double>(oracle::intensity(5.5, s.x, s.y, o, 0.3, 1.2, 0.6));
    EXPECT_NEAR(conditional_intensity(5.5, s, h, p), ref, 1e-13 * ref);
  }
}

TEST(ConditionalIntensity, RejectsFutureHistory) {
  const ModelParams p = random_model(1, 2);
  const std::vector<Event> h{{2.0, {0.0, 0.0}}};
  EXPECT_THROW(conditional_intensity(2.0, {}, h, p), NonCausal);
  EXPECT_THROW(conditional_intensity(1.0, {}, h, p), NonCausal);
}

TEST(IntervalIntegral, PoissonBackground) {
  ModelParams p = random_model(1, 1);
  p.set_lambda0(0.5);
  EXPECT_DOUBLE_EQ(interval_integral(1.0, 3.0, {}, p, kWin), 4.0);
}

TEST(IntervalIntegral, RejectsEmptyInterval) {
  const ModelParams p = random_model(1, 1);
  EXPECT_THROW(interval_integral(2.0, 2.0, {}, p, kWin), InvalidInterval);
  EXPECT_THROW(interval_integral(3.0, 2.0, {}, p, kWin), InvalidInterval);
}

TEST(IntervalIntegral, SingleEventMatchesWholePlaneQuadrature) {
  ModelParams p = random_model(1, 7);
  p.set_head_bias(0, Head::Rho, 0.0);
  std::fill_n(p.values().begin() + p.head_weight_offset(0, Head::Rho), p.embedding_dim(), 0.0);
  const std::vector<Event> h{{0.7, {0.1, -0.1}}};
  ASSERT_NEAR(p.mixture_at(h[0].s)[0].params.rho, 0.0, 1e-15);
  const double got = interval_integral(1.0, 4.0, h, p, kWin);
  const double ref = 0.3 * 3.0 * 4.0 + oracle::excitation_integral(1.0, 4.0, oracle_sources(h, p), 1.2, 0.6);
  EXPECT_NEAR(got, ref, 1e-6 * ref);
}

TEST(IntervalIntegral, EpsilonScalesOnlyExcitation) {
  const ModelParams p = random_model(2, 8);
  const std::vector<Event> h = random_events(3, 9, 2.0);
  const double bg = 0.3 * 2.0 * 4.0;
  const double full = interval_integral(2.0, 4.0, h, p, kWin);
  const double eps = interval_integral(2.0, 4.0, h, p, kWin, IntegralOptions{0.1});
  EXPECT_NEAR(eps - bg, 0.9 * (full - bg), 1e-13);
  EXPECT_THROW(interval_integral(2.0, 4.0, h, p, kWin, IntegralOptions{1.0}), InvalidArgument);
}

TEST(IntervalIntegral, PropertyClosedFormMatchesQuadrature) {
  Rng pick(12);
  for (int draw = 0; draw < 5; ++draw) {
    const int K = 1 + static_cast<int>(pick.below(3));
    const std::size_t n = 1 + pick.below(5);
    const ModelParams p = random_model(K, 40 + draw);
    const std::vector<Event> h = random_events(n, 60 + draw, 6.0);
    for (std::size_t i = 0; i < h.size(); ++i) {
      ASSERT_LE(std::abs(h[i].s.x), 0.5);
      for (const Component& c : p.mixture_at(h[i].s)) ASSERT_LE(std::max(c.params.sigma_x, c.params.sigma_y), 0.2);
    }
    const double a = pick.uniform(0.0, 3.0), b = a + pick.uniform(0.5, 4.0);
    const double got = interval_integral(a, b, h, p, kWin);
    const double ref = 0.3 * (b - a) * 4.0 + oracle::excitation_integral(a, b, oracle_sources(h, p), 1.2, 0.6);
    EXPECT_NEAR(got, ref, 1e-6 * ref) << "draw " << draw;
  }
}

TEST(IntervalIntegral, AdditiveAcrossEventFreeSplit) {
  const ModelParams p = random_model(2, 13);
  const std::vector<Event> h = random_events(4, 14, 3.0);
  const double a = 3.5, b = 5.25, c = 8.0;
  EXPECT_NEAR(interval_integral(a, b, h, p, kWin) + interval_integral(b, c, h, p, kWin),
              interval_integral(a, c, h, p, kWin), 1e-12);
}

TEST(IntervalIntegral, InteriorEventCountedFromItsOccurrence) {
  const ModelParams p = random_model(1, 15);
  const std::vector<Event> h{{2.0, {0.0, 0.0}}};
  const double inside = interval_integral(1.0, 3.0, h, p, kWin);
  const double from_event = interval_integral(2.0, 3.0, h, p, kWin) + 0.3 * 1.0 * 4.0;
  EXPECT_NEAR(inside, from_event, 1e-13);
}

TEST(LogLikelihood, EmptySequenceIsMinusBackgroundMass) {
  ModelParams p = random_model(1, 1);
  p.set_lambda0(0.5);
  EXPECT_DOUBLE_EQ(log_likelihood(EventSequence{{}, kWin}, p), -20.0);
}

TEST(LogLikelihood, SingleEventAgainstQuadratureOracle) {
  const ModelParams p = random_model(1, 16);
  const std::vector<Event> ev{{4.0, {0.2, 0.1}}};
  const double ref = std::log(0.3) - 0.3 * 10.0 * 4.0 - oracle::excitation_integral(0.0, 10.0, oracle_sources(ev, p), 1.2, 0.6);
  EXPECT_NEAR(log_likelihood(EventSequence{ev, kWin}, p), ref, 1e-6 * std::abs(ref));
}

TEST(LogLikelihood, DoublingMagnitudeLowersSparseLikelihood) {
  ModelParams p = random_model(1, 17);
  const std::vector<Event> ev{{1.0, {-0.4, 0.0}}, {5.0, {0.4, 0.3}}, {9.0, {0.0, -0.4}}};
  auto oracle_ll = [&](double C) {
    const auto o = oracle_sources(ev, p);
    double ll = 0.0;
    for (const Event& e : ev) ll += std::log(static_cast<double>(oracle::intensity(e.t, e.s.x, e.s.y, o, 0.3, 1.2, C)));
    return ll - 0.3 * 40.0 - oracle::excitation_integral(0.0, 10.0, o, 1.2, C);
  };
  const double l1 = log_likelihood(EventSequence{ev, kWin}, p);
  p.set_magnitude(1.2);
  const double l2 = log_likelihood(EventSequence{ev, kWin}, p);
  EXPECT_LT(l2, l1);
  EXPECT_NEAR(l1, oracle_ll(0.6), 1e-6 * std::abs(l1));
  EXPECT_NEAR(l2, oracle_ll(1.2), 1e-6 * std::abs(l2));
}

TEST(LogLikelihood, ZeroBackgroundFirstEventRaises) {
  ModelParams p = random_model(1, 1);
  p.set_lambda0(0.0);
  EXPECT_THROW(log_likelihood(EventSequence{{{1.0, {0, 0}}}, kWin}, p), NonFiniteIntensity);
}

TEST(LogLikelihoodGradient, BackgroundDerivativeOfEmptySequence) {
  const ModelParams p = random_model(2, 1);
  const auto g = log_likelihood_gradient(EventSequence{{}, kWin}, p);
  EXPECT_DOUBLE_EQ(g.gradient[ModelParams::kLambda0], -40.0);
}

TEST(LogLikelihoodGradient, EveryCoordinateMatchesFiniteDifferences) {
  for (int draw = 0; draw < 6; ++draw) {
    const int K = 1 + draw % 3;
    const ModelParams p = random_model(K, 70 + draw, 0.8);
    const EventSequence seq{random_events(4, 80 + draw), kWin};
    const auto an = log_likelihood_gradient(seq, p);
    EXPECT_NEAR(an.value, log_likelihood(seq, p), 1e-10 * std::abs(an.value));
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), 0);
    auto f = [&](const std::vector<double>& x) {
      ModelParams q = p;
      std::copy(x.begin(), x.end(), q.values().begin());
      return log_likelihood(seq, q);
    };
    const auto fd = oracle::fd_gradient(f, std::vector<double>(p.values().begin(), p.values().end()), 1e-5, coords);
    for (std::size_t i = 0; i < coords.size(); ++i) EXPECT_LE(oracle::rel_err(an.gradient[i], fd[i]), 1e-4) << i;
  }
}

TEST(LogLikelihoodGradient, DiagonalJacobianVariantMatchesFiniteDifferences) {
  const ModelParams p = random_model(2, 91, 0.8);
  const EventSequence seq{random_events(3, 92), kWin};
  IntegralOptions opts;
  opts.normalization = MassNormalization::DiagonalJacobian;
  const auto an = log_likelihood_gradient(seq, p, opts);
  std::vector<std::size_t> coords(p.size());
  std::iota(coords.begin(), coords.end(), 0);
  auto f = [&](const std::vector<double>& x) {
    ModelParams q = p;
    std::copy(x.begin(), x.end(), q.values().begin());
    return log_likelihood(seq, q, opts);
  };
  const auto fd = oracle::fd_gradient(f, std::vector<double>(p.values().begin(), p.values().end()), 1e-5, coords);
  for (std::size_t i = 0; i < coords.size(); ++i) EXPECT_LE(oracle::rel_err(an.gradient[i], fd[i]), 1e-4) << i;
}

TEST(LogLikelihoodGradient, DecayDerivativeOfTwoEventSequenceByHand) {
  ModelParams p = random_model(1, 93);
  p.zero_network_weights();
  const std::vector<Event> ev{{2.0, {0.0, 0.0}}, {2.5, {0.05, -0.03}}};
  const double l0 = 0.3, b = 1.2, C = 0.6, T = 10.0;
  const LocalKernelParams k = p.mixture_at({})[0].params;
  const double d = 0.5;
  const double g = diffusion_kernel(ev[1].t, ev[0].t, ev[1].s, ev[0].s, k, b, C);
  double expected = (-d * g) / (l0 + g);
  for (const Event& e : ev) {
    const double v = T - e.t;
    expected -= -(C / (b * b)) * (1.0 - std::exp(-b * v)) + (C / b) * v * std::exp(-b * v);
  }
  const auto an = log_likelihood_gradient(EventSequence{ev, kWin}, p);
  EXPECT_NEAR(an.gradient[ModelParams::kBeta], expected, 1e-12);
}

TEST(PolicyDensity, PoissonIsExponentialAndNormalized) {
  ModelParams p = random_model(1, 1);
  p.set_lambda0(0.25);
  EXPECT_NEAR(policy_density(2.0, {0.3, 0.3}, {}, p, kWin), 0.25 * std::exp(-0.25 * 4.0 * 2.0), 1e-15);
  auto f = [&](double t) { return 4.0 * policy_density(t, {0.0, 0.0}, {}, p, kWin); };
  const double total = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 1e-12, 60.0, 15, 1e-12);
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(PolicyDensity, RatioToIntensityIsSpatiallyConstant) {
  const ModelParams p = random_model(2, 21);
  const std::vector<Event> h = random_events(3, 22, 4.0);
  const double t = 4.7;
  const double r1 = policy_density(t, {0.1, 0.1}, h, p, kWin) / conditional_intensity(t, {0.1, 0.1}, h, p);
  const double r2 = policy_density(t, {-0.6, 0.8}, h, p, kWin) / conditional_intensity(t, {-0.6, 0.8}, h, p);
  EXPECT_NEAR(r1, r2, 1e-14 * r1);
}

TEST(PolicyDensity, SurvivalIdentity) {
  const ModelParams p = random_model(1, 23);
  const std::vector<Event> h{{1.0, {0.0, 0.1}}, {2.0, {-0.05, 0.0}}};
  const double tn = 2.0, T = 10.0;
  const auto o = oracle_sources(h, p);
  // pi(t, s)/lambda*(t, s) is the survival factor; spatial mass of lambda* by the whole-plane oracle.
  auto integrand = [&](double t) {
    const double surv =
        policy_density(t, {0.0, 0.0}, h, p, kWin) / conditional_intensity(t, {0.0, 0.0}, h, p);
    double mass = 0.3 * 4.0;
    for (const auto& s : o)
      for (const auto& c : s.comps) mass += c.w * oracle::plane_mass(t - s.t, c, 1.2, 0.6);
    return surv * mass;
  };
  using boost::math::quadrature::gauss_kronrod;
  const double head = gauss_kronrod<double, 15>::integrate(integrand, tn, tn + 0.1, 12, 1e-12);
  const double tail = gauss_kronrod<double, 15>::integrate(integrand, tn + 0.1, T, 12, 1e-12);
  const double survival = std::exp(-interval_integral(tn, T, h, p, kWin));
  EXPECT_NEAR(head + tail + survival, 1.0, 1e-6);
}

TEST(PolicyDensity, RejectsTimesNotAfterLastEvent) {
  const ModelParams p = random_model(1, 1);
  const std::vector<Event> h{{2.0, {0.0, 0.0}}};
  EXPECT_THROW(policy_density(2.0, {}, h, p, kWin), NonCausal);
  EXPECT_THROW(policy_density(0.0, {}, {}, p, kWin), NonCausal);
}

TEST(GradientIdentity, LogPolicyIsLogIntensityMinusIntegral) {
  const ModelParams p = random_model(2, 24, 0.8);
  const std::vector<Event> h = random_events(3, 25, 4.0);
  const double t = 4.6;
  const Location s{0.05, -0.1};
  const auto pol = log_policy_gradient(t, s, h, p, kWin);
  const auto li = log_intensity_gradient(t, s, h, p);
  const auto ig = interval_integral_gradient(h.back().t, t, h, p, kWin);
  EXPECT_NEAR(pol.value, li.value - ig.value, 1e-12);
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_NEAR(pol.gradient[i], li.gradient[i] - ig.gradient[i], 1e-12 * (1.0 + std::abs(pol.gradient[i]))) << i;
}

TEST(Causality, AppendingFutureEventsLeavesIntensityUnchanged) {
  const ModelParams p = random_model(2, 26);
  std::vector<Event> h = random_events(3, 27, 4.0);
  const auto before = intensity_grid(4.5, h, p, 6, 6, kWin);
  h.push_back({4.5, {0.0, 0.0}});
  h.push_back({7.0, {0.2, 0.2}});
  const auto after = intensity_grid(4.5, h, p, 6, 6, kWin);
  EXPECT_EQ(before.values, after.values);
}

TEST(IntensityGrid, EmptyHistoryIsConstantBackground) {
  const ModelParams p = random_model(1, 1);
  const auto g = intensity_grid(1.0, {}, p, 4, 3, kWin);
  ASSERT_EQ(g.values.size(), 12u);
  for (double v : g.values) EXPECT_EQ(v, 0.3);
}

TEST(IntensityGrid, PeakAtFreshEventExceedsDistantCells) {
  const ModelParams p = random_model(1, 28);
  const std::vector<Event> h{{3.0, {0.0, 0.0}}};
  const double t = 3.05;
  const auto g = intensity_grid(t, h, p, 21, 21, kWin);
  const double peak = g.at(10, 10);
  const double sigma = std::max(p.mixture_at({})[0].params.sigma_x, p.mixture_at({})[0].params.sigma_y) * std::sqrt(0.05);
  const auto o = oracle_sources(h, p);
  EXPECT_NEAR(peak, static_cast<double>(oracle::intensity(t, 0.0, 0.0, o, 0.3, 1.2, 0.6)), 1e-12 * peak);
  for (int j = 0; j < 21; ++j)
    for (int i = 0; i < 21; ++i)
      if (std::hypot(g.x_at(i), g.y_at(j)) > 3.0 * sigma + 0.1) {
        EXPECT_GT(peak, g.at(i, j));
      }
}

TEST(IntensityGrid, RefinementPreservesSharedNodesAndLowerBound) {
  const ModelParams p = random_model(2, 29);
  const std::vector<Event> h = random_events(5, 30, 5.0);
  const auto coarse = intensity_grid(5.5, h, p, 5, 5, kWin);
  const auto fine = intensity_grid(5.5, h, p, 9, 9, kWin);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) EXPECT_EQ(coarse.at(i, j), fine.at(2 * i, 2 * j));
  for (double v : fine.values) EXPECT_GE(v, 0.3 - 1e-12);
  EXPECT_EQ(intensity_grid(5.5, h, p, 9, 9, kWin).values, fine.values);
  EXPECT_THROW(intensity_grid(5.5, h, p, 1, 9, kWin), InvalidArgument);
}
