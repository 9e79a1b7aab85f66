#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "nest/config.hpp"
#include "nest/errors.hpp"
#include "nest/intensity.hpp"
#include "nest/optimizer.hpp"
#include "nest/report.hpp"

namespace nest {

/// Spatially homogeneous ETAS kernel: one component, mu = 0, diagonal Sigma.
struct EtasParams {
  double lambda0 = 0.1;
  double beta = 1.0;
  double C = 0.5;
  double sigma_x = 0.1;
  double sigma_y = 0.1;

  static constexpr std::size_t kParamCount = 5;

  double background() const { return lambda0; }
  double decay() const { return beta; }
  double magnitude() const { return C; }
  Mixture mixture_at(Location) const { return {Component{{0.0, 0.0, sigma_x, sigma_y, 0.0}, 1.0}}; }

  void validate() const {
    if (!(lambda0 >= 0.0) || !(beta > 0.0) || !(C >= 0.0) || !(sigma_x > 0.0) || !(sigma_y > 0.0))
      throw InvalidArgument("ETAS parameters violate positivity");
  }

  std::vector<double> to_vector() const { return {lambda0, beta, C, sigma_x, sigma_y}; }
  static EtasParams from_vector(std::span<const double> v) { return {v[0], v[1], v[2], v[3], v[4]}; }

  friend bool operator==(const EtasParams&, const EtasParams&) = default;
};

/// Direct closed form, independent of the mixture code path.
inline double etas_intensity(double t, Location s, std::span<const Event> history, const EtasParams& p) {
  double acc = 0.0;
  for (const Event& e : history) {
    if (!(e.t < t)) throw NonCausal("history event is not before t");
    const double gap = std::max(t - e.t, kMinTimeGap);
    const double dx = (s.x - e.s.x) / p.sigma_x, dy = (s.y - e.s.y) / p.sigma_y;
    acc += std::exp(-p.beta * gap - (dx * dx + dy * dy) / (2.0 * gap)) /
           (2.0 * std::numbers::pi * p.sigma_x * p.sigma_y * gap);
  }
  return p.lambda0 + p.C * acc;
}

struct EtasValueAndGradient {
  double value = 0.0;
  std::vector<double> gradient;  // order of EtasParams::to_vector
};

inline EtasValueAndGradient log_likelihood_gradient(const EventSequence& seq, const EtasParams& p,
                                                    const IntegralOptions& opts = {}) {
  validate_sequence(seq);
  const std::vector<Mixture> src(seq.events.size(), p.mixture_at({}));
  const ObjectiveAdjoints adj = log_likelihood_adjoints(seq.events, src, scalars_of(p), seq.window, opts);
  EtasValueAndGradient out{adj.value, {adj.scalars.lambda0, adj.scalars.beta, adj.scalars.C, 0.0, 0.0}};
  for (const MixtureAdjoint& m : adj.sources) {
    out.gradient[3] += m[0].sigma_x;
    out.gradient[4] += m[0].sigma_y;
  }
  return out;
}

/// Data-driven starting point: half the empirical rate as background, a
/// moderate branching ratio and a kernel spread of 5% of the region width.
inline EtasParams default_etas_init(std::span<const EventSequence> data) {
  double events = 0.0;
  for (const EventSequence& s : data) events += static_cast<double>(s.size());
  const ObservationWindow& w = data.front().window;
  const double rate = events / static_cast<double>(data.size()) / (w.horizon() * w.area());
  return {std::max(0.5 * rate, 1e-3), 1.0, 0.5, 0.05 * w.width(), 0.05 * w.height()};
}

/// Mean log-likelihood and its gradient over a set of sequences.
inline EtasValueAndGradient mean_log_likelihood_gradient(std::span<const EventSequence> data,
                                                         std::span<const std::size_t> batch, const EtasParams& p,
                                                         const IntegralOptions& opts) {
  EtasValueAndGradient total{0.0, std::vector<double>(EtasParams::kParamCount, 0.0)};
  for (std::size_t i : batch) {
    const EtasValueAndGradient g = log_likelihood_gradient(data[i], p, opts);
    total.value += g.value;
    for (std::size_t c = 0; c < total.gradient.size(); ++c) total.gradient[c] += g.gradient[c];
  }
  const double n = static_cast<double>(batch.size());
  total.value /= n;
  for (double& g : total.gradient) g /= n;
  return total;
}

/// Stochastic gradient ascent on the mean log-likelihood; every parameter is
/// optimized through its logarithm.
inline TrainReport<EtasParams> fit_etas_mle_report(std::span<const EventSequence> data, const TrainConfig& cfg,
                                                   EtasParams init) {
  if (data.empty()) throw EmptyInput("ETAS fit needs at least one sequence");
  cfg.validate();
  init.validate();
  const IntegralOptions opts = cfg.integral_options();
  const std::vector<bool> frozen{!cfg.trainable.lambda0, !cfg.trainable.beta, !cfg.trainable.magnitude, false, false};
  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.momentum, std::vector<bool>(EtasParams::kParamCount, true),
                frozen);
  Rng rng(derive_seed(cfg.seed, 0xE7A5));
  std::vector<double> theta = init.to_vector();
  TrainReport<EtasParams> report;
  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<std::size_t> batch = draw_batch(data.size(), static_cast<std::size_t>(cfg.batch_size), rng);
    const EtasValueAndGradient g = mean_log_likelihood_gradient(data, batch, EtasParams::from_vector(theta), opts);
    if (!std::isfinite(g.value) || !std::isfinite(norm2(g.gradient)))
      throw Diverged("ETAS log-likelihood became non-finite at iteration " + std::to_string(it));
    opt.ascend(theta, g.gradient);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.records.push_back({it + 1, g.value, norm2(g.gradient), secs});
  }
  report.params = EtasParams::from_vector(theta);
  return report;
}

inline EtasParams fit_etas_mle(std::span<const EventSequence> data, const TrainConfig& cfg) {
  if (data.empty()) throw EmptyInput("ETAS fit needs at least one sequence");
  return fit_etas_mle_report(data, cfg, default_etas_init(data)).params;
}

}  // namespace nest
