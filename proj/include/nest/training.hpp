#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nest/config.hpp"
#include "nest/errors.hpp"
#include "nest/gradients.hpp"
#include "nest/kernel_net.hpp"
#include "nest/mmd.hpp"
#include "nest/optimizer.hpp"
#include "nest/report.hpp"
#include "nest/sampler.hpp"

namespace nest {

/// lambda0, beta and C are optimized through their logarithms.
inline std::vector<bool> positive_mask(const ModelParams& theta) {
  std::vector<bool> m(theta.size(), false);
  m[ModelParams::kLambda0] = m[ModelParams::kBeta] = m[ModelParams::kMagnitude] = true;
  return m;
}

inline std::vector<bool> frozen_mask(const ModelParams& theta, const Trainable& t) {
  std::vector<bool> m(theta.size(), !t.network);
  m[ModelParams::kLambda0] = !t.lambda0;
  m[ModelParams::kBeta] = !t.beta;
  m[ModelParams::kMagnitude] = !t.magnitude;
  return m;
}

/// Starting point for fitting: half the empirical event rate as background,
/// a moderate branching ratio, and output heads damped so the initial kernel
/// fields vary gently around sigma = 7.5% of the region width.
inline ModelParams default_nest_init(const NetShape& shape, std::span<const EventSequence> data, std::uint64_t seed) {
  if (data.empty()) throw EmptyInput("initialization needs at least one sequence");
  ModelParams p = ModelParams::initialized(shape, seed);
  double events = 0.0;
  for (const EventSequence& s : data) events += static_cast<double>(s.size());
  const ObservationWindow& w = data.front().window;
  p.set_lambda0(std::max(0.5 * events / static_cast<double>(data.size()) / (w.horizon() * w.area()), 1e-3));
  p.set_beta(1.0);
  p.set_magnitude(0.5);
  const std::size_t d = static_cast<std::size_t>(p.embedding_dim());
  std::span<double> v = p.values();
  for (int k = 0; k < p.components(); ++k) {
    for (int h = 0; h < kHeadCount; ++h) {
      const std::size_t o = p.head_weight_offset(k, static_cast<Head>(h));
      for (std::size_t i = 0; i < d; ++i) v[o + i] *= 0.1;
    }
    p.set_head_bias(k, Head::SigmaX, softplus_inverse(0.075 * w.width()));
    p.set_head_bias(k, Head::SigmaY, softplus_inverse(0.075 * w.height()));
  }
  return p;
}

/// Mean log-likelihood over the batch and its gradient.
inline ValueAndGradient mean_log_likelihood_gradient(std::span<const EventSequence> data,
                                                     std::span<const std::size_t> batch, const ModelParams& theta,
                                                     const IntegralOptions& opts) {
  ValueAndGradient total{0.0, std::vector<double>(theta.size(), 0.0)};
  for (std::size_t i : batch) {
    const ValueAndGradient g = log_likelihood_gradient(data[i], theta, opts);
    total.value += g.value;
    for (std::size_t c = 0; c < g.gradient.size(); ++c) total.gradient[c] += g.gradient[c];
  }
  const double n = static_cast<double>(batch.size());
  total.value /= n;
  for (double& g : total.gradient) g /= n;
  return total;
}

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}
}  // namespace detail

/// Stochastic gradient ascent on the mean batch log-likelihood.
inline TrainReport<ModelParams> fit_mle(std::span<const EventSequence> data, ModelParams init, const TrainConfig& cfg) {
  if (data.empty()) throw EmptyInput("fit_mle needs at least one sequence");
  cfg.validate();
  const IntegralOptions opts = cfg.integral_options();
  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.momentum, positive_mask(init), frozen_mask(init, cfg.trainable));
  Rng rng(derive_seed(cfg.seed, 0x3E1E));
  TrainReport<ModelParams> report{{}, std::move(init)};
  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<std::size_t> batch = draw_batch(data.size(), static_cast<std::size_t>(cfg.batch_size), rng);
    ValueAndGradient g;
    try {
      g = mean_log_likelihood_gradient(data, batch, report.params, opts);
    } catch (const NonFiniteIntensity& e) {
      throw Diverged(std::string("iteration ") + std::to_string(it) + ": " + e.what());
    }
    const double gn = norm2(g.gradient);
    if (!std::isfinite(g.value) || !std::isfinite(gn))
      throw Diverged("log-likelihood became non-finite at iteration " + std::to_string(it));
    opt.ascend(report.params.values(), g.gradient);
    report.records.push_back({it + 1, g.value, gn, detail::seconds_since(start)});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Imitation learning.

/// b_i = mean of the other returns (0 when there is a single rollout).
inline std::vector<double> leave_one_out_baselines(std::span<const double> returns) {
  std::vector<double> b(returns.size(), 0.0);
  if (returns.size() < 2) return b;
  double total = 0.0;
  for (double r : returns) total += r;
  const double others = static_cast<double>(returns.size() - 1);
  for (std::size_t i = 0; i < returns.size(); ++i) b[i] = (total - returns[i]) / others;
  return b;
}

inline std::vector<double> baselines_for(std::span<const double> returns, Baseline kind) {
  return kind == Baseline::LeaveOneOut ? leave_one_out_baselines(returns) : std::vector<double>(returns.size(), 0.0);
}

struct ReinforceEstimate {
  std::vector<double> gradient;
  std::vector<double> returns;    // R_i: summed reward of rollout i
  std::vector<double> baselines;  // b_i
};

/// (1 / M_L) sum_i grad log p_theta(rollout_i) (R_i - b_i), where the
/// trajectory log-density includes the survival term up to the horizon.
template <class Reward>
ReinforceEstimate reinforce_gradient(std::span<const EventSequence> rollouts, const ModelParams& theta,
                                     Reward&& reward, const IntegralOptions& opts, Baseline baseline) {
  if (rollouts.empty()) throw InvalidArgument("need at least one rollout");
  ReinforceEstimate est;
  est.gradient.assign(theta.size(), 0.0);
  for (const EventSequence& r : rollouts) {
    double R = 0.0;
    for (const Event& a : r.events) R += reward(a);
    est.returns.push_back(R);
  }
  est.baselines = baselines_for(est.returns, baseline);
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const double advantage = est.returns[i] - est.baselines[i];
    if (advantage == 0.0) continue;
    const ValueAndGradient score = log_likelihood_gradient(rollouts[i], theta, opts);
    for (std::size_t c = 0; c < score.gradient.size(); ++c) est.gradient[c] += score.gradient[c] * advantage;
  }
  for (double& g : est.gradient) g /= static_cast<double>(rollouts.size());
  return est;
}

struct PolicyGradientStep {
  std::vector<double> gradient;
  double objective = 0.0;  // estimated squared MMD between expert batch and rollouts
  std::vector<EventSequence> rollouts;
  ReinforceEstimate estimate;
};

/// One variance-reduced policy-gradient estimate against an expert batch.
inline PolicyGradientStep policy_gradient_step(std::span<const EventSequence> expert, const ModelParams& theta,
                                               const TrainConfig& cfg, const MmdConfig& mmd,
                                               const SamplerConfig& sampler) {
  if (expert.empty()) throw EmptyInput("policy gradient needs a nonempty expert batch");
  mmd.validate();
  PolicyGradientStep step;
  step.rollouts = sample_rollouts(theta, expert.front().window, cfg.il.rollouts, sampler);
  const std::span<const EventSequence> learner(step.rollouts);
  auto reward = [&](const Event& a) { return mmd_reward(a, expert, learner, mmd); };
  step.estimate = reinforce_gradient(learner, theta, reward, cfg.integral_options(), cfg.il.baseline);
  step.gradient = step.estimate.gradient;
  step.objective = set_mmd_squared(expert, learner, mmd);
  return step;
}

/// Policy-gradient ascent on the expected MMD reward. The MMD bandwidth is
/// cfg.il.mmd_bandwidth, or the median heuristic on the first expert batch
/// when that is 0; only the weights are taken from `mmd`.
inline TrainReport<ModelParams> fit_il(std::span<const EventSequence> data, ModelParams init, const TrainConfig& cfg,
                                       MmdConfig mmd = {}, SamplerConfig sampler = {}) {
  if (data.empty()) throw EmptyInput("fit_il needs at least one sequence");
  cfg.validate();
  sampler.validate();
  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.momentum, positive_mask(init), frozen_mask(init, cfg.trainable));
  Rng rng(derive_seed(cfg.seed, 0x1A11));
  TrainReport<ModelParams> report{{}, std::move(init)};
  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<std::size_t> idx = draw_batch(data.size(), static_cast<std::size_t>(cfg.batch_size), rng);
    std::vector<EventSequence> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(data[i]);
    if (it == 0) {
      mmd.bandwidth = cfg.il.mmd_bandwidth > 0.0
                          ? cfg.il.mmd_bandwidth
                          : median_heuristic_bandwidth(batch, mmd.time_weight, mmd.space_weight);
    }
    SamplerConfig sc = sampler;
    sc.seed = derive_seed(cfg.seed, 0x5000 + static_cast<std::uint64_t>(it));
    PolicyGradientStep step;
    try {
      step = policy_gradient_step(batch, report.params, cfg, mmd, sc);
    } catch (const NonFiniteIntensity& e) {
      throw Diverged(std::string("iteration ") + std::to_string(it) + ": " + e.what());
    }
    const double gn = norm2(step.gradient);
    if (!std::isfinite(step.objective) || !std::isfinite(gn))
      throw Diverged("policy gradient became non-finite at iteration " + std::to_string(it));
    opt.ascend(report.params.values(), step.gradient);
    report.records.push_back({it + 1, step.objective, gn, detail::seconds_since(start)});
  }
  return report;
}

}  // namespace nest
