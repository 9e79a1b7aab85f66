#pragma once

#include <span>
#include <vector>

#include "nest/intensity.hpp"
#include "nest/kernel_net.hpp"

namespace nest {

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Network evaluations at every source event, retained for backpropagation.
struct NetSources {
  std::vector<NetEvaluation> evaluations;
  std::vector<Mixture> mixtures;
};

inline NetSources evaluate_sources(std::span<const Event> events, const ModelParams& theta) {
  NetSources out;
  out.evaluations.reserve(events.size());
  out.mixtures.reserve(events.size());
  for (const Event& e : events) {
    out.evaluations.push_back(evaluate_net(e.s, theta));
    out.mixtures.push_back(out.evaluations.back().mixture);
  }
  return out;
}

/// Maps objective adjoints onto the flat parameter vector.
inline void accumulate_parameter_gradient(const ObjectiveAdjoints& adj, const NetSources& src,
                                          const ModelParams& theta, std::span<double> grad) {
  grad[ModelParams::kLambda0] += adj.scalars.lambda0;
  grad[ModelParams::kBeta] += adj.scalars.beta;
  grad[ModelParams::kMagnitude] += adj.scalars.C;
  for (std::size_t j = 0; j < adj.sources.size(); ++j) backpropagate(src.evaluations[j], adj.sources[j], theta, grad);
}

inline ValueAndGradient finish(const ObjectiveAdjoints& adj, const NetSources& src, const ModelParams& theta) {
  ValueAndGradient out{adj.value, std::vector<double>(theta.size(), 0.0)};
  accumulate_parameter_gradient(adj, src, theta, out.gradient);
  return out;
}

/// Exact gradient of the log-likelihood through the log-intensity terms and
/// the closed-form integral.
inline ValueAndGradient log_likelihood_gradient(const EventSequence& seq, const ModelParams& theta,
                                                const IntegralOptions& opts = {}) {
  opts.validate();
  validate_sequence(seq);
  const NetSources src = evaluate_sources(seq.events, theta);
  return finish(log_likelihood_adjoints(seq.events, src.mixtures, scalars_of(theta), seq.window, opts), src, theta);
}

inline ValueAndGradient log_policy_gradient(double t, Location s, std::span<const Event> history,
                                            const ModelParams& theta, const ObservationWindow& window,
                                            const IntegralOptions& opts = {}) {
  opts.validate();
  require_causal(history, t);
  const NetSources src = evaluate_sources(history, theta);
  return finish(log_policy_adjoints(t, s, history, src.mixtures, scalars_of(theta), window, opts), src, theta);
}

inline ValueAndGradient log_intensity_gradient(double t, Location s, std::span<const Event> history,
                                               const ModelParams& theta) {
  require_causal(history, t);
  const NetSources src = evaluate_sources(history, theta);
  ObjectiveAdjoints adj(src.mixtures);
  add_log_intensity(t, s, history, src.mixtures, scalars_of(theta), 1.0, adj);
  return finish(adj, src, theta);
}

inline ValueAndGradient interval_integral_gradient(double a, double b, std::span<const Event> history,
                                                   const ModelParams& theta, const ObservationWindow& window,
                                                   const IntegralOptions& opts = {}) {
  opts.validate();
  const NetSources src = evaluate_sources(history, theta);
  ObjectiveAdjoints adj(src.mixtures);
  add_interval_integral(a, b, history, src.mixtures, scalars_of(theta), window, opts, 1.0, adj);
  return finish(adj, src, theta);
}

}  // namespace nest
