#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "nest/config.hpp"
#include "nest/random.hpp"

namespace nest {

/// Gradient-ascent updates over a flat parameter vector. Coordinates flagged
/// positive are moved in log space, so they can never cross zero.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double momentum, std::vector<bool> positive,
            std::vector<bool> frozen)
      : kind_(kind),
        lr_(learning_rate),
        momentum_(momentum),
        positive_(std::move(positive)),
        frozen_(std::move(frozen)),
        m_(positive_.size(), 0.0),
        v_(positive_.size(), 0.0) {}

  /// Returns the Euclidean norm of the applied parameter change.
  double ascend(std::span<double> params, std::span<const double> grad) {
    ++steps_;
    double moved = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (frozen_[i]) continue;
      const bool log_space = positive_[i] && params[i] > 0.0;
      const double g = log_space ? grad[i] * params[i] : grad[i];
      double step = 0.0;
      switch (kind_) {
        case OptimizerKind::SGD: step = lr_ * g; break;
        case OptimizerKind::Momentum:
          m_[i] = momentum_ * m_[i] + g;
          step = lr_ * m_[i];
          break;
        case OptimizerKind::Adam: {
          constexpr double b1 = 0.9, b2 = 0.999;
          m_[i] = b1 * m_[i] + (1.0 - b1) * g;
          v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
          const double mh = m_[i] / (1.0 - std::pow(b1, steps_));
          const double vh = v_[i] / (1.0 - std::pow(b2, steps_));
          step = lr_ * mh / (std::sqrt(vh) + 1e-8);
          break;
        }
      }
      const double before = params[i];
      params[i] = log_space ? params[i] * std::exp(step) : params[i] + step;
      moved += (params[i] - before) * (params[i] - before);
    }
    return std::sqrt(moved);
  }

 private:
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  std::vector<bool> positive_;
  std::vector<bool> frozen_;
  std::vector<double> m_;
  std::vector<double> v_;
  int steps_ = 0;
};

inline double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

/// Draws min(batch, n) distinct indices in [0, n).
inline std::vector<std::size_t> draw_batch(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const std::size_t m = std::min(batch, n);
  for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(m);
  return idx;
}

}  // namespace nest
