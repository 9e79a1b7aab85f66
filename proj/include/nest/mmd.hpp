#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "nest/config.hpp"
#include "nest/errors.hpp"
#include "nest/types.hpp"

namespace nest {

inline double weighted_sq_distance(const Event& a, const Event& b, double time_weight, double space_weight) {
  const double dt = time_weight * (a.t - b.t);
  const double dx = space_weight * (a.s.x - b.s.x), dy = space_weight * (a.s.y - b.s.y);
  return dt * dt + dx * dx + dy * dy;
}

/// Gaussian kernel on weighted (t, x, y) tuples; equals 1 at zero distance.
inline double event_kernel(const Event& a, const Event& b, const MmdConfig& cfg) {
  const double d2 = weighted_sq_distance(a, b, cfg.time_weight, cfg.space_weight);
  return std::exp(-d2 / (2.0 * cfg.bandwidth * cfg.bandwidth));
}

/// Sum of k(e, a) over every event e of every sequence, divided by the sequence count.
inline double mean_embedding_at(const Event& a, std::span<const EventSequence> sets, const MmdConfig& cfg) {
  double acc = 0.0;
  for (const EventSequence& seq : sets)
    for (const Event& e : seq.events) acc += event_kernel(e, a, cfg);
  return acc / static_cast<double>(sets.size());
}

/// Worst-case reward of a learner action: the expert mean embedding minus the
/// learner mean embedding, both evaluated at a.
inline double mmd_reward(const Event& a, std::span<const EventSequence> expert, std::span<const EventSequence> learner,
                         const MmdConfig& cfg) {
  if (expert.empty() || learner.empty()) throw EmptyInput("mmd_reward needs nonempty expert and learner sets");
  return mean_embedding_at(a, expert, cfg) - mean_embedding_at(a, learner, cfg);
}

inline double cross_kernel_sum(std::span<const Event> a, std::span<const Event> b, const MmdConfig& cfg) {
  double acc = 0.0;
  for (const Event& x : a)
    for (const Event& y : b) acc += event_kernel(x, y, cfg);
  return acc;
}

/// Absolute MMD between two sequences viewed as counting measures: the square
/// root of sum k(x, x') + sum k(y, y') - 2 sum k(x, y), clipped at zero.
inline double sequence_mmd(const EventSequence& a, const EventSequence& b, const MmdConfig& cfg) {
  const double aa = cross_kernel_sum(a.events, a.events, cfg);
  const double bb = cross_kernel_sum(b.events, b.events, cfg);
  const double ab = cross_kernel_sum(a.events, b.events, cfg);
  return std::sqrt(std::max(0.0, aa + bb - 2.0 * ab));
}

/// Squared RKHS distance between the per-sequence mean embeddings of two sets
/// (the quantity whose functional gradient is the reward).
inline double set_mmd_squared(std::span<const EventSequence> expert, std::span<const EventSequence> learner,
                              const MmdConfig& cfg) {
  if (expert.empty() || learner.empty()) throw EmptyInput("set MMD needs nonempty sets");
  auto block = [&](std::span<const EventSequence> u, std::span<const EventSequence> v) {
    double acc = 0.0;
    for (const EventSequence& a : u)
      for (const EventSequence& b : v) acc += cross_kernel_sum(a.events, b.events, cfg);
    return acc / (static_cast<double>(u.size()) * static_cast<double>(v.size()));
  };
  return std::max(0.0, block(expert, expert) + block(learner, learner) - 2.0 * block(expert, learner));
}

/// Median pairwise weighted distance among the events of a set. At most
/// `max_events` events are used, taken at an even stride.
inline double median_heuristic_bandwidth(std::span<const EventSequence> sets, double time_weight, double space_weight,
                                         std::size_t max_events = 1000) {
  std::vector<Event> pool;
  for (const EventSequence& s : sets) pool.insert(pool.end(), s.events.begin(), s.events.end());
  if (pool.size() > max_events) {
    std::vector<Event> thinned;
    const double stride = static_cast<double>(pool.size()) / static_cast<double>(max_events);
    for (std::size_t i = 0; i < max_events; ++i) thinned.push_back(pool[static_cast<std::size_t>(i * stride)]);
    pool.swap(thinned);
  }
  std::vector<double> d;
  d.reserve(pool.size() * (pool.size() - (pool.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j)
      d.push_back(std::sqrt(weighted_sq_distance(pool[i], pool[j], time_weight, space_weight)));
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

}  // namespace nest
