#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "nest/config.hpp"
#include "nest/errors.hpp"
#include "nest/intensity.hpp"
#include "nest/model.hpp"
#include "nest/random.hpp"

namespace nest {

struct SamplerStats {
  std::size_t candidates = 0;
  std::size_t accepted = 0;
  std::size_t bound_violations = 0;

  double acceptance_rate() const {
    return candidates == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(candidates);
  }
};

namespace detail {

/// History plus cached source mixtures, grown as events are accepted.
template <PointProcessModel M>
class ThinningState {
 public:
  ThinningState(const M& model, const ObservationWindow& window, std::span<const Event> history)
      : model_(model), window_(window), p_(scalars_of(model)), events_(history.begin(), history.end()) {
    sources_ = source_mixtures(std::span<const Event>(events_), model);
  }

  const std::vector<Event>& events() const { return events_; }

  void accept(const Event& e) {
    events_.push_back(e);
    sources_.push_back(model_.mixture_at(e.s));
  }

  double intensity(double t, Location s) const { return intensity_from_sources(t, s, events_, sources_, p_); }

  /// Bound on sup_s lambda*(tau, s) |S| valid for every tau >= t until the next
  /// event: each component peaks at s = s_j + mu with a value decreasing in tau.
  double global_bound(double t) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < events_.size(); ++j) {
      const double gap = std::max(t - events_[j].t, kMinTimeGap);
      for (const Component& c : sources_[j])
        acc += c.weight * std::exp(-p_.beta * gap) /
               (2.0 * std::numbers::pi * std::sqrt(c.params.det_sigma()) * gap);
    }
    return (p_.lambda0 + p_.C * acc) * window_.area();
  }

  /// Whole-plane mass rate of every term at time t: background first, then
  /// one entry per (source, component).
  double term_masses(double t, std::vector<double>& masses) const {
    masses.clear();
    masses.push_back(p_.lambda0 * window_.area());
    double total = masses.back();
    for (std::size_t j = 0; j < events_.size(); ++j) {
      const double decay = p_.C * std::exp(-p_.beta * (t - events_[j].t));
      for (const Component& c : sources_[j]) {
        masses.push_back(c.weight * decay);
        total += masses.back();
      }
    }
    return total;
  }

  /// Draws a location from term `index` of term_masses at time t.
  Location draw_from_term(std::size_t index, double t, Rng& rng) const {
    if (index == 0) return uniform_location(rng);
    std::size_t flat = index - 1;
    for (std::size_t j = 0; j < events_.size(); ++j) {
      if (flat < sources_[j].size()) {
        const LocalKernelParams& q = sources_[j][flat].params;
        const double scale = std::sqrt(std::max(t - events_[j].t, kMinTimeGap));
        const double z1 = rng.normal(), z2 = rng.normal();
        return {events_[j].s.x + q.mu_x + scale * q.sigma_x * z1,
                events_[j].s.y + q.mu_y + scale * q.sigma_y * (q.rho * z1 + std::sqrt(1.0 - q.rho * q.rho) * z2)};
      }
      flat -= sources_[j].size();
    }
    return uniform_location(rng);
  }

  Location uniform_location(Rng& rng) const {
    const double x = rng.uniform(window_.x_lo(), window_.x_hi());
    const double y = rng.uniform(window_.y_lo(), window_.y_hi());
    return {x, y};
  }

 private:
  const M& model_;
  const ObservationWindow& window_;
  ProcessScalars p_;
  std::vector<Event> events_;
  std::vector<Mixture> sources_;
};

/// Advances from t to the next accepted event before the horizon, if any.
template <PointProcessModel M>
std::optional<Event> next_event(ThinningState<M>& st, double t, const ObservationWindow& w, const SamplerConfig& cfg,
                                Rng& rng, Location& last_location, SamplerStats& stats) {
  const double T = w.horizon();
  const double area = w.area();
  std::vector<double> masses;
  while (true) {
    switch (cfg.bound_strategy) {
      case BoundStrategy::GlobalBound: {
        const double bound = cfg.bound_margin * st.global_bound(t);
        if (!(bound > 0.0)) return std::nullopt;
        t += rng.exponential(bound);
        if (!(t < T)) return std::nullopt;
        ++stats.candidates;
        const Location s = st.uniform_location(rng);
        const double scaled = st.intensity(t, s) * area;
        if (scaled > bound * (1.0 + 1e-12)) {
          std::ostringstream os;
          os << "lambda*|S| = " << scaled << " exceeds bound " << bound << " at t=" << t;
          throw BoundViolated(os.str());
        }
        if (rng.uniform() * bound <= scaled) return Event{t, s};
        break;
      }
      case BoundStrategy::MixtureBound: {
        const double bound = cfg.bound_margin * st.term_masses(t, masses);
        if (!(bound > 0.0)) return std::nullopt;
        t += rng.exponential(bound);
        if (!(t < T)) return std::nullopt;
        ++stats.candidates;
        const double total = st.term_masses(t, masses);
        const double u = rng.uniform() * bound;
        if (u > total) break;
        // u is uniform on [0, total] here and doubles as the term selector.
        std::size_t pick = 0;
        for (double acc = masses[0]; pick + 1 < masses.size() && u > acc; acc += masses[++pick]) {
        }
        const Location s = st.draw_from_term(pick, t, rng);
        if (w.contains(s)) return Event{t, s};
        break;
      }
      case BoundStrategy::PaperLocal: {
        const double local = cfg.bound_margin * st.intensity(t, last_location);
        if (!(local > 0.0)) return std::nullopt;
        t += rng.exponential(local * area);
        if (!(t < T)) return std::nullopt;
        ++stats.candidates;
        const Location s = st.uniform_location(rng);
        const double lam = st.intensity(t, s);
        if (lam > local) ++stats.bound_violations;
        if (rng.uniform() * local <= lam) return Event{t, s};
        break;
      }
    }
  }
}

}  // namespace detail

/// Continues a history from t_start to the horizon by thinning; returns only
/// the newly generated events.
template <PointProcessModel M>
std::vector<Event> sample_continuation(const M& model, std::span<const Event> history, double t_start,
                                       const ObservationWindow& window, const SamplerConfig& cfg, Rng& rng,
                                       SamplerStats* stats = nullptr) {
  cfg.validate();
  detail::ThinningState<M> st(model, window, history);
  SamplerStats local;
  std::vector<Event> out;
  Location last = history.empty() ? Location{0.0, 0.0} : history.back().s;
  double t = t_start;
  while (auto e = detail::next_event(st, t, window, cfg, rng, last, local)) {
    // Exponential steps below one ulp of t would tie with the previous event.
    if (!out.empty() && !(e->t > out.back().t)) {
      t = std::nextafter(e->t, window.horizon());
      continue;
    }
    if (out.size() >= cfg.max_events) throw CapExceeded("sampler reached max_events");
    ++local.accepted;
    st.accept(*e);
    out.push_back(*e);
    last = e->s;
    t = e->t;
  }
  if (stats) {
    stats->candidates += local.candidates;
    stats->accepted += local.accepted;
    stats->bound_violations += local.bound_violations;
  }
  return out;
}

/// First event after the history, or nullopt when none occurs before T.
template <PointProcessModel M>
std::optional<Event> sample_next_event(const M& model, std::span<const Event> history, const ObservationWindow& window,
                                       const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  detail::ThinningState<M> st(model, window, history);
  SamplerStats stats;
  Location last = history.empty() ? Location{0.0, 0.0} : history.back().s;
  const double t0 = history.empty() ? 0.0 : history.back().t;
  return detail::next_event(st, t0, window, cfg, rng, last, stats);
}

template <PointProcessModel M>
EventSequence sample_sequence(const M& model, const ObservationWindow& window, const SamplerConfig& cfg,
                              SamplerStats* stats = nullptr) {
  Rng rng(cfg.seed);
  EventSequence seq{sample_continuation(model, {}, 0.0, window, cfg, rng, stats), window};
  return seq;
}

/// M_L independent learner trajectories with per-rollout derived seeds.
template <PointProcessModel M>
std::vector<EventSequence> sample_rollouts(const M& model, const ObservationWindow& window, int count,
                                           const SamplerConfig& cfg, SamplerStats* stats = nullptr) {
  if (count < 1) throw InvalidArgument("need at least one rollout");
  std::vector<EventSequence> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SamplerConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    out.push_back(sample_sequence(model, window, c, stats));
  }
  return out;
}

}  // namespace nest
