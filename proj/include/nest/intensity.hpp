#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "nest/errors.hpp"
#include "nest/model.hpp"
#include "nest/types.hpp"

namespace nest {

/// Time gaps inside the kernel are floored here; the 0/0 at coincident times is removable.
inline constexpr double kMinTimeGap = 1e-9;

/// How each component's whole-plane mass enters the closed-form integral.
///
/// Exact uses the true mass of a normalized Gaussian, so C_j reduces to the
/// sum of the weights. DiagonalJacobian keeps the factor
/// sigma_x sigma_y / sqrt(det Sigma) = 1 / sqrt(1 - rho^2), which is only
/// correct for uncorrelated components; it exists for comparison runs.
enum class MassNormalization { Exact, DiagonalJacobian };

struct IntegralOptions {
  /// Fraction of kernel mass assumed to escape the region.
  double epsilon = 0.0;
  MassNormalization normalization = MassNormalization::Exact;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in [0, 1)");
  }
};

/// Diffusion kernel divided by C, with d(log g)/d(parameter) for every shape parameter.
struct KernelTerm {
  double value = 0.0;  // g / C
  double gap = 0.0;    // floored t - t'
  double dlog_mu_x = 0.0;
  double dlog_mu_y = 0.0;
  double dlog_sigma_x = 0.0;
  double dlog_sigma_y = 0.0;
  double dlog_rho = 0.0;
};

inline KernelTerm unit_kernel_term(double gap, double dx, double dy, const LocalKernelParams& p, double beta) {
  KernelTerm k;
  k.gap = std::max(gap, kMinTimeGap);
  const double ex = dx - p.mu_x, ey = dy - p.mu_y;
  const double a = ex / p.sigma_x, b = ey / p.sigma_y;
  const double r = 1.0 - p.rho * p.rho;
  const double Q = (a * a - 2.0 * p.rho * a * b + b * b) / r;
  const double log_g = -beta * k.gap - std::log(2.0 * std::numbers::pi) - std::log(p.sigma_x) -
                       std::log(p.sigma_y) - 0.5 * std::log(r) - std::log(k.gap) - Q / (2.0 * k.gap);
  k.value = std::exp(log_g);
  const double dQ_da = 2.0 * (a - p.rho * b) / r;
  const double dQ_db = 2.0 * (b - p.rho * a) / r;
  const double dQ_drho = (-2.0 * a * b + 2.0 * p.rho * Q) / r;
  const double inv2g = 1.0 / (2.0 * k.gap);
  k.dlog_mu_x = dQ_da * inv2g / p.sigma_x;
  k.dlog_mu_y = dQ_db * inv2g / p.sigma_y;
  k.dlog_sigma_x = -1.0 / p.sigma_x + a * dQ_da * inv2g / p.sigma_x;
  k.dlog_sigma_y = -1.0 / p.sigma_y + b * dQ_db * inv2g / p.sigma_y;
  k.dlog_rho = p.rho / r - dQ_drho * inv2g;
  return k;
}

inline double unit_kernel(double gap, double dx, double dy, const LocalKernelParams& p, double beta) {
  const double g = std::max(gap, kMinTimeGap);
  const double ex = dx - p.mu_x, ey = dy - p.mu_y;
  const double a = ex / p.sigma_x, b = ey / p.sigma_y;
  const double r = 1.0 - p.rho * p.rho;
  const double Q = (a * a - 2.0 * p.rho * a * b + b * b) / r;
  return std::exp(-beta * g - Q / (2.0 * g)) / (2.0 * std::numbers::pi * p.sigma_x * p.sigma_y * std::sqrt(r) * g);
}

/// g(t, t', s, s') = C e^{-beta (t-t')} / (2 pi sqrt|Sigma| (t-t'))
///                   * exp{-(s-s'-mu)^T Sigma^{-1} (s-s'-mu) / (2 (t-t'))}.
inline double diffusion_kernel(double t, double t_prime, Location s, Location s_prime, const LocalKernelParams& p,
                               double beta, double C) {
  if (!(t > t_prime)) throw NonCausal("kernel evaluated at t <= t'");
  return C * unit_kernel(t - t_prime, s.x - s_prime.x, s.y - s_prime.y, p, beta);
}

/// nu = sum_k phi_k g_k, every component evaluated at the source location s'.
inline double mixture_kernel(double t, double t_prime, Location s, Location s_prime, const Mixture& source,
                             double beta, double C) {
  if (!(t > t_prime)) throw NonCausal("kernel evaluated at t <= t'");
  double acc = 0.0;
  for (const Component& c : source)
    acc += c.weight * unit_kernel(t - t_prime, s.x - s_prime.x, s.y - s_prime.y, c.params, beta);
  return C * acc;
}

template <PointProcessModel M>
double mixture_kernel(double t, double t_prime, Location s, Location s_prime, const M& model) {
  return mixture_kernel(t, t_prime, s, s_prime, model.mixture_at(s_prime), model.decay(), model.magnitude());
}

template <PointProcessModel M>
std::vector<Mixture> source_mixtures(std::span<const Event> events, const M& model) {
  std::vector<Mixture> out;
  out.reserve(events.size());
  for (const Event& e : events) out.push_back(model.mixture_at(e.s));
  return out;
}

/// Number of leading history events strictly before t.
inline std::size_t count_before(std::span<const Event> history, double t) {
  return static_cast<std::size_t>(
      std::lower_bound(history.begin(), history.end(), t, [](const Event& e, double v) { return e.t < v; }) -
      history.begin());
}

inline void require_causal(std::span<const Event> history, double t) {
  for (const Event& e : history) {
    if (!(e.t < t)) {
      std::ostringstream os;
      os << "history event at t=" << e.t << " is not before t=" << t;
      throw NonCausal(os.str());
    }
  }
}

/// lambda*(t, s) from precomputed source mixtures (all history strictly before t).
inline double intensity_from_sources(double t, Location s, std::span<const Event> history,
                                     std::span<const Mixture> sources, const ProcessScalars& p) {
  double acc = 0.0;
  for (std::size_t j = 0; j < history.size(); ++j) {
    const Event& e = history[j];
    const double gap = t - e.t;
    for (const Component& c : sources[j])
      acc += c.weight * unit_kernel(gap, s.x - e.s.x, s.y - e.s.y, c.params, p.beta);
  }
  return p.lambda0 + p.C * acc;
}

/// lambda*(t, s) = lambda0 + sum_{t_j < t} nu(t, t_j, s, s_j).
template <PointProcessModel M>
double conditional_intensity(double t, Location s, std::span<const Event> history, const M& model) {
  require_causal(history, t);
  const std::vector<Mixture> src = source_mixtures(history, model);
  return intensity_from_sources(t, s, history, src, scalars_of(model));
}

/// Per-component whole-plane mass multiplier entering C_j.
inline double mass_factor(const LocalKernelParams& p, MassNormalization n) {
  return n == MassNormalization::Exact ? 1.0 : 1.0 / std::sqrt(1.0 - p.rho * p.rho);
}

inline double mass_factor_drho(const LocalKernelParams& p, MassNormalization n) {
  if (n == MassNormalization::Exact) return 0.0;
  const double r = 1.0 - p.rho * p.rho;
  return p.rho / (r * std::sqrt(r));
}

/// C_j = sum_k phi_k * (mass factor of component k).
inline double source_mass(const Mixture& m, MassNormalization n) {
  double acc = 0.0;
  for (const Component& c : m) acc += c.weight * mass_factor(c.params, n);
  return acc;
}

/// Integral of lambda* over (a, b) x S. Events inside (a, b) contribute only
/// from their own occurrence time onward.
inline double interval_integral_from_sources(double a, double b, std::span<const Event> history,
                                             std::span<const Mixture> sources, const ProcessScalars& p,
                                             const ObservationWindow& window, const IntegralOptions& opts) {
  if (!(a < b)) throw InvalidInterval("interval integral needs t_i < t_{i+1}");
  double excitation = 0.0;
  for (std::size_t j = 0; j < history.size(); ++j) {
    const double tj = history[j].t;
    if (!(tj < b)) break;
    const double u = std::max(a, tj) - tj, v = b - tj;
    excitation += source_mass(sources[j], opts.normalization) * (std::exp(-p.beta * u) - std::exp(-p.beta * v));
  }
  return p.lambda0 * (b - a) * window.area() + (1.0 - opts.epsilon) * (p.C / p.beta) * excitation;
}

template <PointProcessModel M>
double interval_integral(double t_i, double t_ip1, std::span<const Event> history, const M& model,
                         const ObservationWindow& window, const IntegralOptions& opts = {}) {
  opts.validate();
  if (!(t_i < t_ip1)) throw InvalidInterval("interval integral needs t_i < t_{i+1}");
  if (!std::is_sorted(history.begin(), history.end(), [](const Event& x, const Event& y) { return x.t < y.t; }))
    throw NonMonotoneTimes("history must be sorted by time");
  const std::vector<Mixture> src = source_mixtures(history, model);
  return interval_integral_from_sources(t_i, t_ip1, history, src, scalars_of(model), window, opts);
}

// ---------------------------------------------------------------------------
// Reverse mode.

struct ScalarAdjoint {
  double lambda0 = 0.0;
  double beta = 0.0;
  double C = 0.0;
};

/// Value and sensitivities of an objective with respect to the scalars and to
/// every source event's mixture outputs.
struct ObjectiveAdjoints {
  double value = 0.0;
  ScalarAdjoint scalars;
  std::vector<MixtureAdjoint> sources;

  explicit ObjectiveAdjoints(std::span<const Mixture> src = {}) {
    sources.reserve(src.size());
    for (const Mixture& m : src) sources.emplace_back(m.size());
  }
};

/// Adds weight * log lambda*(t, s) to `out`.
inline void add_log_intensity(double t, Location s, std::span<const Event> history, std::span<const Mixture> sources,
                              const ProcessScalars& p, double weight, ObjectiveAdjoints& out) {
  struct Term {
    std::size_t j;
    std::size_t k;
    KernelTerm kt;
  };
  std::vector<Term> terms;
  double excitation = 0.0;
  for (std::size_t j = 0; j < history.size(); ++j) {
    const Event& e = history[j];
    for (std::size_t k = 0; k < sources[j].size(); ++k) {
      const Component& c = sources[j][k];
      KernelTerm kt = unit_kernel_term(t - e.t, s.x - e.s.x, s.y - e.s.y, c.params, p.beta);
      excitation += c.weight * kt.value;
      terms.push_back({j, k, kt});
    }
  }
  const double lambda = p.lambda0 + p.C * excitation;
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    std::ostringstream os;
    os << "intensity " << lambda << " at t=" << t << " cannot enter the log";
    throw NonFiniteIntensity(os.str());
  }
  out.value += weight * std::log(lambda);
  const double w = weight / lambda;
  out.scalars.lambda0 += w;
  out.scalars.C += w * excitation;
  for (const Term& term : terms) {
    const Component& c = sources[term.j][term.k];
    const double common = w * p.C * term.kt.value;  // d/d(phi)
    ComponentAdjoint& a = out.sources[term.j][term.k];
    a.weight += common;
    const double g = common * c.weight;
    out.scalars.beta -= g * term.kt.gap;
    a.mu_x += g * term.kt.dlog_mu_x;
    a.mu_y += g * term.kt.dlog_mu_y;
    a.sigma_x += g * term.kt.dlog_sigma_x;
    a.sigma_y += g * term.kt.dlog_sigma_y;
    a.rho += g * term.kt.dlog_rho;
  }
}

/// Adds weight * (integral of lambda* over (a, b) x S) to `out`.
inline void add_interval_integral(double a, double b, std::span<const Event> history,
                                  std::span<const Mixture> sources, const ProcessScalars& p,
                                  const ObservationWindow& window, const IntegralOptions& opts, double weight,
                                  ObjectiveAdjoints& out) {
  if (!(a < b)) throw InvalidInterval("interval integral needs t_i < t_{i+1}");
  const double keep = 1.0 - opts.epsilon;
  out.value += weight * p.lambda0 * (b - a) * window.area();
  out.scalars.lambda0 += weight * (b - a) * window.area();
  for (std::size_t j = 0; j < history.size(); ++j) {
    const double tj = history[j].t;
    if (!(tj < b)) break;
    const double u = std::max(a, tj) - tj, v = b - tj;
    const double eu = std::exp(-p.beta * u), ev = std::exp(-p.beta * v);
    const double diff = eu - ev;
    const double mass = source_mass(sources[j], opts.normalization);
    out.value += weight * keep * (p.C / p.beta) * mass * diff;
    out.scalars.C += weight * keep / p.beta * mass * diff;
    out.scalars.beta += weight * keep * p.C * mass * (-diff / (p.beta * p.beta) + (-u * eu + v * ev) / p.beta);
    const double dmass = weight * keep * (p.C / p.beta) * diff;
    for (std::size_t k = 0; k < sources[j].size(); ++k) {
      const Component& c = sources[j][k];
      out.sources[j][k].weight += dmass * mass_factor(c.params, opts.normalization);
      out.sources[j][k].rho += dmass * c.weight * mass_factor_drho(c.params, opts.normalization);
    }
  }
}

/// l = sum_i log lambda*(t_i, s_i) - integral over (0, T) x S, via precomputed sources.
inline ObjectiveAdjoints log_likelihood_adjoints(std::span<const Event> events, std::span<const Mixture> sources,
                                                 const ProcessScalars& p, const ObservationWindow& window,
                                                 const IntegralOptions& opts) {
  ObjectiveAdjoints out(sources);
  for (std::size_t i = 0; i < events.size(); ++i)
    add_log_intensity(events[i].t, events[i].s, events.first(i), sources.first(i), p, 1.0, out);
  add_interval_integral(0.0, window.horizon(), events, sources, p, window, opts, -1.0, out);
  return out;
}

template <PointProcessModel M>
double log_likelihood(const EventSequence& seq, const M& model, const IntegralOptions& opts = {}) {
  opts.validate();
  validate_sequence(seq);
  const std::span<const Event> ev(seq.events);
  const std::vector<Mixture> src = source_mixtures(ev, model);
  const ProcessScalars p = scalars_of(model);
  double ll = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const double lambda = intensity_from_sources(ev[i].t, ev[i].s, ev.first(i), std::span(src).first(i), p);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      std::ostringstream os;
      os << "intensity " << lambda << " at event " << i;
      throw NonFiniteIntensity(os.str());
    }
    ll += std::log(lambda);
  }
  return ll - interval_integral_from_sources(0.0, seq.window.horizon(), ev, src, p, seq.window, opts);
}

/// log pi(t, s) = log lambda*(t, s) - integral of lambda* over (t_n, t) x S.
inline ObjectiveAdjoints log_policy_adjoints(double t, Location s, std::span<const Event> history,
                                             std::span<const Mixture> sources, const ProcessScalars& p,
                                             const ObservationWindow& window, const IntegralOptions& opts) {
  ObjectiveAdjoints out(sources);
  const double tn = history.empty() ? 0.0 : history.back().t;
  add_log_intensity(t, s, history, sources, p, 1.0, out);
  add_interval_integral(tn, t, history, sources, p, window, opts, -1.0, out);
  return out;
}

/// pi(t, s) = lambda*(t, s) exp{-integral over (t_n, t) x S of lambda*}.
template <PointProcessModel M>
double policy_density(double t, Location s, std::span<const Event> history, const M& model,
                      const ObservationWindow& window, const IntegralOptions& opts = {}) {
  opts.validate();
  require_causal(history, t);
  const double tn = history.empty() ? 0.0 : history.back().t;
  if (!(t > tn)) throw NonCausal("policy evaluated at or before the last event");
  const std::vector<Mixture> src = source_mixtures(history, model);
  const ProcessScalars p = scalars_of(model);
  const double lambda = intensity_from_sources(t, s, history, src, p);
  return lambda * std::exp(-interval_integral_from_sources(tn, t, history, src, p, window, opts));
}

// ---------------------------------------------------------------------------
// Lattice snapshots.

/// lambda*(t, .) on an nx x ny node lattice spanning the region, endpoints included.
struct IntensityGrid {
  double t = 0.0;
  int nx = 0;
  int ny = 0;
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  std::vector<double> values;  // row-major, row j holds y_j

  double x_at(int i) const { return x_lo + (x_hi - x_lo) / (nx - 1) * i; }
  double y_at(int j) const { return y_lo + (y_hi - y_lo) / (ny - 1) * j; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
};

inline IntensityGrid make_lattice(double t, int nx, int ny, const ObservationWindow& window) {
  if (nx < 2 || ny < 2) throw InvalidArgument("lattice dimensions must be >= 2");
  IntensityGrid g;
  g.t = t;
  g.nx = nx;
  g.ny = ny;
  g.x_lo = window.x_lo();
  g.x_hi = window.x_hi();
  g.y_lo = window.y_lo();
  g.y_hi = window.y_hi();
  g.values.assign(static_cast<std::size_t>(nx) * ny, 0.0);
  return g;
}

/// Events at or after t are ignored, so a full sequence can be passed.
template <PointProcessModel M>
IntensityGrid intensity_grid(double t, std::span<const Event> history, const M& model, int nx, int ny,
                             const ObservationWindow& window) {
  IntensityGrid g = make_lattice(t, nx, ny, window);
  const std::span<const Event> past = history.first(count_before(history, t));
  const std::vector<Mixture> src = source_mixtures(past, model);
  const ProcessScalars p = scalars_of(model);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      g.values[static_cast<std::size_t>(j) * nx + i] = intensity_from_sources(t, {g.x_at(i), g.y_at(j)}, past, src, p);
  return g;
}

}  // namespace nest
