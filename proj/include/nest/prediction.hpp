#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "nest/errors.hpp"
#include "nest/intensity.hpp"
#include "nest/model.hpp"

namespace nest {

enum class SpatialRule {
  /// Whole-plane kernel moments: each component contributes its mass at the
  /// shifted source s_j + mu, consistent with the epsilon = 0 integral.
  Analytic,
  /// 64 x 64 Gauss-Legendre nodes over the region applied to lambda* itself.
  GaussLegendre,
};

struct PredictOptions {
  SpatialRule spatial = SpatialRule::Analytic;
  double time_tolerance = 1e-6;  // absolute, on the defective density mass
  int max_depth = 40;
  IntegralOptions integral{};
};

struct Prediction {
  double t = 0.0;
  Location s;
  double mass = 0.0;  // probability of another event before T
};

namespace detail {

/// (density, t * density, x * density, y * density) at one time.
using Moments = std::array<double, 4>;

inline Moments simpson(double a, double b, const Moments& fa, const Moments& fm, const Moments& fb) {
  Moments out;
  for (int c = 0; c < 4; ++c) out[c] = (b - a) / 6.0 * (fa[c] + 4.0 * fm[c] + fb[c]);
  return out;
}

template <class F>
Moments adaptive_simpson(F& f, double a, double b, const Moments& fa, const Moments& fm, const Moments& fb,
                         const Moments& whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const Moments flm = f(lm), frm = f(rm);
  const Moments left = simpson(a, m, fa, flm, fm);
  const Moments right = simpson(m, b, fm, frm, fb);
  const double err = left[0] + right[0] - whole[0];
  if (depth <= 0 || std::abs(err) <= 15.0 * tol) {
    Moments out;
    for (int c = 0; c < 4; ++c) out[c] = left[c] + right[c] + (left[c] + right[c] - whole[c]) / 15.0;
    return out;
  }
  const Moments l = adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
  const Moments r = adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  return {l[0] + r[0], l[1] + r[1], l[2] + r[2], l[3] + r[3]};
}

/// Integrates f over [a, b]; the range is pre-split so that short-lived
/// spikes near a cannot be stepped over by the first Simpson panel.
template <class F>
Moments integrate_moments(F& f, double a, double b, double tol, int depth) {
  constexpr int kPanels = 16;
  Moments total{0.0, 0.0, 0.0, 0.0};
  // Geometric panel edges concentrate resolution right after the last event.
  std::vector<double> edges{a};
  const double span = b - a;
  double h = span * std::ldexp(1.0, -(kPanels - 1));
  for (int i = 0; i < kPanels - 1; ++i, h *= 2.0) edges.push_back(a + h);
  edges.push_back(b);
  Moments fa = f(edges[0]);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double lo = edges[i], hi = edges[i + 1];
    const Moments fm = f(0.5 * (lo + hi)), fb = f(hi);
    const Moments whole = simpson(lo, hi, fa, fm, fb);
    const Moments part = adaptive_simpson(f, lo, hi, fa, fm, fb, whole, tol / kPanels, depth);
    for (int c = 0; c < 4; ++c) total[c] += part[c];
    fa = fb;
  }
  return total;
}

}  // namespace detail

/// Expected next event given a history: both coordinates are moments of the
/// policy density over (t_n, T] x S, renormalized by the probability of an
/// event before T.
template <PointProcessModel M>
Prediction predict_next(std::span<const Event> history, const M& model, const ObservationWindow& window,
                        const PredictOptions& opts = {}) {
  opts.integral.validate();
  const double tn = history.empty() ? 0.0 : history.back().t;
  const double T = window.horizon();
  if (!(tn < T)) throw DegenerateWindow("last event is at or after the horizon");
  const std::vector<Mixture> src = source_mixtures(history, model);
  const ProcessScalars p = scalars_of(model);
  const double area = window.area();
  const Location centre = window.centroid();
  const double excite = (1.0 - opts.integral.epsilon) * p.C;

  // Survival from t_n: exp(-(lambda0 |S| (tau - t_n) + (C/beta) sum_j C_j (e^{-beta(t_n - t_j)} - e^{-beta(tau - t_j)}))).
  std::vector<double> masses(history.size());
  double head = 0.0;
  for (std::size_t j = 0; j < history.size(); ++j) {
    masses[j] = source_mass(src[j], opts.integral.normalization);
    head += masses[j] * std::exp(-p.beta * (tn - history[j].t));
  }
  auto log_survival = [&](double tau) {
    double tail = 0.0;
    for (std::size_t j = 0; j < history.size(); ++j) tail += masses[j] * std::exp(-p.beta * (tau - history[j].t));
    return -(p.lambda0 * area * (tau - tn) + excite / p.beta * (head - tail));
  };

  using detail::Moments;
  std::function<Moments(double)> f;
  boost::math::quadrature::gauss<double, 64> gl;
  const auto& nodes = gl.abscissa();
  const auto& weights = gl.weights();
  std::vector<double> gx, gy, gw;
  if (opts.spatial == SpatialRule::GaussLegendre) {
    // Full symmetric node set on [-1, 1] from the stored non-negative half.
    std::vector<double> z, w;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      z.push_back(nodes[i]);
      w.push_back(weights[i]);
      if (nodes[i] != 0.0) {
        z.push_back(-nodes[i]);
        w.push_back(weights[i]);
      }
    }
    const double hx = 0.5 * window.width(), hy = 0.5 * window.height();
    for (std::size_t i = 0; i < z.size(); ++i) {
      gx.push_back(centre.x + hx * z[i]);
      gy.push_back(centre.y + hy * z[i]);
      gw.push_back(w[i]);
    }
    const double jac = hx * hy;
    f = [&, jac](double tau) {
      double m0 = 0.0, mx = 0.0, my = 0.0;
      for (std::size_t a = 0; a < gy.size(); ++a) {
        for (std::size_t b = 0; b < gx.size(); ++b) {
          const double lam = intensity_from_sources(tau, {gx[b], gy[a]}, history, src, p);
          const double w = gw[a] * gw[b] * jac * lam;
          m0 += w;
          mx += w * gx[b];
          my += w * gy[a];
        }
      }
      const double surv = std::exp(log_survival(tau));
      return Moments{m0 * surv, tau * m0 * surv, mx * surv, my * surv};
    };
  } else {
    f = [&](double tau) {
      double m0 = p.lambda0 * area, mx = m0 * centre.x, my = m0 * centre.y;
      for (std::size_t j = 0; j < history.size(); ++j) {
        const double decay = excite * std::exp(-p.beta * (tau - history[j].t));
        for (const Component& c : src[j]) {
          const double w = decay * c.weight * mass_factor(c.params, opts.integral.normalization);
          m0 += w;
          mx += w * (history[j].s.x + c.params.mu_x);
          my += w * (history[j].s.y + c.params.mu_y);
        }
      }
      const double surv = std::exp(log_survival(tau));
      return Moments{m0 * surv, tau * m0 * surv, mx * surv, my * surv};
    };
  }

  const Moments total = detail::integrate_moments(f, tn, T, opts.time_tolerance, opts.max_depth);
  if (!(total[0] > 0.0)) throw DegenerateWindow("no probability mass for a next event before the horizon");
  return {total[1] / total[0], {total[2] / total[0], total[3] / total[0]}, total[0]};
}

}  // namespace nest
