#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nest/errors.hpp"
#include "nest/intensity.hpp"
#include "nest/mmd.hpp"
#include "nest/prediction.hpp"
#include "nest/random.hpp"
#include "nest/synthetic.hpp"

namespace nest {

struct MetricReport {
  std::string name;
  double estimate = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  int repetitions = 0;
};

/// Linear-interpolation quantile (the common "type 7" definition).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw EmptyInput("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline MetricReport summarize(std::string name, double estimate, const std::vector<double>& reps) {
  MetricReport r{std::move(name), estimate, estimate, estimate, estimate, static_cast<int>(reps.size())};
  if (!reps.empty()) {
    r.median = quantile(reps, 0.5);
    r.q25 = quantile(reps, 0.25);
    r.q75 = quantile(reps, 0.75);
  }
  return r;
}

struct MetricOptions {
  int repetitions = 20;  // bootstrap resamples (or MMD pair draws)
  std::uint64_t seed = 1;
};

/// Bootstrap over per-sequence (numerator, denominator) pairs; each replicate
/// is sum(num) / sum(den) over a resample. Inputs are sorted first so the
/// result does not depend on sequence order.
inline std::vector<double> bootstrap_ratio(std::vector<std::pair<double, double>> items, const MetricOptions& opt) {
  std::sort(items.begin(), items.end());
  std::vector<double> reps;
  Rng rng(derive_seed(opt.seed, 0xB007));
  for (int r = 0; r < opt.repetitions; ++r) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& it = items[rng.below(items.size())];
      num += it.first;
      den += it.second;
    }
    if (den > 0.0) reps.push_back(num / den);
  }
  return reps;
}

// ---------------------------------------------------------------------------
// One-step-ahead prediction error.

/// Any callable mapping (history, window) to a predicted next event.
using Predictor = std::function<Prediction(std::span<const Event>, const ObservationWindow&)>;

template <PointProcessModel M>
Predictor model_predictor(const M& model, PredictOptions opts = {}) {
  return [model, opts](std::span<const Event> history, const ObservationWindow& w) {
    return predict_next(history, model, w, opts);
  };
}

/// Uniform guess over (t_n, T) x S, seeded by the history so results do not
/// depend on call order.
inline Predictor random_predictor(std::uint64_t seed) {
  return [seed](std::span<const Event> history, const ObservationWindow& w) {
    const double tn = history.empty() ? 0.0 : history.back().t;
    std::uint64_t h = derive_seed(seed, history.size());
    if (!history.empty()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(double));
      std::memcpy(&bits, &history.back().t, sizeof(bits));
      h = derive_seed(h, bits);
    }
    Rng rng(h);
    Prediction p;
    p.t = rng.uniform(tn, w.horizon());
    p.s = {rng.uniform(w.x_lo(), w.x_hi()), rng.uniform(w.y_lo(), w.y_hi())};
    p.mass = 1.0;
    return p;
  };
}

enum class MseMode { SpaceTime, TimeOnly };

inline std::string to_string(MseMode m) { return m == MseMode::SpaceTime ? "space-time" : "time-only"; }

/// Squared errors of every teacher-forced prediction, split by coordinate.
struct MseBreakdown {
  struct PerSequence {
    double time_sse = 0.0;
    double space_sse = 0.0;
    std::size_t count = 0;
  };
  std::vector<PerSequence> sequences;
  double time_sse = 0.0;
  double space_sse = 0.0;
  std::size_t count = 0;

  double time_mse() const { return time_sse / static_cast<double>(count); }
  double space_mse() const { return space_sse / static_cast<double>(count); }
};

inline MseBreakdown mse_breakdown(const Predictor& predictor, std::span<const EventSequence> test) {
  if (test.empty()) throw EmptyInput("no test sequences");
  MseBreakdown out;
  for (const EventSequence& seq : test) {
    if (seq.size() < 2) throw EmptyInput("every test sequence needs at least two events");
    MseBreakdown::PerSequence ps;
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const Event& truth = seq.events[i];
      const Prediction p = predictor(std::span<const Event>(seq.events).first(i), seq.window);
      const double dt = p.t - truth.t, dx = p.s.x - truth.s.x, dy = p.s.y - truth.s.y;
      ps.time_sse += dt * dt;
      ps.space_sse += dx * dx + dy * dy;
      ++ps.count;
    }
    out.time_sse += ps.time_sse;
    out.space_sse += ps.space_sse;
    out.count += ps.count;
    out.sequences.push_back(ps);
  }
  return out;
}

inline MetricReport mse_report(const MseBreakdown& b, MseMode mode, const MetricOptions& opt = {}) {
  const bool space = mode == MseMode::SpaceTime;
  std::vector<std::pair<double, double>> items;
  for (const auto& s : b.sequences)
    items.emplace_back(s.time_sse + (space ? s.space_sse : 0.0), static_cast<double>(s.count));
  const double est = (b.time_sse + (space ? b.space_sse : 0.0)) / static_cast<double>(b.count);
  return summarize("mse_" + to_string(mode), est, bootstrap_ratio(std::move(items), opt));
}

inline MetricReport mse_one_step(const Predictor& predictor, std::span<const EventSequence> test, MseMode mode,
                                 const MetricOptions& opt = {}) {
  return mse_report(mse_breakdown(predictor, test), mode, opt);
}

// ---------------------------------------------------------------------------
// Average absolute MMD between observed and generated sequences.

/// Each repetition averages the sequence MMD over `pairs` random
/// (observed, generated) pairs; the estimate is the mean over repetitions.
/// Pairs are drawn as quantile positions (u, v) used in both orientations,
/// which makes the metric symmetric in its two arguments.
inline MetricReport mmd_metric(std::span<const EventSequence> observed, std::span<const EventSequence> generated,
                               const MmdConfig& cfg, int pairs, const MetricOptions& opt = {}) {
  if (observed.empty() || generated.empty()) throw EmptyInput("mmd_metric needs nonempty sets");
  if (pairs < 1) throw InvalidArgument("pairs must be >= 1");
  cfg.validate();
  auto pick = [](std::span<const EventSequence> set, double u) -> const EventSequence& {
    return set[std::min(static_cast<std::size_t>(u * static_cast<double>(set.size())), set.size() - 1)];
  };
  const int draws = (pairs + 1) / 2;
  std::vector<double> reps;
  const int n_reps = std::max(opt.repetitions, 1);
  for (int r = 0; r < n_reps; ++r) {
    Rng rng(derive_seed(opt.seed, 0x3D3D0000ULL + static_cast<std::uint64_t>(r)));
    double forward = 0.0, backward = 0.0;
    for (int p = 0; p < draws; ++p) {
      const double u = rng.uniform(), v = rng.uniform();
      forward += sequence_mmd(pick(observed, u), pick(generated, v), cfg);
      backward += sequence_mmd(pick(generated, u), pick(observed, v), cfg);
    }
    reps.push_back((forward + backward) / (2.0 * draws));
  }
  double mean = 0.0;
  for (double v : reps) mean += v;
  mean /= static_cast<double>(reps.size());
  return summarize("mmd", mean, reps);
}

// ---------------------------------------------------------------------------
// Held-out log-likelihood.

template <PointProcessModel M>
MetricReport loglik_per_sequence(const M& model, std::span<const EventSequence> test, const MetricOptions& opt = {},
                                 const IntegralOptions& iopts = {}) {
  if (test.empty()) throw EmptyInput("no test sequences");
  std::vector<std::pair<double, double>> items;
  double total = 0.0;
  for (const EventSequence& s : test) {
    const double ll = log_likelihood(s, model, iopts);
    total += ll;
    items.emplace_back(ll, 1.0);
  }
  return summarize("loglik", total / static_cast<double>(test.size()), bootstrap_ratio(std::move(items), opt));
}

// ---------------------------------------------------------------------------
// Parameter-field recovery.

struct FieldAgreement {
  KernelField field = KernelField::SigmaX;
  double correlation = 0.0;
  double rmse = 0.0;
  bool degenerate = false;  // a field had zero variance; correlation reported as 0
};

struct RecoveryReport {
  std::vector<FieldAgreement> fields;

  const FieldAgreement& get(KernelField f) const {
    for (const FieldAgreement& a : fields)
      if (a.field == f) return a;
    throw InvalidArgument("field not in recovery report");
  }
};

inline FieldAgreement compare_field(const ParameterLattice& truth, const ParameterLattice& fitted, KernelField f) {
  const std::size_t n = truth.values.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += field_value(truth.values[i], f);
    mb += field_value(fitted.values[i], f);
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0, se = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = field_value(truth.values[i], f), b = field_value(fitted.values[i], f);
    saa += (a - ma) * (a - ma);
    sbb += (b - mb) * (b - mb);
    sab += (a - ma) * (b - mb);
    se += (a - b) * (a - b);
  }
  FieldAgreement out{f, 0.0, std::sqrt(se / static_cast<double>(n)), false};
  // Relative floor so rounding noise in a constant field is not read as signal.
  const double floor = 1e-24 * static_cast<double>(n) * (1.0 + ma * ma + mb * mb);
  if (saa <= floor || sbb <= floor) {
    out.degenerate = true;
  } else {
    out.correlation = sab / std::sqrt(saa * sbb);
  }
  return out;
}

inline RecoveryReport recovery_report(const ParameterLattice& truth, const ParameterLattice& fitted) {
  if (!truth.same_nodes(fitted) || truth.values.size() != fitted.values.size())
    throw MismatchedLattice("truth and fitted lattices have different nodes");
  if (truth.values.empty()) throw EmptyInput("empty lattice");
  RecoveryReport r;
  for (KernelField f : {KernelField::SigmaX, KernelField::SigmaY, KernelField::Rho})
    r.fields.push_back(compare_field(truth, fitted, f));
  return r;
}

/// Evaluates the fitted model on the truth lattice's nodes.
template <PointProcessModel M>
RecoveryReport recovery_report(const ParameterLattice& truth, const M& fitted) {
  const ObservationWindow w(1.0, truth.x_lo, truth.x_hi, truth.y_lo, truth.y_hi);
  return recovery_report(truth, parameter_lattice(fitted, w, truth.nx, truth.ny));
}

}  // namespace nest
