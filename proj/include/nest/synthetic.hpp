#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "nest/errors.hpp"
#include "nest/intensity.hpp"
#include "nest/model.hpp"
#include "nest/random.hpp"
#include "nest/sampler.hpp"

namespace nest {

enum class FieldPreset { Linear, Nonlinear };

inline FieldPreset parse_field_preset(const std::string& name) {
  if (name == "linear") return FieldPreset::Linear;
  if (name == "nonlinear") return FieldPreset::Nonlinear;
  throw ConfigError("unknown synthetic preset '" + name + "' (expected linear or nonlinear)");
}

inline std::string to_string(FieldPreset p) { return p == FieldPreset::Linear ? "linear" : "nonlinear"; }

/// Ground-truth single-component model whose kernel shape is an analytic
/// function of the source location.
struct SyntheticModel {
  FieldPreset preset = FieldPreset::Linear;
  ObservationWindow window = ObservationWindow::canonical();
  double lambda0 = 0.63;
  double beta = 1.5;
  double C = 0.9;

  static constexpr double kSigmaFloor = 0.02;
  static constexpr double kRhoClip = 0.95;
  static constexpr double kSigmaMid = 0.2;

  double background() const { return lambda0; }
  double decay() const { return beta; }
  double magnitude() const { return C; }

  /// Field values at s. Coordinates are rescaled to [-1, 1]^2 first, so the
  /// centre of the region gives sigma = 0.2, rho = 0, mu = 0 for both presets.
  LocalKernelParams field(Location s) const {
    const Location c = window.centroid();
    const double u = 2.0 * (s.x - c.x) / window.width();
    const double v = 2.0 * (s.y - c.y) / window.height();
    LocalKernelParams p;
    if (preset == FieldPreset::Linear) {
      p.sigma_x = kSigmaMid + 0.08 * u + 0.04 * v;
      p.sigma_y = kSigmaMid - 0.04 * u + 0.08 * v;
      p.rho = 0.4 * u - 0.3 * v;
      p.mu_x = 0.1 * v;
      p.mu_y = -0.1 * u;
    } else {
      constexpr double pi = std::numbers::pi;
      p.sigma_x = kSigmaMid + 0.1 * std::sin(pi * u) * std::cos(0.5 * pi * v);
      p.sigma_y = kSigmaMid + 0.1 * std::cos(0.5 * pi * u) * std::sin(pi * v);
      p.rho = 0.6 * std::sin(0.5 * pi * (u + v)) * std::cos(0.5 * pi * (u - v));
      p.mu_x = 0.1 * std::sin(pi * v);
      p.mu_y = -0.1 * std::sin(pi * u);
    }
    // Scale offsets and spreads with the region so non-canonical windows keep the shape.
    p.sigma_x = std::max(p.sigma_x, kSigmaFloor) * 0.5 * window.width();
    p.sigma_y = std::max(p.sigma_y, kSigmaFloor) * 0.5 * window.height();
    p.mu_x *= 0.5 * window.width();
    p.mu_y *= 0.5 * window.height();
    p.rho = std::clamp(p.rho, -kRhoClip, kRhoClip);
    return p;
  }

  Mixture mixture_at(Location s) const { return {Component{field(s), 1.0}}; }

  /// E N(T) from an empty start, ignoring mass that leaves the region:
  /// the total rate relaxes from lambda0 |S| to lambda0 |S| / (1 - n) at rate beta - C.
  double expected_length() const {
    const double a = lambda0 * window.area(), n = C / beta, T = window.horizon();
    const double stationary = a / (1.0 - n);
    return stationary * T - (stationary - a) * (1.0 - std::exp(-(beta - C) * T)) / (beta - C);
  }
};

/// Kernel-shape fields on an nx x ny node lattice (endpoints included),
/// row-major with row j holding y_j. For mixtures each field is the
/// weight-averaged component value.
struct ParameterLattice {
  int nx = 0;
  int ny = 0;
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  std::vector<LocalKernelParams> values;

  double x_at(int i) const { return x_lo + (x_hi - x_lo) / (nx - 1) * i; }
  double y_at(int j) const { return y_lo + (y_hi - y_lo) / (ny - 1) * j; }
  const LocalKernelParams& at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }

  bool same_nodes(const ParameterLattice& o) const {
    return nx == o.nx && ny == o.ny && x_lo == o.x_lo && x_hi == o.x_hi && y_lo == o.y_lo && y_hi == o.y_hi;
  }
};

inline LocalKernelParams mixture_mean(const Mixture& m) {
  LocalKernelParams out{0.0, 0.0, 0.0, 0.0, 0.0};
  for (const Component& c : m) {
    out.mu_x += c.weight * c.params.mu_x;
    out.mu_y += c.weight * c.params.mu_y;
    out.sigma_x += c.weight * c.params.sigma_x;
    out.sigma_y += c.weight * c.params.sigma_y;
    out.rho += c.weight * c.params.rho;
  }
  return out;
}

template <PointProcessModel M>
ParameterLattice parameter_lattice(const M& model, const ObservationWindow& window, int nx, int ny) {
  if (nx < 2 || ny < 2) throw InvalidArgument("lattice dimensions must be >= 2");
  ParameterLattice g{nx, ny, window.x_lo(), window.x_hi(), window.y_lo(), window.y_hi(), {}};
  g.values.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) g.values.push_back(mixture_mean(model.mixture_at({g.x_at(i), g.y_at(j)})));
  return g;
}

enum class KernelField { MuX, MuY, SigmaX, SigmaY, Rho };

inline double field_value(const LocalKernelParams& p, KernelField f) {
  switch (f) {
    case KernelField::MuX: return p.mu_x;
    case KernelField::MuY: return p.mu_y;
    case KernelField::SigmaX: return p.sigma_x;
    case KernelField::SigmaY: return p.sigma_y;
    case KernelField::Rho: return p.rho;
  }
  return 0.0;
}

inline std::string to_string(KernelField f) {
  switch (f) {
    case KernelField::MuX: return "mu_x";
    case KernelField::MuY: return "mu_y";
    case KernelField::SigmaX: return "sigma_x";
    case KernelField::SigmaY: return "sigma_y";
    case KernelField::Rho: return "rho";
  }
  return "";
}

/// One field of a parameter lattice in the intensity-grid layout, for export.
inline IntensityGrid field_grid(const ParameterLattice& lat, KernelField f) {
  IntensityGrid g;
  g.t = 0.0;
  g.nx = lat.nx;
  g.ny = lat.ny;
  g.x_lo = lat.x_lo;
  g.x_hi = lat.x_hi;
  g.y_lo = lat.y_lo;
  g.y_hi = lat.y_hi;
  g.values.reserve(lat.values.size());
  for (const LocalKernelParams& p : lat.values) g.values.push_back(field_value(p, f));
  return g;
}

/// Ground-truth model plus the seed that drives its sequences.
struct SyntheticGenerator {
  SyntheticModel model;
  std::uint64_t seed = 1;
  SamplerConfig sampler{};

  /// Sequence i uses a seed derived from (seed, i), so prefixes are stable
  /// when more sequences are requested.
  std::vector<EventSequence> generate(std::size_t count) const {
    std::vector<EventSequence> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      SamplerConfig c = sampler;
      c.seed = derive_seed(seed, i);
      out.push_back(sample_sequence(model, model.window, c));
    }
    return out;
  }

  ParameterLattice truth(int nx, int ny) const { return parameter_lattice(model, model.window, nx, ny); }
};

inline SyntheticGenerator make_synthetic_generator(FieldPreset preset, std::uint64_t seed,
                                                   const ObservationWindow& window = ObservationWindow::canonical()) {
  SyntheticGenerator g;
  g.model.preset = preset;
  g.model.window = window;
  g.seed = seed;
  // Location draws from the kernel mixture keep generation cheap for narrow kernels.
  g.sampler.bound_strategy = BoundStrategy::MixtureBound;
  g.sampler.bound_margin = 1.0;
  return g;
}

}  // namespace nest
