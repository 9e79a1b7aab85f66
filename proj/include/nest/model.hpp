#pragma once

#include <concepts>

#include "nest/types.hpp"

namespace nest {

/// Anything with a background rate, exponential decay, kernel magnitude and
/// a (possibly location-dependent) diffusion mixture at a source location.
template <class M>
concept PointProcessModel = requires(const M& m, Location s) {
  { m.background() } -> std::convertible_to<double>;
  { m.decay() } -> std::convertible_to<double>;
  { m.magnitude() } -> std::convertible_to<double>;
  { m.mixture_at(s) } -> std::convertible_to<Mixture>;
};

/// Scalar part of a model: lambda0, beta, C.
struct ProcessScalars {
  double lambda0 = 0.0;
  double beta = 1.0;
  double C = 0.0;
};

template <PointProcessModel M>
ProcessScalars scalars_of(const M& m) {
  return {m.background(), m.decay(), m.magnitude()};
}

}  // namespace nest
