#pragma once

#include <cstdint>
#include <string>

#include "nest/errors.hpp"
#include "nest/intensity.hpp"

namespace nest {

enum class FitMethod { MLE, IL };
enum class OptimizerKind { SGD, Momentum, Adam };

/// Which parameter groups the trainers may move.
struct Trainable {
  bool lambda0 = true;
  bool beta = true;
  bool magnitude = true;
  bool network = true;
};

/// Return baseline subtracted from each rollout in the policy gradient.
enum class Baseline {
  None,
  /// Mean return of the other rollouts in the same step; keeps the estimator unbiased.
  LeaveOneOut,
};

struct ImitationConfig {
  int rollouts = 10;          // M_L
  double mmd_bandwidth = 0.0;  // 0 selects the median heuristic on the first expert batch
  Baseline baseline = Baseline::LeaveOneOut;
};

struct TrainConfig {
  FitMethod method = FitMethod::MLE;
  int batch_size = 40;  // also M_E for imitation learning
  double learning_rate = 1e-2;
  int iterations = 100;
  std::uint64_t seed = 1;
  ImitationConfig il;
  double epsilon_boundary = 0.0;
  MassNormalization normalization = MassNormalization::Exact;
  OptimizerKind optimizer = OptimizerKind::SGD;
  double momentum = 0.9;
  Trainable trainable;

  IntegralOptions integral_options() const { return {epsilon_boundary, normalization}; }

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (!(epsilon_boundary >= 0.0 && epsilon_boundary < 1.0)) throw ConfigError("epsilon_boundary must be in [0, 1)");
    if (il.rollouts < 1) throw ConfigError("il.M_L must be >= 1");
    if (!(il.mmd_bandwidth >= 0.0)) throw ConfigError("il.mmd_bandwidth must be positive (or 0 for the median heuristic)");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  }
};

/// Gaussian RKHS kernel over weighted (t, x, y) tuples.
struct MmdConfig {
  double bandwidth = 1.0;
  double time_weight = 1.0;
  double space_weight = 1.0;

  void validate() const {
    if (!(bandwidth > 0.0)) throw ConfigError("mmd bandwidth must be positive");
    if (!(time_weight >= 0.0) || !(space_weight >= 0.0)) throw ConfigError("mmd weights must be nonnegative");
  }
};

enum class BoundStrategy {
  /// Uniform candidate locations under a bound on sup_s lambda* |S| that holds
  /// for the whole holding interval.
  GlobalBound,
  /// Candidate times from the whole-plane mass rate, locations drawn from the
  /// bounding mixture and thinned by region membership.
  MixtureBound,
  /// The bound from a single location s_n; not a valid bound in general.
  PaperLocal,
};

struct SamplerConfig {
  std::uint64_t seed = 1;
  BoundStrategy bound_strategy = BoundStrategy::GlobalBound;
  double bound_margin = 1.5;
  std::size_t max_events = 100000;

  void validate() const {
    if (!(bound_margin >= 1.0)) throw ConfigError("bound_margin must be >= 1");
    if (max_events < 1) throw ConfigError("max_events must be >= 1");
  }
};

inline std::string to_string(BoundStrategy b) {
  switch (b) {
    case BoundStrategy::GlobalBound: return "global";
    case BoundStrategy::MixtureBound: return "mixture";
    case BoundStrategy::PaperLocal: return "paper-local";
  }
  return "global";
}

}  // namespace nest
