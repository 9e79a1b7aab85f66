#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nest/config.hpp"
#include "nest/errors.hpp"
#include "nest/etas.hpp"
#include "nest/io.hpp"
#include "nest/kernel_net.hpp"
#include "nest/prediction.hpp"
#include "nest/synthetic.hpp"

namespace nest {

enum class GeneratorKind { Poisson, Etas, Synthetic, Checkpoint };

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::Poisson;
  int sequences = 100;
  double lambda0 = 0.5;  // Poisson rate
  EtasParams etas{};
  FieldPreset preset = FieldPreset::Linear;
  std::string checkpoint;  // model file for kind = checkpoint
};

struct MetricsConfig {
  int repetitions = 20;
  int mmd_pairs = 100;
  int generated_sequences = 100;  // simulated from the fitted model for the MMD metric
  SpatialRule spatial_rule = SpatialRule::Analytic;
  std::vector<double> grid_times{1.0, 2.0, 3.0, 4.0};
  int nx = 50;
  int ny = 50;
};

struct PathsConfig {
  std::string data;
  std::string test;
  std::string checkpoint;
  std::string out = ".";
};

/// Everything a CLI run needs; every field has a default.
struct RunConfig {
  ObservationWindow window = ObservationWindow::canonical();
  NetShape shape{};
  std::uint64_t init_seed = 7;
  TrainConfig train{};
  MmdConfig mmd{};
  SamplerConfig sampler{};
  IngestSpec ingest{};
  GeneratorConfig generator{};
  MetricsConfig metrics{};
  PathsConfig paths{};
};

namespace detail {

/// Typed access to one JSON object that remembers which keys were read, so
/// leftovers can be reported as unknown.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("'" + path_ + key + "' has the wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class F>
  void section(const std::string& key, F&& f) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Section s(j_.at(key), path_ + key + ".");
    f(s);
    s.finish();
  }

  /// Reads a string and maps it through a table of allowed names.
  template <class E>
  void choice(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> table) {
    std::string name;
    get(key, name);
    if (!j_.contains(key)) return;
    for (const auto& [n, v] : table)
      if (name == n) {
        out = v;
        return;
      }
    std::string allowed;
    for (const auto& [n, v] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("'" + path_ + key + "' must be one of: " + allowed);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + path_ + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline ObservationWindow read_window(Section& s, const ObservationWindow& d) {
  double T = d.horizon(), xl = d.x_lo(), xh = d.x_hi(), yl = d.y_lo(), yh = d.y_hi();
  s.get("T", T);
  s.get("x_lo", xl);
  s.get("x_hi", xh);
  s.get("y_lo", yl);
  s.get("y_hi", yh);
  try {
    return ObservationWindow(T, xl, xh, yl, yh);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

inline void read_etas(Section& s, EtasParams& p) {
  s.get("lambda0", p.lambda0);
  s.get("beta", p.beta);
  s.get("C", p.C);
  s.get("sigma_x", p.sigma_x);
  s.get("sigma_y", p.sigma_y);
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  using detail::Section;
  RunConfig c;
  Section root(doc, "");
  root.section("window", [&](Section& s) { c.window = detail::read_window(s, c.window); });
  root.section("model", [&](Section& s) {
    s.get("components", c.shape.components);
    s.get("hidden", c.shape.hidden);
    s.get("offset_scale_x", c.shape.offset_scale_x);
    s.get("offset_scale_y", c.shape.offset_scale_y);
    s.get("init_seed", c.init_seed);
  });
  root.section("train", [&](Section& s) {
    TrainConfig& t = c.train;
    s.choice("method", t.method, {{"mle", FitMethod::MLE}, {"il", FitMethod::IL}});
    s.get("batch_size", t.batch_size);
    s.get("learning_rate", t.learning_rate);
    s.get("iterations", t.iterations);
    s.get("seed", t.seed);
    s.get("epsilon_boundary", t.epsilon_boundary);
    s.choice("normalization", t.normalization,
             {{"exact", MassNormalization::Exact}, {"diagonal-jacobian", MassNormalization::DiagonalJacobian}});
    s.choice("optimizer", t.optimizer,
             {{"sgd", OptimizerKind::SGD}, {"momentum", OptimizerKind::Momentum}, {"adam", OptimizerKind::Adam}});
    s.get("momentum", t.momentum);
    s.section("il", [&](Section& il) {
      il.get("M_L", t.il.rollouts);
      il.get("mmd_bandwidth", t.il.mmd_bandwidth);
      il.choice("baseline", t.il.baseline, {{"none", Baseline::None}, {"leave-one-out", Baseline::LeaveOneOut}});
    });
    s.section("trainable", [&](Section& tr) {
      tr.get("lambda0", t.trainable.lambda0);
      tr.get("beta", t.trainable.beta);
      tr.get("C", t.trainable.magnitude);
      tr.get("network", t.trainable.network);
    });
  });
  root.section("mmd", [&](Section& s) {
    s.get("bandwidth", c.mmd.bandwidth);
    s.get("time_weight", c.mmd.time_weight);
    s.get("space_weight", c.mmd.space_weight);
  });
  root.section("sampler", [&](Section& s) {
    s.get("seed", c.sampler.seed);
    s.choice("bound_strategy", c.sampler.bound_strategy,
             {{"global", BoundStrategy::GlobalBound},
              {"mixture", BoundStrategy::MixtureBound},
              {"paper-local", BoundStrategy::PaperLocal}});
    s.get("bound_margin", c.sampler.bound_margin);
    s.get("max_events", c.sampler.max_events);
  });
  root.section("ingest", [&](Section& s) {
    s.get("normalize", c.ingest.normalize);
    s.section("raw_window", [&](Section& r) {
      auto opt = [&](const char* key, std::optional<double>& out) {
        double v = 0.0;
        r.get(key, v);
        if (r.has(key)) out = v;
      };
      opt("t_lo", c.ingest.raw.t_lo);
      opt("t_hi", c.ingest.raw.t_hi);
      opt("x_lo", c.ingest.raw.x_lo);
      opt("x_hi", c.ingest.raw.x_hi);
      opt("y_lo", c.ingest.raw.y_lo);
      opt("y_hi", c.ingest.raw.y_hi);
    });
  });
  root.section("generator", [&](Section& s) {
    GeneratorConfig& g = c.generator;
    s.choice("kind", g.kind,
             {{"poisson", GeneratorKind::Poisson},
              {"etas", GeneratorKind::Etas},
              {"synthetic", GeneratorKind::Synthetic},
              {"checkpoint", GeneratorKind::Checkpoint}});
    s.get("sequences", g.sequences);
    s.get("lambda0", g.lambda0);
    s.section("etas", [&](Section& e) { detail::read_etas(e, g.etas); });
    s.choice("preset", g.preset, {{"linear", FieldPreset::Linear}, {"nonlinear", FieldPreset::Nonlinear}});
    s.get("checkpoint", g.checkpoint);
  });
  root.section("metrics", [&](Section& s) {
    MetricsConfig& m = c.metrics;
    s.get("repetitions", m.repetitions);
    s.get("mmd_pairs", m.mmd_pairs);
    s.get("generated_sequences", m.generated_sequences);
    s.choice("spatial_rule", m.spatial_rule,
             {{"analytic", SpatialRule::Analytic}, {"gauss-legendre", SpatialRule::GaussLegendre}});
    s.get("grid_times", m.grid_times);
    s.get("nx", m.nx);
    s.get("ny", m.ny);
  });
  root.section("paths", [&](Section& s) {
    s.get("data", c.paths.data);
    s.get("test", c.paths.test);
    s.get("checkpoint", c.paths.checkpoint);
    s.get("out", c.paths.out);
  });
  root.finish();

  c.ingest.target = c.window;
  try {
    c.shape.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  c.train.validate();
  c.mmd.validate();
  c.sampler.validate();
  if (c.generator.sequences < 0) throw ConfigError("generator.sequences must be >= 0");
  if (!(c.generator.lambda0 >= 0.0)) throw ConfigError("generator.lambda0 must be >= 0");
  try {
    c.generator.etas.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("generator.etas: ") + e.what());
  }
  if (c.metrics.repetitions < 1 || c.metrics.mmd_pairs < 1 || c.metrics.generated_sequences < 1)
    throw ConfigError("metrics counts must be >= 1");
  if (c.metrics.nx < 2 || c.metrics.ny < 2) throw ConfigError("metrics.nx and metrics.ny must be >= 2");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(doc);
}

}  // namespace nest
