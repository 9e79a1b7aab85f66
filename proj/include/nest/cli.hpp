#pragma once

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "nest/config_io.hpp"
#include "nest/etas.hpp"
#include "nest/io.hpp"
#include "nest/metrics.hpp"
#include "nest/sampler.hpp"
#include "nest/synthetic.hpp"
#include "nest/training.hpp"

namespace nest {

using AnyModel = std::variant<ModelParams, EtasParams>;

inline AnyModel load_model(const std::string& path) {
  const nlohmann::json j = read_json(path);
  const std::string schema = checkpoint_schema(j);
  if (schema == kNestSchema) return nest_from_json(j);
  if (schema == kEtasSchema) return etas_from_json(j);
  throw ParseError("unknown checkpoint schema '" + schema + "'");
}

/// Exit status per failure class.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) return 2;
  if (dynamic_cast<const ParseError*>(&e)) return 3;
  if (dynamic_cast<const NonMonotoneTimes*>(&e) || dynamic_cast<const OutOfWindow*>(&e)) return 4;
  if (dynamic_cast<const Diverged*>(&e) || dynamic_cast<const NonFiniteIntensity*>(&e)) return 5;
  return 1;
}

namespace cli_detail {

struct Options {
  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  std::string model = "nest";
  std::optional<int> k;
  std::string data;
  std::string test;
  std::string checkpoint;
  std::string times;
  std::optional<long long> sequence;
  std::optional<int> sequences;
  std::optional<int> nx, ny;
  bool wall_time = false;
};

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline std::vector<double> parse_times(const std::string& text) {
  std::vector<double> out;
  for (std::string_view f : split(text, ',')) out.push_back(parse_number(f, 1));
  return out;
}

template <PointProcessModel M>
std::vector<EventSequence> simulate_model(const M& model, const ObservationWindow& w, int n, SamplerConfig sc) {
  std::vector<EventSequence> out;
  const std::uint64_t base = sc.seed;
  for (int i = 0; i < n; ++i) {
    sc.seed = derive_seed(base, static_cast<std::uint64_t>(i));
    out.push_back(sample_sequence(model, w, sc));
  }
  return out;
}

inline std::string require(const std::string& a, const std::string& b, const char* what) {
  if (!a.empty()) return a;
  if (!b.empty()) return b;
  throw ConfigError(std::string("no ") + what + " given (flag or config paths section)");
}

class Runner {
 public:
  Runner(Options o, std::ostream& log) : o_(std::move(o)), log_(log) {
    if (!o_.config.empty()) cfg_ = load_run_config(o_.config);
    if (o_.seed) {
      cfg_.train.seed = *o_.seed;
      cfg_.sampler.seed = *o_.seed;
    }
    if (o_.k) {
      cfg_.shape.components = *o_.k;
      cfg_.shape.validate();
    }
    if (!o_.method.empty()) cfg_.train.method = o_.method == "il" ? FitMethod::IL : FitMethod::MLE;
    if (o_.nx) cfg_.metrics.nx = *o_.nx;
    if (o_.ny) cfg_.metrics.ny = *o_.ny;
    out_dir_ = o_.out.empty() ? cfg_.paths.out : o_.out;
    std::filesystem::create_directories(out_dir_);
  }

  int run() {
    if (o_.command == "simulate") return simulate();
    if (o_.command == "fit") return fit();
    if (o_.command == "score") return score();
    if (o_.command == "predict") return predict();
    if (o_.command == "export-grid") return export_grid();
    if (o_.command == "recover") return recover();
    throw ConfigError("unknown subcommand '" + o_.command + "'");
  }

 private:
  IngestResult load(const std::string& path) const { return ingest(path, cfg_.ingest); }

  std::string emit(const std::string& name) const {
    const std::string p = join(out_dir_, name);
    log_ << "wrote " << p << '\n';
    return p;
  }

  int simulate() {
    const GeneratorConfig& g = cfg_.generator;
    const int n = o_.sequences.value_or(g.sequences);
    std::vector<EventSequence> seqs;
    switch (g.kind) {
      case GeneratorKind::Poisson:
        seqs = simulate_model(EtasParams{g.lambda0, 1.0, 0.0, 0.1, 0.1}, cfg_.window, n, cfg_.sampler);
        break;
      case GeneratorKind::Etas: seqs = simulate_model(g.etas, cfg_.window, n, cfg_.sampler); break;
      case GeneratorKind::Synthetic: {
        SyntheticGenerator gen = make_synthetic_generator(g.preset, cfg_.sampler.seed, cfg_.window);
        gen.sampler.max_events = cfg_.sampler.max_events;
        seqs = gen.generate(static_cast<std::size_t>(n));
        const ParameterLattice truth = gen.truth(cfg_.metrics.nx, cfg_.metrics.ny);
        for (KernelField f : {KernelField::SigmaX, KernelField::SigmaY, KernelField::Rho})
          write_grid(emit("truth_" + to_string(f) + ".txt"), field_grid(truth, f));
        break;
      }
      case GeneratorKind::Checkpoint: {
        const AnyModel m = load_model(require(g.checkpoint, o_.checkpoint, "generator checkpoint"));
        std::visit([&](const auto& model) { seqs = simulate_model(model, cfg_.window, n, cfg_.sampler); }, m);
        break;
      }
    }
    write_events(emit("events.csv"), seqs);
    return 0;
  }

  int fit() {
    const IngestResult in = load(require(o_.data, cfg_.paths.data, "training data"));
    if (in.sequences.empty()) throw EmptyInput("training data has no sequences");
    std::vector<IterationRecord> records;
    nlohmann::json ckpt;
    if (o_.model == "etas") {
      if (cfg_.train.method == FitMethod::IL) throw ConfigError("imitation learning is implemented for the NEST model");
      const auto rep = fit_etas_mle_report(in.sequences, cfg_.train, default_etas_init(in.sequences));
      records = rep.records;
      ckpt = to_json(rep.params);
    } else if (o_.model == "nest") {
      ModelParams init = default_nest_init(cfg_.shape, in.sequences, cfg_.init_seed);
      const auto rep = cfg_.train.method == FitMethod::IL
                           ? fit_il(in.sequences, std::move(init), cfg_.train, cfg_.mmd, cfg_.sampler)
                           : fit_mle(in.sequences, std::move(init), cfg_.train);
      records = rep.records;
      ckpt = to_json(rep.params);
    } else {
      throw ConfigError("--model must be nest or etas");
    }
    write_json(emit("checkpoint.json"), ckpt);
    std::ofstream logf = open_output(emit("train.log"));
    write_train_log(logf, records, o_.wall_time);
    if (cfg_.ingest.normalize) {
      const AffineMap& m = in.map;
      write_json(emit("normalization.json"), {{"t_lo", m.t_lo},
                                              {"t_scale", m.t_scale},
                                              {"x_scale", m.x_scale},
                                              {"x_shift", m.x_shift},
                                              {"y_scale", m.y_scale},
                                              {"y_shift", m.y_shift}});
    }
    return 0;
  }

  AnyModel model() const { return load_model(require(o_.checkpoint, cfg_.paths.checkpoint, "checkpoint")); }

  int score() {
    const IngestResult in = load(require(o_.test.empty() ? o_.data : o_.test, cfg_.paths.test, "test data"));
    if (in.sequences.empty()) throw EmptyInput("test data has no sequences");
    const AnyModel m = model();
    MetricOptions mo{cfg_.metrics.repetitions, cfg_.train.seed};
    PredictOptions po;
    po.spatial = cfg_.metrics.spatial_rule;
    po.integral = cfg_.train.integral_options();
    std::vector<EventSequence> scorable;
    for (const EventSequence& s : in.sequences)
      if (s.size() >= 2) scorable.push_back(s);
    std::vector<MetricReport> rows;
    std::visit(
        [&](const auto& model) {
          rows.push_back(loglik_per_sequence(model, in.sequences, mo, cfg_.train.integral_options()));
          if (!scorable.empty()) {
            const MseBreakdown mb = mse_breakdown(model_predictor(model, po), scorable);
            rows.push_back(mse_report(mb, MseMode::SpaceTime, mo));
            rows.push_back(mse_report(mb, MseMode::TimeOnly, mo));
            const MseBreakdown rb = mse_breakdown(random_predictor(cfg_.train.seed), scorable);
            rows.push_back(mse_report(rb, MseMode::SpaceTime, mo));
            rows.back().name += "_random";
            rows.push_back(mse_report(rb, MseMode::TimeOnly, mo));
            rows.back().name += "_random";
          }
          SamplerConfig sc = cfg_.sampler;
          sc.seed = derive_seed(cfg_.sampler.seed, 0x5C0E);
          const auto generated = simulate_model(model, in.sequences.front().window,
                                                cfg_.metrics.generated_sequences, sc);
          MmdConfig mmd = cfg_.mmd;
          rows.push_back(mmd_metric(in.sequences, generated, mmd, cfg_.metrics.mmd_pairs, mo));
        },
        m);
    std::ofstream out = open_output(emit("metrics.csv"));
    write_metric_table(out, rows);
    return 0;
  }

  int predict() {
    const IngestResult in = load(require(o_.data.empty() ? o_.test : o_.data, cfg_.paths.test, "data"));
    const AnyModel m = model();
    PredictOptions po;
    po.spatial = cfg_.metrics.spatial_rule;
    po.integral = cfg_.train.integral_options();
    std::ofstream out = open_output(emit("predictions.csv"));
    std::visit([&](const auto& model) { write_predictions(out, in.sequences, in.ids, model_predictor(model, po)); },
               m);
    return 0;
  }

  int export_grid() {
    const IngestResult in = load(require(o_.data, cfg_.paths.data, "data"));
    if (in.sequences.empty()) throw EmptyInput("data has no sequences");
    std::size_t index = 0;
    if (o_.sequence) {
      const auto it = std::find(in.ids.begin(), in.ids.end(), *o_.sequence);
      if (it == in.ids.end()) throw InvalidArgument("sequence " + std::to_string(*o_.sequence) + " not in data");
      index = static_cast<std::size_t>(it - in.ids.begin());
    }
    const std::vector<double> times = o_.times.empty() ? cfg_.metrics.grid_times : parse_times(o_.times);
    const AnyModel m = model();
    const EventSequence& seq = in.sequences[index];
    for (std::size_t i = 0; i < times.size(); ++i) {
      IntensityGrid g;
      std::visit(
          [&](const auto& model) {
            g = intensity_grid(times[i], seq.events, model, cfg_.metrics.nx, cfg_.metrics.ny, seq.window);
          },
          m);
      char name[32];
      std::snprintf(name, sizeof name, "grid_%03zu.txt", i);
      write_grid(emit(name), g);
    }
    return 0;
  }

  int recover() {
    const AnyModel m = model();
    const SyntheticGenerator gen = make_synthetic_generator(cfg_.generator.preset, cfg_.sampler.seed, cfg_.window);
    const ParameterLattice truth = gen.truth(cfg_.metrics.nx, cfg_.metrics.ny);
    RecoveryReport r;
    std::visit(
        [&](const auto& model) {
          const ParameterLattice fitted = parameter_lattice(model, cfg_.window, truth.nx, truth.ny);
          r = recovery_report(truth, fitted);
          for (KernelField f : {KernelField::SigmaX, KernelField::SigmaY, KernelField::Rho})
            write_grid(emit("fitted_" + to_string(f) + ".txt"), field_grid(fitted, f));
        },
        m);
    std::ofstream out = open_output(emit("recovery.csv"));
    write_recovery_table(out, r);
    return 0;
  }

  Options o_;
  std::ostream& log_;
  RunConfig cfg_;
  std::string out_dir_;
};

}  // namespace cli_detail

/// Parses argv-style arguments (without the program name) and runs one subcommand.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  cli_detail::Options o;
  CLI::App app{"NEST spatio-temporal point process tool", "nest"};
  app.require_subcommand(1, 1);
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run configuration (JSON)");
    sub->add_option("--seed", o.seed, "seed for training and sampling");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    sub->add_option("--data", o.data, "events file");
  };
  CLI::App* sim = app.add_subcommand("simulate", "sample sequences from the configured generator");
  add_common(sim);
  sim->add_option("--sequences", o.sequences, "number of sequences");
  CLI::App* fit = app.add_subcommand("fit", "fit a model to an events file");
  add_common(fit);
  fit->add_option("--method", o.method, "mle or il")->check(CLI::IsMember({"mle", "il"}));
  fit->add_option("--model", o.model, "nest or etas")->check(CLI::IsMember({"nest", "etas"}));
  fit->add_option("--k", o.k, "number of mixture components");
  fit->add_flag("--wall-time", o.wall_time, "record wall time in the training log");
  CLI::App* score = app.add_subcommand("score", "metric tables for held-out data");
  add_common(score);
  score->add_option("--test", o.test, "held-out events file");
  CLI::App* pred = app.add_subcommand("predict", "one-step-ahead predictions");
  add_common(pred);
  pred->add_option("--test", o.test, "events file");
  CLI::App* grid = app.add_subcommand("export-grid", "intensity snapshots on a lattice");
  add_common(grid);
  grid->add_option("--times", o.times, "comma-separated absolute times");
  grid->add_option("--sequence", o.sequence, "sequence id providing the history");
  grid->add_option("--nx", o.nx, "lattice width");
  grid->add_option("--ny", o.ny, "lattice height");
  CLI::App* rec = app.add_subcommand("recover", "compare fitted kernel fields with the synthetic truth");
  add_common(rec);
  rec->add_option("--nx", o.nx, "lattice width");
  rec->add_option("--ny", o.ny, "lattice height");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  for (CLI::App* sub : app.get_subcommands()) o.command = sub->get_name();
  try {
    cli_detail::Runner runner(o, out);
    return runner.run();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace nest
