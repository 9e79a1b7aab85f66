#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nest/errors.hpp"
#include "nest/etas.hpp"
#include "nest/intensity.hpp"
#include "nest/kernel_net.hpp"
#include "nest/metrics.hpp"
#include "nest/prediction.hpp"
#include "nest/report.hpp"
#include "nest/types.hpp"

namespace nest {

/// Shortest general-format text with at most 9 significant digits.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view text, std::size_t line) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ParseError("line " + std::to_string(line) + ": invalid number '" + std::string(text) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Events file: "sequence_id,t,x,y". A row whose three value fields are all
// empty declares a sequence without events.

/// Raw events grouped by sequence, in order of first appearance.
struct RawSequences {
  std::vector<long long> ids;
  std::vector<std::vector<Event>> events;
};

inline RawSequences read_raw_events(std::istream& in) {
  RawSequences raw;
  std::map<long long, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header_seen) {
      header_seen = true;
      if (line.find("sequence_id") != std::string::npos) continue;
      throw ParseError("line " + std::to_string(line_no) + ": expected header 'sequence_id,t,x,y'");
    }
    const auto fields = split(line, ',');
    if (fields.size() != 4)
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, found " +
                       std::to_string(fields.size()));
    const double id_value = parse_number(fields[0], line_no);
    if (id_value != std::floor(id_value) || std::abs(id_value) > 9e15)
      throw ParseError("line " + std::to_string(line_no) + ": sequence_id must be an integer");
    const long long id = static_cast<long long>(id_value);
    auto [it, inserted] = index.try_emplace(id, raw.ids.size());
    if (inserted) {
      raw.ids.push_back(id);
      raw.events.emplace_back();
    }
    const bool blank = fields[1].find_first_not_of(" \t") == std::string_view::npos &&
                       fields[2].find_first_not_of(" \t") == std::string_view::npos &&
                       fields[3].find_first_not_of(" \t") == std::string_view::npos;
    if (blank) continue;
    const Event e{parse_number(fields[1], line_no), {parse_number(fields[2], line_no), parse_number(fields[3], line_no)}};
    if (!std::isfinite(e.t) || !std::isfinite(e.s.x) || !std::isfinite(e.s.y))
      throw ParseError("line " + std::to_string(line_no) + ": non-finite value");
    raw.events[it->second].push_back(e);
  }
  for (auto& seq : raw.events)
    std::stable_sort(seq.begin(), seq.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return raw;
}

/// Per-axis affine map from raw coordinates onto a target window.
struct AffineMap {
  double t_scale = 1.0;  // raw time t_lo maps to 0
  double t_lo = 0.0;
  double x_scale = 1.0, x_shift = 0.0;  // target = raw * scale + shift
  double y_scale = 1.0, y_shift = 0.0;

  static AffineMap identity() { return {}; }

  /// Maps [t_lo, t_hi] onto [0, T] and the raw rectangle onto the target region.
  static AffineMap between(double t_lo, double t_hi, double x_lo, double x_hi, double y_lo, double y_hi,
                           const ObservationWindow& target) {
    auto scale = [](double lo, double hi, double out_lo, double out_hi, double& s, double& shift) {
      const double span = hi - lo;
      s = span > 0.0 ? (out_hi - out_lo) / span : 1.0;
      shift = span > 0.0 ? out_lo - lo * s : 0.5 * (out_lo + out_hi) - lo;
    };
    AffineMap m;
    m.t_lo = t_lo;
    m.t_scale = t_hi > t_lo ? target.horizon() / (t_hi - t_lo) : 1.0;
    scale(x_lo, x_hi, target.x_lo(), target.x_hi(), m.x_scale, m.x_shift);
    scale(y_lo, y_hi, target.y_lo(), target.y_hi(), m.y_scale, m.y_shift);
    return m;
  }

  Event forward(const Event& e) const {
    return {(e.t - t_lo) * t_scale, {e.s.x * x_scale + x_shift, e.s.y * y_scale + y_shift}};
  }
  Event inverse(const Event& e) const {
    return {e.t / t_scale + t_lo, {(e.s.x - x_shift) / x_scale, (e.s.y - y_shift) / y_scale}};
  }
};

/// Raw bounding window; unset fields are taken from the data extent
/// (time from 0 to the latest event).
struct RawWindow {
  std::optional<double> t_lo, t_hi, x_lo, x_hi, y_lo, y_hi;
};

struct IngestSpec {
  bool normalize = false;
  RawWindow raw;
  ObservationWindow target = ObservationWindow::canonical();
};

struct IngestResult {
  std::vector<EventSequence> sequences;
  std::vector<long long> ids;
  AffineMap map;
};

/// Normalized times are nudged into the open interval (0, T): exact 0 moves
/// to the smallest positive double and T to the largest double below T.
inline double clamp_open(double t, double T) {
  if (t <= 0.0 && t > -1e-12 * T) return std::numeric_limits<double>::denorm_min();
  if (t >= T && t < T * (1.0 + 1e-12)) return std::nextafter(T, 0.0);
  return t;
}

/// Rounding can push the mapped data extremes a few ulps past the region edge.
inline double snap_inside(double v, double lo, double hi) {
  const double tol = 1e-12 * (hi - lo);
  if (v < lo && v > lo - tol) return lo;
  if (v > hi && v < hi + tol) return hi;
  return v;
}

inline IngestResult ingest(std::istream& in, const IngestSpec& spec) {
  RawSequences raw = read_raw_events(in);
  IngestResult out;
  out.ids = raw.ids;
  if (spec.normalize) {
    double t_hi = 0.0, x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
    for (const auto& seq : raw.events)
      for (const Event& e : seq) {
        t_hi = std::max(t_hi, e.t);
        x_lo = std::min(x_lo, e.s.x);
        x_hi = std::max(x_hi, e.s.x);
        y_lo = std::min(y_lo, e.s.y);
        y_hi = std::max(y_hi, e.s.y);
      }
    if (!std::isfinite(x_lo)) x_lo = x_hi = y_lo = y_hi = 0.0;
    const RawWindow& r = spec.raw;
    out.map = AffineMap::between(r.t_lo.value_or(0.0), r.t_hi.value_or(t_hi), r.x_lo.value_or(x_lo),
                                 r.x_hi.value_or(x_hi), r.y_lo.value_or(y_lo), r.y_hi.value_or(y_hi), spec.target);
  }
  for (std::size_t i = 0; i < raw.events.size(); ++i) {
    EventSequence seq{{}, spec.target};
    for (const Event& e : raw.events[i]) {
      Event m = spec.normalize ? out.map.forward(e) : e;
      if (spec.normalize) {
        const ObservationWindow& w = spec.target;
        m.t = clamp_open(m.t, w.horizon());
        m.s.x = snap_inside(m.s.x, w.x_lo(), w.x_hi());
        m.s.y = snap_inside(m.s.y, w.y_lo(), w.y_hi());
      }
      seq.events.push_back(m);
    }
    const std::string where = "sequence " + std::to_string(out.ids[i]) + ": ";
    auto detail_of = [](const Error& e) {
      const std::string w = e.what();
      return w.substr(w.find(": ") + 2);
    };
    try {
      validate_sequence(seq);
    } catch (const NonMonotoneTimes& e) {
      throw NonMonotoneTimes(where + "duplicate timestamps; " + detail_of(e));
    } catch (const OutOfWindow& e) {
      throw OutOfWindow(where + detail_of(e));
    }
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

inline IngestResult ingest(const std::string& path, const IngestSpec& spec) {
  std::ifstream in = open_input(path);
  return ingest(in, spec);
}

inline std::vector<EventSequence> read_events(const std::string& path, const ObservationWindow& window) {
  IngestSpec spec;
  spec.target = window;
  return ingest(path, spec).sequences;
}

inline void write_events(std::ostream& out, std::span<const EventSequence> seqs, std::span<const long long> ids = {}) {
  out << "sequence_id,t,x,y\n";
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const long long id = ids.empty() ? static_cast<long long>(i) : ids[i];
    if (seqs[i].empty()) out << id << ",,,\n";
    for (const Event& e : seqs[i].events)
      out << id << ',' << format_number(e.t) << ',' << format_number(e.s.x) << ',' << format_number(e.s.y) << '\n';
  }
}

inline void write_events(const std::string& path, std::span<const EventSequence> seqs,
                         std::span<const long long> ids = {}) {
  std::ofstream out = open_output(path);
  write_events(out, seqs, ids);
}

// ---------------------------------------------------------------------------
// Grid files: header "t nx ny x_lo x_hi y_lo y_hi", then ny rows of nx values.

inline void write_grid(std::ostream& out, const IntensityGrid& g) {
  out << format_number(g.t) << ' ' << g.nx << ' ' << g.ny << ' ' << format_number(g.x_lo) << ' '
      << format_number(g.x_hi) << ' ' << format_number(g.y_lo) << ' ' << format_number(g.y_hi) << '\n';
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) out << (i ? " " : "") << format_number(g.at(i, j));
    out << '\n';
  }
}

inline void write_grid(const std::string& path, const IntensityGrid& g) {
  std::ofstream out = open_output(path);
  write_grid(out, g);
}

inline IntensityGrid read_grid(std::istream& in) {
  IntensityGrid g;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: empty grid file");
  std::istringstream head(line);
  if (!(head >> g.t >> g.nx >> g.ny >> g.x_lo >> g.x_hi >> g.y_lo >> g.y_hi) || g.nx < 2 || g.ny < 2)
    throw ParseError("line 1: malformed grid header");
  for (int j = 0; j < g.ny; ++j) {
    if (!std::getline(in, line)) throw ParseError("line " + std::to_string(j + 2) + ": missing grid row");
    std::istringstream row(line);
    std::string tok;
    int count = 0;
    while (row >> tok) {
      g.values.push_back(parse_number(tok, static_cast<std::size_t>(j + 2)));
      ++count;
    }
    if (count != g.nx) throw ParseError("line " + std::to_string(j + 2) + ": expected " + std::to_string(g.nx) + " values");
  }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr const char* kNestSchema = "nest-checkpoint/1";
inline constexpr const char* kEtasSchema = "etas-checkpoint/1";

inline nlohmann::json to_json(const ModelParams& p) {
  const NetShape& s = p.shape();
  return {{"schema", kNestSchema},
          {"shape",
           {{"components", s.components},
            {"hidden", s.hidden},
            {"offset_scale_x", s.offset_scale_x},
            {"offset_scale_y", s.offset_scale_y}}},
          {"lambda0", p.lambda0()},
          {"beta", p.beta()},
          {"C", p.magnitude()},
          {"theta", std::vector<double>(p.values().begin(), p.values().end())}};
}

inline nlohmann::json to_json(const EtasParams& p) {
  return {{"schema", kEtasSchema}, {"lambda0", p.lambda0}, {"beta", p.beta},     {"C", p.C},
          {"sigma_x", p.sigma_x},   {"sigma_y", p.sigma_y}};
}

inline std::string checkpoint_schema(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string())
    throw ParseError("checkpoint has no schema tag");
  return j["schema"].get<std::string>();
}

inline ModelParams nest_from_json(const nlohmann::json& j) {
  if (checkpoint_schema(j) != kNestSchema) throw ParseError("not a NEST checkpoint: " + checkpoint_schema(j));
  try {
    NetShape s;
    const auto& js = j.at("shape");
    s.components = js.at("components").get<int>();
    s.hidden = js.at("hidden").get<std::vector<int>>();
    s.offset_scale_x = js.at("offset_scale_x").get<double>();
    s.offset_scale_y = js.at("offset_scale_y").get<double>();
    ModelParams p(s);
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (theta.size() != p.size())
      throw ParseError("checkpoint theta has " + std::to_string(theta.size()) + " values, shape needs " +
                       std::to_string(p.size()));
    std::copy(theta.begin(), theta.end(), p.values().begin());
    if (j.at("lambda0").get<double>() != p.lambda0() || j.at("beta").get<double>() != p.beta() ||
        j.at("C").get<double>() != p.magnitude())
      throw ParseError("checkpoint scalars disagree with theta");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed NEST checkpoint: ") + e.what());
  }
}

inline EtasParams etas_from_json(const nlohmann::json& j) {
  if (checkpoint_schema(j) != kEtasSchema) throw ParseError("not an ETAS checkpoint: " + checkpoint_schema(j));
  try {
    EtasParams p{j.at("lambda0").get<double>(), j.at("beta").get<double>(), j.at("C").get<double>(),
                 j.at("sigma_x").get<double>(), j.at("sigma_y").get<double>()};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed ETAS checkpoint: ") + e.what());
  }
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out = open_output(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Tables and logs.

inline void write_metric_table(std::ostream& out, std::span<const MetricReport> rows) {
  out << "metric,estimate,median,q25,q75,repetitions\n";
  for (const MetricReport& r : rows)
    out << r.name << ',' << format_number(r.estimate) << ',' << format_number(r.median) << ','
        << format_number(r.q25) << ',' << format_number(r.q75) << ',' << r.repetitions << '\n';
}

inline std::vector<MetricReport> read_metric_table(std::istream& in) {
  std::vector<MetricReport> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line.rfind("metric,", 0) != 0) throw ParseError("line 1: expected metric table header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw ParseError("line " + std::to_string(line_no) + ": expected 6 fields");
    rows.push_back({std::string(f[0]), parse_number(f[1], line_no), parse_number(f[2], line_no),
                    parse_number(f[3], line_no), parse_number(f[4], line_no),
                    static_cast<int>(parse_number(f[5], line_no))});
  }
  return rows;
}

/// One line per iteration. Wall time is written as "-" unless requested,
/// so logs stay byte-identical across runs.
inline void write_train_log(std::ostream& out, std::span<const IterationRecord> records, bool wall_time) {
  out << "# iteration objective grad_norm seconds\n";
  for (const IterationRecord& r : records)
    out << r.iteration << ' ' << format_number(r.objective) << ' ' << format_number(r.grad_norm) << ' '
        << (wall_time ? format_number(r.seconds) : std::string("-")) << '\n';
}

inline void write_predictions(std::ostream& out, std::span<const EventSequence> seqs, std::span<const long long> ids,
                              const Predictor& predictor) {
  out << "sequence_id,index,t_hat,x_hat,y_hat,t,x,y\n";
  for (std::size_t q = 0; q < seqs.size(); ++q) {
    const auto& ev = seqs[q].events;
    for (std::size_t i = 1; i < ev.size(); ++i) {
      const Prediction p = predictor(std::span<const Event>(ev).first(i), seqs[q].window);
      out << (ids.empty() ? static_cast<long long>(q) : ids[q]) << ',' << i << ',' << format_number(p.t) << ','
          << format_number(p.s.x) << ',' << format_number(p.s.y) << ',' << format_number(ev[i].t) << ','
          << format_number(ev[i].s.x) << ',' << format_number(ev[i].s.y) << '\n';
    }
  }
}

inline void write_recovery_table(std::ostream& out, const RecoveryReport& r) {
  out << "field,correlation,rmse,degenerate\n";
  for (const FieldAgreement& f : r.fields)
    out << to_string(f.field) << ',' << format_number(f.correlation) << ',' << format_number(f.rmse) << ','
        << (f.degenerate ? 1 : 0) << '\n';
}

}  // namespace nest
