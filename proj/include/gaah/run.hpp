#pragma once

// Batch experiments driven by a JSON RunConfig, plus the named figure presets.

#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gaah/analysis.hpp"
#include "gaah/device.hpp"
#include "gaah/dynamics.hpp"
#include "gaah/error.hpp"
#include "gaah/io.hpp"
#include "gaah/model.hpp"
#include "gaah/opensys.hpp"
#include "gaah/spectral.hpp"

#ifndef GAAH_VERSION
#define GAAH_VERSION "unknown"
#endif

namespace gaah {

struct GridRange {
  double start = 0.0;
  double end = 0.0;
  double step = 1.0;
  friend bool operator==(const GridRange&, const GridRange&) = default;
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"phase-map", "quench",      "pe-series", "path-sweep",
                                              "lindblad",  "scaling-fit", "device-map"};
  return kinds;
}

struct RunConfig {
  std::string experiment = "pe-series";
  std::string label;  // output file stem; defaults to the experiment name

  int L = 10;
  int M = -1;  // -1: taken from the initial states, else L/2
  double lambda = kDefaultLambda;
  double mu = 0.5;
  double V = 1.0;
  double alpha = kGoldenAlpha;
  std::optional<double> delta;  // fixed phase; unset draws n_delta phases
  int n_delta = 10;
  std::uint64_t seed = 1;
  std::vector<std::string> initial_states;  // empty selects the default set

  GridRange time{0.0, 500.0, 2.0};
  double window_start = 350.0;
  double window_end = 450.0;
  std::vector<double> orders{2.0};
  unsigned workers = 0;  // 0: all available cores
  std::string out = "out";
  std::size_t dense_threshold = 0;  // 0: 4096 for single quenches, 1024 for sweeps
  int shots = 0;

  GridRange grid_mu{0.0, 2.0, 0.025};
  GridRange grid_V{0.0, 4.0, 0.1};
  std::string statistic = "mean_neg_ln_ipr";

  std::string path = "II";  // I, II, III, grid or points
  double path_step = 0.25;
  std::vector<std::array<double, 2>> points;  // (mu, V)
  int rescale_to = 0;                         // 0 disables rescaling
  std::vector<int> sizes{8, 10, 12, 14};

  std::vector<double> T1{kReferenceT1};  // +inf disables the channel
  std::vector<double> T2{kReferenceT2};
  double tolerance = 1e-8;

  std::string device = "configs/device_synthetic.json";
  double hopping_sign = -1.0;
  std::vector<double> intended_zpa;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline nlohmann::json time_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

inline nlohmann::json range_json(const GridRange& r) {
  return {{"start", r.start}, {"end", r.end}, {"step", r.step}};
}

/// Reads typed fields from one JSON object, tracking the dotted path for errors.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_.substr(0, prefix_.size() - 1),
                                           "must be a JSON object");
  }

  std::string path(const std::string& key) const { return prefix_ + key; }

  const nlohmann::json* find(const std::string& key) {
    known_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const auto* v = find(key)) out = as_number(*v, path(key));
  }

  void integer(const std::string& key, int& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key), "must be an integer");
      out = v->get<int>();
    }
  }

  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
        throw ConfigError(path(key), "must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void text(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key), "must be a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) throw ConfigError(path(key), "must be an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i)
        out.push_back(as_number((*v)[i], path(key) + "[" + std::to_string(i) + "]"));
    }
  }

  /// Number, null (= infinity) or an array of those.
  void times(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      auto one = [&](const nlohmann::json& x, const std::string& p) {
        if (x.is_null()) return std::numeric_limits<double>::infinity();
        return as_number(x, p);
      };
      out.clear();
      if (v->is_array()) {
        for (std::size_t i = 0; i < v->size(); ++i) out.push_back(one((*v)[i], path(key) + "[" + std::to_string(i) + "]"));
      } else {
        out.push_back(one(*v, path(key)));
      }
    }
  }

  void integers(const std::string& key, std::vector<int>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) throw ConfigError(path(key), "must be an array of integers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer())
          throw ConfigError(path(key) + "[" + std::to_string(i) + "]", "must be an integer");
        out.push_back((*v)[i].get<int>());
      }
    }
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) throw ConfigError(path(key), "must be an array of strings");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) throw ConfigError(path(key) + "[" + std::to_string(i) + "]", "must be a string");
        out.push_back((*v)[i].get<std::string>());
      }
    }
  }

  void range(const std::string& key, GridRange& out) {
    if (const auto* v = find(key)) {
      FieldReader r(*v, path(key) + ".");
      r.number("start", out.start);
      r.number("end", out.end);
      r.number("step", out.step);
      r.reject_unknown();
    }
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(known_.begin(), known_.end(), it.key()) == known_.end())
        throw ConfigError(path(it.key()), "unknown key");
  }

 private:
  static double as_number(const nlohmann::json& v, const std::string& p) {
    if (!v.is_number()) throw ConfigError(p, "must be a number");
    return v.get<double>();
  }

  const nlohmann::json& j_;
  std::string prefix_;
  std::vector<std::string> known_;
};

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["label"] = c.label;
  j["L"] = c.L;
  j["M"] = c.M;
  j["lambda"] = c.lambda;
  j["mu"] = c.mu;
  j["V"] = c.V;
  j["alpha"] = c.alpha;
  j["delta"] = c.delta ? nlohmann::json(*c.delta) : nlohmann::json(nullptr);
  j["n_delta"] = c.n_delta;
  j["seed"] = c.seed;
  j["initial_states"] = c.initial_states;
  j["time"] = detail::range_json(c.time);
  j["window"] = {{"start", c.window_start}, {"end", c.window_end}};
  j["orders"] = c.orders;
  j["workers"] = c.workers;
  j["out"] = c.out;
  j["dense_threshold"] = c.dense_threshold;
  j["shots"] = c.shots;
  j["grid"] = {{"mu", detail::range_json(c.grid_mu)}, {"V", detail::range_json(c.grid_V)}};
  j["statistic"] = c.statistic;
  j["path"] = c.path;
  j["path_step"] = c.path_step;
  j["points"] = nlohmann::json::array();
  for (const auto& p : c.points) j["points"].push_back({p[0], p[1]});
  j["rescale_to"] = c.rescale_to;
  j["sizes"] = c.sizes;
  nlohmann::json t1 = nlohmann::json::array(), t2 = nlohmann::json::array();
  for (const double x : c.T1) t1.push_back(detail::time_or_null(x));
  for (const double x : c.T2) t2.push_back(detail::time_or_null(x));
  j["noise"] = {{"T1", t1}, {"T2", t2}, {"tolerance", c.tolerance}};
  j["device"] = c.device;
  j["hopping_sign"] = c.hopping_sign;
  j["intended_zpa"] = c.intended_zpa;
  return j;
}

/// Overlays the keys of `j` onto `base`. Unknown keys and type mismatches
/// raise ConfigError naming the dotted field path.
inline RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  RunConfig c = std::move(base);
  detail::FieldReader r(j, "");
  r.text("experiment", c.experiment);
  r.text("label", c.label);
  r.integer("L", c.L);
  r.integer("M", c.M);
  r.number("lambda", c.lambda);
  r.number("mu", c.mu);
  r.number("V", c.V);
  r.number("alpha", c.alpha);
  if (const auto* v = r.find("delta")) {
    if (v->is_null())
      c.delta.reset();
    else if (v->is_number())
      c.delta = v->get<double>();
    else
      throw ConfigError("delta", "must be a number or null");
  }
  r.integer("n_delta", c.n_delta);
  r.unsigned_integer("seed", c.seed);
  r.strings("initial_states", c.initial_states);
  r.range("time", c.time);
  if (const auto* v = r.find("window")) {
    detail::FieldReader w(*v, "window.");
    w.number("start", c.window_start);
    w.number("end", c.window_end);
    w.reject_unknown();
  }
  r.numbers("orders", c.orders);
  if (const auto* v = r.find("workers")) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
      throw ConfigError("workers", "must be a non-negative integer");
    c.workers = v->get<unsigned>();
  }
  r.text("out", c.out);
  if (const auto* v = r.find("dense_threshold")) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
      throw ConfigError("dense_threshold", "must be a non-negative integer");
    c.dense_threshold = v->get<std::size_t>();
  }
  r.integer("shots", c.shots);
  if (const auto* v = r.find("grid")) {
    detail::FieldReader g(*v, "grid.");
    g.range("mu", c.grid_mu);
    g.range("V", c.grid_V);
    g.reject_unknown();
  }
  r.text("statistic", c.statistic);
  r.text("path", c.path);
  r.number("path_step", c.path_step);
  if (const auto* v = r.find("points")) {
    if (!v->is_array()) throw ConfigError("points", "must be an array of [mu, V] pairs");
    c.points.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& p = (*v)[i];
      const std::string where = "points[" + std::to_string(i) + "]";
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw ConfigError(where, "must be a [mu, V] pair of numbers");
      c.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  r.integer("rescale_to", c.rescale_to);
  r.integers("sizes", c.sizes);
  if (const auto* v = r.find("noise")) {
    detail::FieldReader n(*v, "noise.");
    n.times("T1", c.T1);
    n.times("T2", c.T2);
    n.number("tolerance", c.tolerance);
    n.reject_unknown();
  }
  r.text("device", c.device);
  r.number("hopping_sign", c.hopping_sign);
  r.numbers("intended_zpa", c.intended_zpa);
  r.reject_unknown();
  return c;
}

/// Parses a config file. A leading "# meta:" line (as written next to
/// results) is skipped.
inline RunConfig load_config(const std::filesystem::path& file, RunConfig base = {}) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config", "cannot open '" + file.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (text.rfind("# meta:", 0) == 0) text = text.substr(text.find('\n') + 1);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(j, std::move(base));
}

namespace detail {

inline bool is_even_positive(int L) { return L >= 2 && L % 2 == 0; }

inline void check_range(const GridRange& r, const std::string& name, bool allow_negative = false) {
  if (!std::isfinite(r.start) || !std::isfinite(r.end) || !std::isfinite(r.step))
    throw ConfigError(name, "start, end and step must be finite");
  if (!(r.step > 0.0)) throw ConfigError(name + ".step", "must be > 0");
  if (r.end < r.start) throw ConfigError(name + ".end", "must be >= start");
  if (!allow_negative && r.start < 0.0) throw ConfigError(name + ".start", "must be >= 0");
}

}  // namespace detail

/// Validates every field the chosen experiment will read.
inline void validate(const RunConfig& c) {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end()) {
    std::string list;
    for (const auto& k : kinds) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("experiment", "unknown experiment '" + c.experiment + "' (expected one of " + list + ")");
  }
  for (const char ch : c.label)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
      throw ConfigError("label", "may only contain letters, digits, '_', '-' and '.'");
  const bool spectral = c.experiment == "phase-map";
  const bool needs_sector = !spectral && c.experiment != "device-map" && c.experiment != "scaling-fit";
  const int max_L = spectral || c.experiment == "device-map" ? 4096 : c.experiment == "lindblad" ? 10 : 24;
  if (c.L < 2 || c.L > max_L)
    throw ConfigError("L", "must lie in [2, " + std::to_string(max_L) + "] for " + c.experiment + ", got " +
                               std::to_string(c.L));
  if (c.M != -1 && (c.M < 0 || c.M > c.L))
    throw ConfigError("M", "must lie in [0, L=" + std::to_string(c.L) + "], got " + std::to_string(c.M));
  if (!(c.lambda > 0.0) || !std::isfinite(c.lambda)) throw ConfigError("lambda", "must be positive");
  if (!(c.mu >= 0.0) || !std::isfinite(c.mu)) throw ConfigError("mu", "must be >= 0");
  if (!(c.V >= 0.0) || !std::isfinite(c.V)) throw ConfigError("V", "must be >= 0");
  if (!std::isfinite(c.alpha)) throw ConfigError("alpha", "must be finite");
  if (c.delta && !(*c.delta >= -std::numbers::pi && *c.delta < std::numbers::pi))
    throw ConfigError("delta", "must lie in [-pi, pi)");
  if (c.n_delta < 1) throw ConfigError("n_delta", "must be >= 1");
  if (needs_sector) {
    int M = c.M;
    for (std::size_t i = 0; i < c.initial_states.size(); ++i) {
      const std::string where = "initial_states[" + std::to_string(i) + "]";
      FockState s;
      try {
        s = state_from_string(c.initial_states[i]);
      } catch (const ParameterError& e) {
        throw ConfigError(where, e.what());
      }
      if (s.length != c.L)
        throw ConfigError(where, "has " + std::to_string(s.length) + " sites, L is " + std::to_string(c.L));
      if (M == -1) M = s.excitations();
      if (s.excitations() != M)
        throw ConfigError(where, "has " + std::to_string(s.excitations()) + " excitations, expected M=" +
                                     std::to_string(M));
    }
    const bool default_states = c.initial_states.empty() && c.experiment != "quench";
    if (default_states && !detail::is_even_positive(c.L))
      throw ConfigError("initial_states", "the default initial states need an even L");
    if (default_states && c.M != -1 && c.M != c.L / 2)
      throw ConfigError("M", "the default initial states are half filled (M = L/2)");
    if (c.experiment == "quench" && c.initial_states.size() > 1)
      throw ConfigError("initial_states", "quench takes a single initial state");
    detail::check_range(c.time, "time");
    if (!(c.window_start < c.window_end)) throw ConfigError("window.end", "must exceed window.start");
    if (c.shots < 0) throw ConfigError("shots", "must be >= 0");
  }
  if (c.experiment == "path-sweep" || c.experiment == "scaling-fit") {
    if (!(c.window_start >= 0.0 && c.window_start < c.window_end))
      throw ConfigError("window", "needs 0 <= start < end");
    if (!(c.window_end - c.window_start >= c.time.step))
      throw ConfigError("window", "must hold at least two time points");
  }
  if (c.experiment == "pe-series" || c.experiment == "quench" || c.experiment == "lindblad") {
    if (c.experiment != "quench" && (c.window_start < c.time.start || c.window_end > c.time.end + 1e-9))
      throw ConfigError("window", "must lie inside the time grid");
  }
  if (c.orders.empty()) throw ConfigError("orders", "needs at least one entropy order");
  for (std::size_t i = 0; i < c.orders.size(); ++i)
    if (!(c.orders[i] >= 1.0) || !std::isfinite(c.orders[i]))
      throw ConfigError("orders[" + std::to_string(i) + "]", "must be >= 1");
  if (c.experiment == "phase-map") {
    detail::check_range(c.grid_mu, "grid.mu");
    detail::check_range(c.grid_V, "grid.V");
    if (c.statistic != "mean_neg_ln_ipr" && c.statistic != "neg_ln_mean_ipr")
      throw ConfigError("statistic", "must be mean_neg_ln_ipr or neg_ln_mean_ipr");
  }
  if (c.experiment == "path-sweep") {
    if (c.path == "grid") {
      detail::check_range(c.grid_mu, "grid.mu");
      detail::check_range(c.grid_V, "grid.V");
    } else if (c.path == "points") {
      if (c.points.empty()) throw ConfigError("points", "path 'points' needs at least one point");
    } else if (c.path != "I" && c.path != "II" && c.path != "III") {
      throw ConfigError("path", "must be I, II, III, grid or points");
    }
    if (!(c.path_step > 0.0)) throw ConfigError("path_step", "must be > 0");
    if (c.rescale_to != 0 && !detail::is_even_positive(c.rescale_to))
      throw ConfigError("rescale_to", "must be 0 or an even size");
  }
  for (std::size_t i = 0; i < c.points.size(); ++i)
    if (!(c.points[i][0] >= 0.0) || !(c.points[i][1] >= 0.0))
      throw ConfigError("points[" + std::to_string(i) + "]", "mu and V must be >= 0");
  if (c.experiment == "scaling-fit") {
    if (c.sizes.size() < 3) throw ConfigError("sizes", "needs at least 3 system sizes");
    for (std::size_t i = 0; i < c.sizes.size(); ++i)
      if (!detail::is_even_positive(c.sizes[i]) || c.sizes[i] > 24)
        throw ConfigError("sizes[" + std::to_string(i) + "]", "must be an even size in [2, 24]");
  }
  if (c.experiment == "lindblad") {
    auto check_times = [&](const std::vector<double>& t, const char* name) {
      if (t.size() != 1 && t.size() != static_cast<std::size_t>(c.L))
        throw ConfigError(std::string("noise.") + name, "needs 1 or L entries");
      for (std::size_t i = 0; i < t.size(); ++i)
        if (!(t[i] > 0.0))
          throw ConfigError(std::string("noise.") + name + "[" + std::to_string(i) + "]", "must be > 0");
    };
    check_times(c.T1, "T1");
    check_times(c.T2, "T2");
    if (!(c.tolerance > 0.0)) throw ConfigError("noise.tolerance", "must be > 0");
  }
  if (c.experiment == "device-map") {
    if (!std::filesystem::exists(c.device)) throw ConfigError("device", "file '" + c.device + "' not found");
    if (c.hopping_sign != 1.0 && c.hopping_sign != -1.0) throw ConfigError("hopping_sign", "must be +1 or -1");
  }
}

struct RunResult {
  std::vector<std::filesystem::path> files;
};

namespace detail {

class RunContext {
 public:
  explicit RunContext(const RunConfig& c)
      : config(c), workers(c.workers == 0 ? default_workers() : c.workers),
        start(std::chrono::steady_clock::now()) {}

  std::string stem() const { return config.label.empty() ? config.experiment : config.label; }
  std::filesystem::path file(const std::string& suffix) const {
    return std::filesystem::path(config.out) / (stem() + suffix);
  }

  nlohmann::json meta(const std::string& schema, const CsvTable* table = nullptr,
                      const nlohmann::json& diagnostics = nlohmann::json::object()) const {
    nlohmann::json m;
    m["schema"] = schema;
    if (table) m["columns"] = table->columns();
    m["version"] = GAAH_VERSION;
    m["seed"] = config.seed;
    m["config"] = to_json(config);
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m["diagnostics"] = diagnostics;
    return m;
  }

  const RunConfig& config;
  unsigned workers;
  std::chrono::steady_clock::time_point start;
};

inline ModelParams model_params(const RunConfig& c, int L) {
  ModelParams p;
  p.L = L;
  p.lambda = c.lambda;
  p.mu = c.mu;
  p.V = c.V;
  p.alpha = c.alpha;
  p.delta = c.delta.value_or(0.0);
  return p;
}

inline std::vector<double> phases(const RunConfig& c, std::uint64_t point) {
  return c.delta ? std::vector<double>{*c.delta} : draw_phases(c.seed, point, c.n_delta);
}

inline std::vector<FockState> initial_states(const RunConfig& c) {
  std::vector<FockState> out;
  for (const auto& s : c.initial_states) out.push_back(state_from_string(s));
  if (out.empty()) {
    if (c.experiment == "quench") {
      std::string neel;
      for (int j = 0; j < c.L; ++j) neel += j % 2 == 0 ? '1' : '0';
      out.push_back(state_from_string(neel));
    } else {
      out = default_initial_states(c.L, c.L / 2);
    }
  }
  return out;
}

inline nlohmann::json diagnostics_json(const QuenchDiagnostics& d) {
  return {{"method", std::string(to_string(d.method))},
          {"dimension", d.dimension},
          {"krylov_steps", d.krylov.steps},
          {"krylov_max_dimension", d.krylov.max_dimension_used},
          {"krylov_max_step_error", d.krylov.max_step_error},
          {"krylov_initial_step_ns", d.krylov.initial_step},
          {"krylov_happy_breakdowns", d.krylov.happy_breakdowns}};
}

inline std::vector<ParameterPoint> sweep_points(const RunConfig& c) {
  std::vector<ParameterPoint> pts;
  if (c.path == "grid") {
    for (const double mu : linear_range(c.grid_mu.start, c.grid_mu.end, c.grid_mu.step))
      for (const double v : linear_range(c.grid_V.start, c.grid_V.end, c.grid_V.step)) pts.emplace_back(mu, v);
  } else if (c.path == "points") {
    for (const auto& p : c.points) pts.emplace_back(p[0], p[1]);
  } else {
    pts = standard_path(c.path, c.path_step);
  }
  return pts;
}

inline SweepProtocol sweep_protocol(const RunConfig& c, int L, unsigned workers) {
  SweepProtocol proto;
  proto.L = L;
  proto.lambda = c.lambda;
  proto.alpha = c.alpha;
  proto.n_delta = c.n_delta;
  proto.seed = c.seed;
  proto.window_start = c.window_start;
  proto.window_end = c.window_end;
  proto.dt = c.time.step;
  proto.orders = c.orders;
  proto.workers = workers;
  proto.dense_threshold = c.dense_threshold == 0 ? 1024 : c.dense_threshold;
  for (const auto& s : c.initial_states) proto.initial_states.push_back(state_from_string(s));
  return proto;
}

inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{"path_id", "mu",         "V", "q", "mean",   "stderr",
                                             "window_start", "window_end", "L", "n_delta", "seed"};
  return cols;
}

inline void add_sweep_rows(CsvTable& t, const std::string& id, const std::vector<SweepPoint>& pts,
                           const std::vector<double>& orders, int L, const RunConfig& c, double factor = 1.0) {
  for (const auto& p : pts)
    for (std::size_t o = 0; o < orders.size(); ++o)
      t.add(id, p.mu, p.V, orders[o], factor * p.stats[o].mean, factor * p.stats[o].std_error,
            p.stats[o].window_start, p.stats[o].window_end, L, c.n_delta, c.seed);
}

inline void add_series_rows(CsvTable& t, const std::string& observable, double index, const TimeSeries& ts) {
  const auto mean = ts.mean();
  const auto se = ts.std_error();
  for (std::size_t k = 0; k < ts.times.size(); ++k)
    t.add(ts.times[k], observable, index, mean[k], se[k], ts.trajectories());
}

inline RunResult run_phase_map(const RunContext& ctx) {
  const auto& c = ctx.config;
  std::vector<std::pair<double, double>> grid;
  for (const double mu : linear_range(c.grid_mu.start, c.grid_mu.end, c.grid_mu.step))
    for (const double v : linear_range(c.grid_V.start, c.grid_V.end, c.grid_V.step)) grid.emplace_back(mu, v);
  PhaseMapOptions opt;
  opt.lambda = c.lambda;
  opt.alpha = c.alpha;
  opt.statistic = c.statistic == "mean_neg_ln_ipr" ? IprStatistic::MeanNegLog : IprStatistic::NegLogMean;
  opt.workers = ctx.workers;
  const auto points = ipr_phase_map(grid, c.L, c.n_delta, c.seed, opt);
  CsvTable t({"mu", "V", "mean_neg_ln_ipr", "stderr", "n_delta", "L", "seed"});
  for (const auto& p : points) t.add(p.mu, p.V, p.mean, p.std_error, p.n_delta, c.L, c.seed);
  const auto path = ctx.file(".csv");
  write_csv(path, ctx.meta("phase_map", &t, {{"statistic", c.statistic}, {"points", points.size()}}), t);
  return {{path}};
}

inline const std::vector<std::string>& series_columns() {
  static const std::vector<std::string> cols{"t_ns", "observable", "index", "mean", "stderr", "n_traj"};
  return cols;
}

inline RunResult run_quench(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto states = initial_states(c);
  const auto times = time_grid(c.time.start, c.time.end, c.time.step);
  QuenchOptions opt;
  opt.evolve.dense_threshold = c.dense_threshold == 0 ? kDefaultDenseThreshold : c.dense_threshold;
  opt.workers = ctx.workers;
  opt.shots = c.shots;
  opt.shot_seed = c.seed;
  const auto res = quench_occupancy(model_params(c, c.L), states.front(), phases(c, 0), times, opt);
  CsvTable t(series_columns());
  for (std::size_t k = 0; k < times.size(); ++k)
    for (std::size_t j = 0; j < res.sites.size(); ++j) {
      const auto& ts = res.sites[j];
      double mean = 0.0;
      for (const auto& s : ts.samples) mean += s[k];
      mean /= static_cast<double>(ts.samples.size());
      double var = 0.0;
      for (const auto& s : ts.samples) var += (s[k] - mean) * (s[k] - mean);
      const double n = static_cast<double>(ts.samples.size());
      const double se = ts.samples.size() > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
      t.add(times[k], "P", static_cast<int>(j + 1), mean, se, ts.samples.size());
    }
  const auto path = ctx.file(".csv");
  auto diag = diagnostics_json(res.diagnostics);
  diag["initial_state"] = to_string(states.front());
  write_csv(path, ctx.meta("time_series", &t, diag), t);
  return {{path}};
}

inline RunResult run_pe_series(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto states = initial_states(c);
  const auto times = time_grid(c.time.start, c.time.end, c.time.step);
  QuenchOptions opt;
  opt.evolve.dense_threshold = c.dense_threshold == 0 ? kDefaultDenseThreshold : c.dense_threshold;
  opt.workers = ctx.workers;
  opt.shots = c.shots;
  opt.shot_seed = c.seed;
  const auto res = quench_pe_series(model_params(c, c.L), states, phases(c, 0), times, c.orders, opt);
  CsvTable t(series_columns());
  for (std::size_t o = 0; o < c.orders.size(); ++o) add_series_rows(t, "S_PE", c.orders[o], res.series[o]);
  auto diag = diagnostics_json(res.diagnostics);
  nlohmann::json late = nlohmann::json::array();
  for (std::size_t o = 0; o < c.orders.size(); ++o) {
    if (c.window_end <= c.time.end + 1e-9 && c.window_start >= c.time.start) {
      const auto st = late_time_average(res.series[o], c.window_start, c.window_end);
      late.push_back({{"q", c.orders[o]}, {"mean", st.mean}, {"stderr", st.std_error}});
    }
  }
  diag["late_time"] = late;
  const auto path = ctx.file(".csv");
  write_csv(path, ctx.meta("time_series", &t, diag), t);
  return {{path}};
}

inline RunResult run_lindblad(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto states = initial_states(c);
  const auto times = time_grid(c.time.start, c.time.end, c.time.step);
  NoiseModel noise{c.T1, c.T2};
  noise.validate(c.L);
  LindbladOptions opt;
  opt.tolerance = c.tolerance;
  const auto res =
      lindblad_pe_series(model_params(c, c.L), states, phases(c, 0), times, c.orders, noise, opt, ctx.workers);
  std::vector<std::string> cols = series_columns();
  cols.push_back("sector_weight");
  cols.push_back("discarded_weight");
  CsvTable t(cols);
  const auto weight = res.sector_weight.mean();
  auto add = [&](const std::string& obs, double index, const TimeSeries& ts) {
    const auto mean = ts.mean();
    const auto se = ts.std_error();
    for (std::size_t k = 0; k < times.size(); ++k)
      t.add(times[k], obs, index, mean[k], se[k], ts.trajectories(), weight[k], 1.0 - weight[k]);
  };
  for (std::size_t o = 0; o < c.orders.size(); ++o) add("S_PE", c.orders[o], res.entropy[o]);
  for (std::size_t j = 0; j < res.occupancy.size(); ++j) add("P", static_cast<double>(j + 1), res.occupancy[j]);
  const auto path = ctx.file(".csv");
  write_csv(path,
            ctx.meta("time_series", &t,
                     {{"accepted_steps", res.stats.accepted},
                      {"rejected_steps", res.stats.rejected},
                      {"min_step_ns", res.stats.min_step},
                      {"max_step_ns", res.stats.max_step}}),
            t);
  return {{path}};
}

inline RunResult run_path_sweep(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto pts = sweep_points(c);
  const auto res = path_sweep(pts, sweep_protocol(c, c.L, ctx.workers));
  CsvTable t(sweep_columns());
  add_sweep_rows(t, c.path, res, c.orders, c.L, c);
  RunResult out;
  out.files.push_back(ctx.file(".csv"));
  write_csv(out.files.back(), ctx.meta("sweep", &t), t);
  if (c.rescale_to != 0 && c.rescale_to != c.L) {
    CsvTable r(sweep_columns());
    add_sweep_rows(r, c.path, res, c.orders, c.L, c, rescale_pe(1.0, c.L, c.rescale_to));
    out.files.push_back(ctx.file("_rescaled.csv"));
    write_csv(out.files.back(),
              ctx.meta("sweep", &r, {{"rescaled_from", c.L}, {"rescaled_to", c.rescale_to},
                                     {"factor", rescale_pe(1.0, c.L, c.rescale_to)}}),
              r);
  }
  return out;
}

inline std::vector<ParameterPoint> scaling_points(const RunConfig& c) {
  if (!c.points.empty()) {
    std::vector<ParameterPoint> pts;
    for (const auto& p : c.points) pts.emplace_back(p[0], p[1]);
    return pts;
  }
  return {{0.5, 1.0}, {2.0, 1.0}, {1.0, 3.0}};
}

inline RunResult run_scaling_fit(const RunContext& ctx) {
  const auto& c = ctx.config;
  if (!c.initial_states.empty()) throw ConfigError("initial_states", "scaling-fit always uses the default states");
  const auto pts = scaling_points(c);
  CsvTable t(sweep_columns());
  // stats[size][point]
  std::vector<std::vector<SweepPoint>> per_size;
  for (const int L : c.sizes) {
    per_size.push_back(path_sweep(pts, sweep_protocol(c, L, ctx.workers)));
    add_sweep_rows(t, "scaling", per_size.back(), c.orders, L, c);
  }
  nlohmann::json fits = nlohmann::json::array();
  for (std::size_t p = 0; p < pts.size(); ++p)
    for (std::size_t o = 0; o < c.orders.size(); ++o) {
      std::vector<std::pair<double, double>> xy;
      for (std::size_t s = 0; s < c.sizes.size(); ++s)
        xy.emplace_back(log_half_filled_dimension(c.sizes[s]), per_size[s][p].stats[o].mean);
      const auto fit = scaling_fit(xy);
      fits.push_back({{"point", {pts[p].first, pts[p].second}},
                      {"q", c.orders[o]},
                      {"a", fit.a},
                      {"b", fit.b},
                      {"residual", fit.residual},
                      {"sizes", c.sizes}});
    }
  RunResult out;
  out.files.push_back(ctx.file(".json"));
  write_json(out.files.back(), ctx.meta("scaling_fit"), fits);
  out.files.push_back(ctx.file("_points.csv"));
  write_csv(out.files.back(), ctx.meta("sweep", &t), t);
  return out;
}

inline RunResult run_device_map(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto dev = load_device_config(c.device);
  const auto J = coupling_profile(model_params(c, c.L));
  CsvTable t({"bond", "J_target", "omega_c", "J_realized", "residual"});
  for (std::size_t b = 0; b < J.size(); ++b) {
    const double target = c.hopping_sign * J[b];
    double wc = 0.0;
    try {
      wc = solve_coupler_frequency(target, dev.coupler, dev.bracket);
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("bond " + std::to_string(b + 1) + ": " + e.what());
    }
    CouplerSpec s = dev.coupler;
    s.omega_c = wc;
    const double real = effective_coupling(s);
    t.add(static_cast<int>(b + 1), target, wc, real, real - target);
  }
  RunResult out;
  out.files.push_back(ctx.file(".csv"));
  write_csv(out.files.back(), ctx.meta("device_map", &t, {{"device", dev.description}}), t);
  if (!c.intended_zpa.empty()) {
    if (!dev.crosstalk) throw ConfigError("intended_zpa", "device file has no crosstalk matrix");
    const Eigen::VectorXd intended = Eigen::Map<const Eigen::VectorXd>(
        c.intended_zpa.data(), static_cast<Eigen::Index>(c.intended_zpa.size()));
    if (intended.size() != dev.crosstalk->matrix.rows())
      throw ConfigError("intended_zpa", "needs one entry per crosstalk line");
    const Eigen::VectorXd applied = compensate_crosstalk(intended, *dev.crosstalk);
    CsvTable z({"line", "intended", "applied"});
    for (Eigen::Index i = 0; i < intended.size(); ++i)
      z.add(dev.crosstalk->lines.empty() ? std::to_string(i) : dev.crosstalk->lines[static_cast<std::size_t>(i)],
            intended[i], applied[i]);
    out.files.push_back(ctx.file("_crosstalk.csv"));
    write_csv(out.files.back(),
              ctx.meta("crosstalk", &z, {{"condition_number", dev.crosstalk->condition_number()}}), z);
  }
  return out;
}

}  // namespace detail

/// Validates `config`, runs the experiment and writes results into
/// config.out. The effective configuration is written next to them.
inline RunResult run(const RunConfig& config) {
  validate(config);
  const detail::RunContext ctx(config);
  RunResult res;
  const auto& e = config.experiment;
  if (e == "phase-map") res = detail::run_phase_map(ctx);
  else if (e == "quench") res = detail::run_quench(ctx);
  else if (e == "pe-series") res = detail::run_pe_series(ctx);
  else if (e == "lindblad") res = detail::run_lindblad(ctx);
  else if (e == "path-sweep") res = detail::run_path_sweep(ctx);
  else if (e == "scaling-fit") res = detail::run_scaling_fit(ctx);
  else res = detail::run_device_map(ctx);
  const auto cfg_path = ctx.file(".config.json");
  write_text(cfg_path, meta_line(ctx.meta("config")) + to_json(config).dump(2) + "\n");
  res.files.push_back(cfg_path);
  return res;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig1c", "fig2a", "fig2b", "fig2c", "fig2d", "fig2e", "fig2f",
                                              "fig3a", "fig3b", "fig3c", "fig4a", "fig4b", "fig4c", "fig4d",
                                              "figS5"};
  return names;
}

/// Run configurations for a named figure. Desk scale finishes in minutes on
/// one core; `full` uses the published sample sizes.
inline std::vector<RunConfig> preset(const std::string& name, bool full = false) {
  auto fmt = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return std::string(buf);
  };
  std::vector<RunConfig> out;
  RunConfig base;
  base.label = name;
  if (name == "fig1c") {
    base.experiment = "phase-map";
    base.L = 1000;
    base.n_delta = full ? 100 : 10;
    base.grid_mu = full ? GridRange{0.0, 2.0, 0.025} : GridRange{0.0, 2.0, 0.1};
    base.grid_V = full ? GridRange{0.0, 4.0, 0.1} : GridRange{0.0, 4.0, 0.2};
    out.push_back(base);
  } else if (name.size() == 5 && name.rfind("fig2", 0) == 0 && name[4] >= 'a' && name[4] <= 'f') {
    const int panel = name[4] - 'a';
    static constexpr std::array<std::array<double, 2>, 3> params{{{0.5, 0.5}, {2.0, 0.5}, {0.5, 4.0}}};
    base.experiment = full ? "lindblad" : "quench";
    base.mu = params[static_cast<std::size_t>(panel % 3)][0];
    base.V = params[static_cast<std::size_t>(panel % 3)][1];
    base.initial_states = {panel < 3 ? "1000000000" : "1010101010"};
    base.n_delta = 50;
    out.push_back(base);
  } else if (name == "fig3a") {
    const std::array<std::pair<const char*, std::array<double, 2>>, 3> cases{
        {{"extended", {0.5, 1.0}}, {"critical", {2.0, 1.0}}, {"localized", {0.5, 4.0}}}};
    for (const auto& [tag, mv] : cases) {
      RunConfig c = base;
      c.experiment = "pe-series";
      c.label = name + "_" + tag;
      c.mu = mv[0];
      c.V = mv[1];
      c.orders = {1.0, 2.0};
      c.n_delta = full ? 50 : 10;
      out.push_back(c);
      if (full) {
        c.experiment = "lindblad";
        c.label += "_open";
        c.n_delta = 5;
        out.push_back(c);
      }
    }
  } else if (name == "fig3b" || name == "fig3c") {
    const bool path_one = name == "fig3b";
    const double step = full ? (path_one ? 0.5 : 0.25) : (path_one ? 1.0 : 0.5);
    for (const double x : path_one ? linear_range(1.0, 4.0, step) : linear_range(0.5, 2.0, step)) {
      RunConfig c = base;
      c.experiment = "pe-series";
      c.mu = path_one ? 0.5 : x;
      c.V = path_one ? x : 1.0;
      c.label = name + (path_one ? "_V" : "_mu") + fmt(x);
      c.orders = {1.0, 2.0};
      c.n_delta = full ? 50 : 10;
      out.push_back(c);
    }
  } else if (name == "fig4a") {
    base.experiment = "path-sweep";
    base.path = "grid";
    base.grid_mu = full ? GridRange{0.0, 2.0, 0.1} : GridRange{0.0, 2.0, 0.5};
    base.grid_V = full ? GridRange{0.0, 4.0, 0.2} : GridRange{0.0, 4.0, 1.0};
    base.n_delta = full ? 10 : 3;
    out.push_back(base);
  } else if (name == "fig4b" || name == "fig4c" || name == "fig4d") {
    base.experiment = "path-sweep";
    base.path = name == "fig4b" ? "I" : name == "fig4c" ? "II" : "III";
    base.n_delta = full ? 50 : 10;
    out.push_back(base);
    if (full) {
      RunConfig c = base;
      c.L = 14;
      c.label = name + "_L14";
      c.n_delta = 10;
      c.rescale_to = 10;
      out.push_back(c);
    }
  } else if (name == "figS5") {
    base.experiment = "scaling-fit";
    base.sizes = full ? std::vector<int>{8, 10, 12, 14} : std::vector<int>{8, 10, 12};
    base.n_delta = full ? 20 : 5;
    out.push_back(base);
  } else {
    std::string list;
    for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("preset", "unknown preset '" + name + "'; available: " + list);
  }
  return out;
}

}  // namespace gaah
