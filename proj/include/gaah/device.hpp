#pragma once

// Coupler-frequency targeting and Z-line crosstalk compensation.

#include <Eigen/Dense>
#include <boost/math/tools/toms748_solve.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gaah/error.hpp"

namespace gaah {

/// Two qubits joined directly and through a tunable coupler. All values in rad/ns.
struct CouplerSpec {
  double J_direct_qq = 0.0;
  double J_qc_left = 0.0;
  double J_qc_right = 0.0;
  double omega_q_left = 0.0;
  double omega_q_right = 0.0;
  double omega_c = 0.0;
};

/// J = J_direct + g_l g_r / Delta with 1/Delta = (1/(w_l - w_c) + 1/(w_r - w_c)) / 2.
inline double effective_coupling(const CouplerSpec& s) {
  const double dl = s.omega_q_left - s.omega_c;
  const double dr = s.omega_q_right - s.omega_c;
  if (dl == 0.0 || dr == 0.0) throw DomainError("coupler is resonant with a qubit (zero detuning)");
  return s.J_direct_qq + s.J_qc_left * s.J_qc_right * 0.5 * (1.0 / dl + 1.0 / dr);
}

struct FrequencyBracket {
  double lower = 0.0;
  double upper = 0.0;
};

/// Coupler frequency in `bracket` realising `target` (rad/ns). The bracket
/// must not contain a qubit frequency, so the coupling is monotone on it.
inline double solve_coupler_frequency(double target, CouplerSpec spec, FrequencyBracket bracket) {
  if (!(bracket.lower < bracket.upper)) throw ParameterError("bracket needs lower < upper");
  for (const double w : {spec.omega_q_left, spec.omega_q_right})
    if (w >= bracket.lower && w <= bracket.upper)
      throw ParameterError("bracket contains a qubit frequency; the coupling has a pole there");
  auto f = [&](double wc) {
    spec.omega_c = wc;
    return effective_coupling(spec) - target;
  };
  const double f_lo = f(bracket.lower);
  const double f_hi = f(bracket.upper);
  const double j_lo = f_lo + target, j_hi = f_hi + target;
  constexpr double slack = 1e-9;
  if (std::abs(f_lo) <= 1e-12) return bracket.lower;
  if (std::abs(f_hi) <= 1e-12) return bracket.upper;
  const double j_min = std::min(j_lo, j_hi), j_max = std::max(j_lo, j_hi);
  if (target < j_min - slack || target > j_max + slack) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "target coupling %.6g rad/ns (%.4g MHz) outside achievable range [%.6g, %.6g] rad/ns "
                  "([%.4g, %.4g] MHz)",
                  target, target / (2e-3 * std::numbers::pi), j_min, j_max, j_min / (2e-3 * std::numbers::pi),
                  j_max / (2e-3 * std::numbers::pi));
    throw InfeasibleError(buf);
  }
  if (target <= j_min) return j_lo <= j_hi ? bracket.lower : bracket.upper;
  if (target >= j_max) return j_lo <= j_hi ? bracket.upper : bracket.lower;
  std::uintmax_t iterations = 200;
  const auto root = boost::math::tools::toms748_solve(f, bracket.lower, bracket.upper, f_lo, f_hi,
                                                      boost::math::tools::eps_tolerance<double>(50), iterations);
  return 0.5 * (root.first + root.second);
}

/// Response of each Z line (row) per unit pulse amplitude on each source (column).
struct CrosstalkMatrix {
  std::vector<std::string> lines;
  Eigen::MatrixXd matrix;

  double condition_number() const {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(matrix);
    const auto& s = svd.singularValues();
    return s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
  }
};

inline constexpr double kMaxCrosstalkCondition = 1e6;

/// Pulse amplitudes to apply so that the realised amplitudes X * applied
/// equal `intended`.
inline Eigen::VectorXd compensate_crosstalk(const Eigen::VectorXd& intended, const CrosstalkMatrix& x) {
  const auto& m = x.matrix;
  if (m.rows() != m.cols() || m.rows() == 0) throw ParameterError("crosstalk matrix must be square");
  if (intended.size() != m.rows())
    throw ParameterError("pulse vector has " + std::to_string(intended.size()) + " entries, matrix has " +
                         std::to_string(m.rows()) + " lines");
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (std::abs(m(i, i) - 1.0) > 1e-12)
      throw ParameterError("crosstalk matrix diagonal must be 1 (line " + std::to_string(i) + ")");
  const double cond = x.condition_number();
  if (!(cond <= kMaxCrosstalkCondition))
    throw NumericalError("crosstalk matrix is ill-conditioned (condition number " + std::to_string(cond) + ")");
  Eigen::VectorXd applied = m.partialPivLu().solve(intended);
  // One refinement sweep keeps the residual at rounding level.
  applied += m.partialPivLu().solve(intended - m * applied);
  return applied;
}

struct DeviceConfig {
  CouplerSpec coupler;
  FrequencyBracket bracket;
  std::optional<CrosstalkMatrix> crosstalk;
  std::string description;
};

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path + key, "missing");
  if (!j.at(key).is_number()) throw ConfigError(path + key, "must be a number");
  return j.at(key).get<double>();
}

}  // namespace detail

inline CouplerSpec coupler_from_json(const nlohmann::json& j, const std::string& path = "coupler.") {
  if (!j.is_object()) throw ConfigError(path.substr(0, path.size() - 1), "must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> known{"J_direct_qq",  "J_qc_left",     "J_qc_right",
                                                "omega_q_left", "omega_q_right", "omega_c"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError(path + it.key(), "unknown key");
  }
  CouplerSpec s;
  s.J_direct_qq = detail::require_number(j, "J_direct_qq", path);
  s.J_qc_left = detail::require_number(j, "J_qc_left", path);
  s.J_qc_right = detail::require_number(j, "J_qc_right", path);
  s.omega_q_left = detail::require_number(j, "omega_q_left", path);
  s.omega_q_right = detail::require_number(j, "omega_q_right", path);
  if (j.contains("omega_c")) s.omega_c = detail::require_number(j, "omega_c", path);
  return s;
}

inline CrosstalkMatrix crosstalk_from_json(const nlohmann::json& j, const std::string& path = "crosstalk.") {
  CrosstalkMatrix x;
  if (!j.contains("matrix") || !j.at("matrix").is_array()) throw ConfigError(path + "matrix", "must be an array of rows");
  const auto& rows = j.at("matrix");
  const auto n = static_cast<Eigen::Index>(rows.size());
  x.matrix.resize(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw ConfigError(path + "matrix[" + std::to_string(r) + "]", "row length must equal the number of rows");
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto& v = row.at(static_cast<std::size_t>(c));
      if (!v.is_number()) throw ConfigError(path + "matrix[" + std::to_string(r) + "]", "entries must be numbers");
      x.matrix(r, c) = v.get<double>();
    }
  }
  if (j.contains("lines")) x.lines = j.at("lines").get<std::vector<std::string>>();
  if (!x.lines.empty() && static_cast<Eigen::Index>(x.lines.size()) != n)
    throw ConfigError(path + "lines", "needs one name per matrix row");
  return x;
}

/// Reads a device description: {"description", "coupler": {...},
/// "bracket": [lo, hi], "crosstalk": {"lines": [...], "matrix": [[...]]}}.
inline DeviceConfig load_device_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("device", "cannot open '" + file + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("device", std::string("invalid JSON: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> known{"description", "coupler", "bracket", "crosstalk"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("device." + it.key(), "unknown key");
  }
  DeviceConfig d;
  if (j.contains("description")) d.description = j.at("description").get<std::string>();
  if (!j.contains("coupler")) throw ConfigError("device.coupler", "missing");
  d.coupler = coupler_from_json(j.at("coupler"), "device.coupler.");
  if (!j.contains("bracket") || !j.at("bracket").is_array() || j.at("bracket").size() != 2)
    throw ConfigError("device.bracket", "must be [lower, upper] in rad/ns");
  d.bracket = {j.at("bracket")[0].get<double>(), j.at("bracket")[1].get<double>()};
  if (j.contains("crosstalk")) d.crosstalk = crosstalk_from_json(j.at("crosstalk"), "device.crosstalk.");
  return d;
}

}  // namespace gaah
