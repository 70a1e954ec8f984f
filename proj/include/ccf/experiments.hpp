#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "ccf/certificates.hpp"
#include "ccf/data.hpp"
#include "ccf/dynamics.hpp"
#include "ccf/robust_controller.hpp"

namespace ccf {

enum class ExperimentKind { kStability, kSafety };

inline std::string_view to_string(ExperimentKind k) {
  return k == ExperimentKind::kStability ? "stability" : "safety";
}

enum class ControllerType { kOracle, kNominal, kRobust };

inline std::string_view to_string(ControllerType t) {
  switch (t) {
    case ControllerType::kOracle:
      return "oracle";
    case ControllerType::kNominal:
      return "nominal";
    case ControllerType::kRobust:
      return "robust";
  }
  return "?";
}

struct ControllerSpec {
  ControllerType type = ControllerType::kOracle;
  std::string name;     // output file stem
  std::string dataset;  // robust only: key into ExperimentConfig::grids
  std::size_t prune_k = 0;
};

// Gains used to derive the comparison rate when a safety configuration does
// not set comparison_slope.
inline constexpr double kReferenceKp = 0.5;
inline const double kReferenceKd = std::sqrt(3.0) / 2.0;

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kStability;
  PendulumParams true_params = PendulumParams::true_system();
  PendulumParams nominal_params = PendulumParams::nominal_estimate();
  MatrixXd P;
  double c = 0.0;                        // safety only
  double kp = 0.0, kd = 0.0;             // stability only
  std::optional<double> comparison_slope;
  std::map<std::string, GridSpec> grids;
  std::vector<ControllerSpec> controllers;
  VectorXd x0;
  double duration = 10.0;
  double control_rate = 100.0;
  double integrator_step = 1e-3;
  unsigned seed = 0;
  std::string output_dir = "out";
  SolverSettings solver;

  std::size_t num_steps() const {
    return static_cast<std::size_t>(std::llround(duration * control_rate));
  }
  SimulationSettings simulation() const {
    return {duration, 1.0 / control_rate, integrator_step};
  }
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key,
                                     const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  return j.at(key);
}

inline double number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

inline VectorXd vector_of(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], where);
  return v;
}

inline PendulumParams parse_params(const nlohmann::json& j, const std::string& where) {
  reject_unknown(j, {"gravity", "length", "mass", "gain_attenuation"}, where);
  PendulumParams p;
  p.gravity = number(require(j, "gravity", where), where + ".gravity");
  p.length = number(require(j, "length", where), where + ".length");
  p.mass = number(require(j, "mass", where), where + ".mass");
  p.gain_attenuation =
      number(require(j, "gain_attenuation", where), where + ".gain_attenuation");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return p;
}

inline GridSpec parse_grid(const nlohmann::json& j, const std::string& where) {
  reject_unknown(j, {"state_lo", "state_hi", "state_step", "input_values"}, where);
  GridSpec g;
  g.state_lo = vector_of(require(j, "state_lo", where), where + ".state_lo");
  g.state_hi = vector_of(require(j, "state_hi", where), where + ".state_hi");
  g.state_step = vector_of(require(j, "state_step", where), where + ".state_step");
  const auto& inputs = require(j, "input_values", where);
  if (!inputs.is_array() || inputs.empty()) {
    throw ConfigError(where + ".input_values: expected a nonempty array");
  }
  for (const auto& u : inputs) {
    g.input_values.push_back(u.is_number() ? VectorXd::Constant(1, u.get<double>())
                                           : vector_of(u, where + ".input_values"));
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return g;
}

}  // namespace detail

/// Parses and validates an experiment configuration. Unknown keys are errors.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  reject_unknown(j,
                 {"kind", "true_params", "nominal_params", "P", "c", "kp", "kd",
                  "comparison_slope", "grids", "controllers", "x0", "duration", "control_rate",
                  "integrator_step", "seed", "output_dir", "solver"},
                 "config");
  ExperimentConfig cfg;
  const std::string kind = require(j, "kind", "config").get<std::string>();
  if (kind == "stability") {
    cfg.kind = ExperimentKind::kStability;
  } else if (kind == "safety") {
    cfg.kind = ExperimentKind::kSafety;
  } else {
    throw ConfigError("config.kind: expected 'stability' or 'safety'");
  }
  cfg.true_params = parse_params(require(j, "true_params", "config"), "config.true_params");
  cfg.nominal_params =
      parse_params(require(j, "nominal_params", "config"), "config.nominal_params");
  if (cfg.true_params.gain_attenuation == 0.0 || cfg.nominal_params.gain_attenuation != 0.0) {
    throw ConfigError(
        "config: true_params needs a nonzero gain_attenuation and nominal_params a zero one");
  }

  const auto& P = require(j, "P", "config");
  if (!P.is_array() || P.empty()) throw ConfigError("config.P: expected a square matrix");
  const auto n = static_cast<Eigen::Index>(P.size());
  cfg.P = MatrixXd(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const VectorXd row = vector_of(P[r], "config.P");
    if (row.size() != n) throw ConfigError("config.P: expected a square matrix");
    cfg.P.row(r) = row.transpose();
  }
  if (n != 2) throw ConfigError("config.P: the pendulum has two states");

  if (cfg.kind == ExperimentKind::kStability) {
    if (j.contains("c")) throw ConfigError("config.c: only valid for safety experiments");
    cfg.kp = number(require(j, "kp", "config"), "config.kp");
    cfg.kd = number(require(j, "kd", "config"), "config.kd");
    if (!(cfg.kp > 0.0) || !(cfg.kd > 0.0)) throw ConfigError("config: kp and kd must be positive");
  } else {
    if (j.contains("kp") || j.contains("kd")) {
      throw ConfigError("config.kp/kd: only valid for stability experiments");
    }
    cfg.c = number(require(j, "c", "config"), "config.c");
    if (!(cfg.c > 0.0)) throw ConfigError("config.c: must be positive");
  }
  if (j.contains("comparison_slope")) {
    cfg.comparison_slope = number(j.at("comparison_slope"), "config.comparison_slope");
    if (!(*cfg.comparison_slope > 0.0)) throw ConfigError("config.comparison_slope: must be positive");
  }

  if (j.contains("grids")) {
    const auto& grids = j.at("grids");
    if (!grids.is_object()) throw ConfigError("config.grids: expected an object");
    for (auto it = grids.begin(); it != grids.end(); ++it) {
      GridSpec g = parse_grid(it.value(), "config.grids." + it.key());
      if (g.state_lo.size() != 2 || g.input_values.front().size() != 1) {
        throw ConfigError("config.grids." + it.key() + ": pendulum grids are 2-state, 1-input");
      }
      cfg.grids.emplace(it.key(), std::move(g));
    }
  }

  const auto& ctrls = require(j, "controllers", "config");
  if (!ctrls.is_array() || ctrls.empty()) {
    throw ConfigError("config.controllers: expected a nonempty array");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < ctrls.size(); ++i) {
    const std::string where = "config.controllers[" + std::to_string(i) + "]";
    const auto& cj = ctrls[i];
    reject_unknown(cj, {"type", "name", "dataset", "prune_k"}, where);
    ControllerSpec spec;
    const std::string type = require(cj, "type", where).get<std::string>();
    if (type == "oracle") {
      spec.type = ControllerType::kOracle;
    } else if (type == "nominal") {
      spec.type = ControllerType::kNominal;
    } else if (type == "robust") {
      spec.type = ControllerType::kRobust;
    } else {
      throw ConfigError(where + ".type: expected oracle, nominal or robust");
    }
    if (spec.type == ControllerType::kRobust) {
      spec.dataset = require(cj, "dataset", where).get<std::string>();
      if (!cfg.grids.count(spec.dataset)) {
        throw ConfigError(where + ".dataset: no grid named '" + spec.dataset + "'");
      }
      if (cj.contains("prune_k")) {
        const auto k = cj.at("prune_k").get<long>();
        if (k <= 0) throw ConfigError(where + ".prune_k: must be positive");
        spec.prune_k = static_cast<std::size_t>(k);
      }
    } else if (cj.contains("dataset") || cj.contains("prune_k")) {
      throw ConfigError(where + ": dataset/prune_k only apply to robust controllers");
    }
    spec.name = cj.contains("name") ? cj.at("name").get<std::string>()
                                    : std::string(to_string(spec.type)) +
                                          (spec.dataset.empty() ? "" : "_" + spec.dataset);
    if (!names.insert(spec.name).second) {
      throw ConfigError(where + ".name: duplicate controller name '" + spec.name + "'");
    }
    cfg.controllers.push_back(std::move(spec));
  }

  cfg.x0 = vector_of(require(j, "x0", "config"), "config.x0");
  if (cfg.x0.size() != 2) throw ConfigError("config.x0: expected two entries");
  if (j.contains("duration")) cfg.duration = number(j.at("duration"), "config.duration");
  if (j.contains("control_rate")) cfg.control_rate = number(j.at("control_rate"), "config.control_rate");
  if (j.contains("integrator_step")) {
    cfg.integrator_step = number(j.at("integrator_step"), "config.integrator_step");
  }
  if (!(cfg.duration >= 0.0) || !(cfg.control_rate > 0.0) || !(cfg.integrator_step > 0.0)) {
    throw ConfigError("config: duration, control_rate and integrator_step must be positive");
  }
  const double steps = cfg.duration * cfg.control_rate;
  if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
    throw ConfigError("config: control_rate * duration must be an integer");
  }
  const double sub = 1.0 / (cfg.control_rate * cfg.integrator_step);
  if (std::abs(sub - std::round(sub)) > 1e-9 * std::max(1.0, sub) || std::round(sub) < 1.0) {
    throw ConfigError("config: the control period must be an integer multiple of integrator_step");
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<unsigned>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    reject_unknown(s, {"tolerance", "gap_tolerance", "max_iters"}, "config.solver");
    if (s.contains("tolerance")) cfg.solver.tolerance = number(s.at("tolerance"), "config.solver.tolerance");
    if (s.contains("gap_tolerance")) {
      cfg.solver.gap_tolerance = number(s.at("gap_tolerance"), "config.solver.gap_tolerance");
    }
    if (s.contains("max_iters")) cfg.solver.max_iters = s.at("max_iters").get<int>();
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, false);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config has a malformed value: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Experiment assembly

/// Models, certificate and comparison rate shared by every controller.
struct ExperimentSetup {
  ControlAffineModel truth;
  ControlAffineModel nominal;
  QuadraticCertificate cert;
  LinearComparison comparison;
  FeedbackLaw k_d;
  LipschitzConstants lipschitz;
};

inline ExperimentSetup make_setup(const ExperimentConfig& cfg) {
  const bool stability = cfg.kind == ExperimentKind::kStability;
  double slope;
  if (cfg.comparison_slope) {
    slope = *cfg.comparison_slope;
  } else if (stability) {
    slope = derive_comparison_rate(cfg.kp, cfg.kd, cfg.P).comparison.slope();
  } else {
    slope = derive_comparison_rate(kReferenceKp, kReferenceKd, cfg.P).comparison.slope();
  }
  return ExperimentSetup{
      pendulum_model(cfg.true_params),
      pendulum_model(cfg.nominal_params),
      stability ? QuadraticCertificate::clf(cfg.P) : QuadraticCertificate::cbf(cfg.P, cfg.c),
      LinearComparison(slope),
      stability ? feedback_linearizing_kd(cfg.nominal_params, cfg.kp, cfg.kd) : zero_feedback(1),
      pendulum_lipschitz_constants(cfg.true_params, cfg.nominal_params)};
}

inline Dataset make_dataset(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                            const std::string& name) {
  return grid_dataset(cfg.grids.at(name), setup.truth, setup.nominal, setup.lipschitz.lip_f,
                      setup.lipschitz.lip_g);
}

inline Controller make_controller(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                                  const ControllerSpec& spec,
                                  const std::map<std::string, Dataset>& datasets) {
  // k_d doubles as the fallback input: the regularizer for stability, 0 for safety.
  switch (spec.type) {
    case ControllerType::kOracle:
      return make_ccf_qp_controller(setup.cert, setup.comparison, setup.truth, setup.k_d,
                                    setup.k_d);
    case ControllerType::kNominal:
      return make_ccf_qp_controller(setup.cert, setup.comparison, setup.nominal, setup.k_d,
                                    setup.k_d);
    case ControllerType::kRobust: {
      RobustSettings rs;
      rs.solver = cfg.solver;
      rs.prune_k = spec.prune_k;
      return make_robust_controller(setup.cert, setup.comparison, setup.nominal, setup.k_d,
                                    datasets.at(spec.dataset), rs, setup.k_d);
    }
  }
  throw std::logic_error("make_controller: unknown controller type");
}

// ---------------------------------------------------------------------------
// Metrics

/// Decay violation: C(x_{k+1}) > C(x_k) exp(-slope dt) + kDecayTolerance.
inline constexpr double kDecayTolerance = 5e-3;
/// Safety violation: h(x_k) > kSafetyTolerance.
inline constexpr double kSafetyTolerance = 1e-3;
/// Stability run converged when V at the final time is at most this.
inline constexpr double kConvergedThreshold = 1e-2;

struct ControllerSummary {
  std::string name;
  ControllerType type = ControllerType::kOracle;
  std::string dataset;
  std::size_t dataset_size = 0;
  std::size_t prune_k = 0;
  bool errored = false;
  std::string error;
  std::size_t steps = 0;
  double final_certificate = std::numeric_limits<double>::quiet_NaN();
  double max_certificate = std::numeric_limits<double>::quiet_NaN();
  std::size_t violation_steps = 0;
  std::size_t fallback_events = 0;
  std::size_t infeasible_events = 0;
  double solve_mean_seconds = 0.0;
  double solve_max_seconds = 0.0;
  std::string csv_path;
};

struct SummaryReport {
  ExperimentKind kind = ExperimentKind::kStability;
  double comparison_slope = 0.0;
  std::vector<ControllerSummary> controllers;

  bool any_errored() const {
    return std::any_of(controllers.begin(), controllers.end(),
                       [](const ControllerSummary& c) { return c.errored; });
  }
  const ControllerSummary* find(const std::string& name) const {
    for (const auto& c : controllers) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

/// Number of steps violating the experiment's certificate condition.
inline std::size_t count_violations(const std::vector<double>& cert_values, ExperimentKind kind,
                                    double slope, double dt) {
  std::size_t count = 0;
  if (kind == ExperimentKind::kStability) {
    const double decay = std::exp(-slope * dt);
    for (std::size_t k = 0; k + 1 < cert_values.size(); ++k) {
      if (cert_values[k + 1] > cert_values[k] * decay + kDecayTolerance) ++count;
    }
  } else {
    for (double h : cert_values) {
      if (h > kSafetyTolerance) ++count;
    }
  }
  return count;
}

inline ControllerSummary summarize(const Trajectory& traj, ExperimentKind kind, double slope,
                                   double dt) {
  ControllerSummary s;
  s.steps = traj.num_steps();
  if (!traj.certificate_values.empty()) {
    s.final_certificate = traj.certificate_values.back();
    s.max_certificate =
        *std::max_element(traj.certificate_values.begin(), traj.certificate_values.end());
  }
  s.violation_steps = count_violations(traj.certificate_values, kind, slope, dt);
  for (const auto& e : traj.events) {
    if (e.status == StepStatus::kInfeasible) {
      ++s.infeasible_events;
    } else if (e.status == StepStatus::kFallback) {
      ++s.fallback_events;
    }
  }
  if (!traj.solve_seconds.empty()) {
    double total = 0.0;
    for (double t : traj.solve_seconds) {
      total += t;
      s.solve_max_seconds = std::max(s.solve_max_seconds, t);
    }
    s.solve_mean_seconds = total / static_cast<double>(traj.solve_seconds.size());
  }
  return s;
}

inline nlohmann::json to_json(const ControllerSummary& s) {
  nlohmann::json j = {{"name", s.name},
                      {"type", std::string(to_string(s.type))},
                      {"errored", s.errored},
                      {"steps", s.steps},
                      {"final_certificate", detail::finite_or_string(s.final_certificate)},
                      {"max_certificate", detail::finite_or_string(s.max_certificate)},
                      {"violation_steps", s.violation_steps},
                      {"fallback_events", s.fallback_events},
                      {"infeasible_events", s.infeasible_events},
                      {"solve_mean_seconds", s.solve_mean_seconds},
                      {"solve_max_seconds", s.solve_max_seconds},
                      {"csv", s.csv_path}};
  if (s.type == ControllerType::kRobust) {
    j["dataset"] = s.dataset;
    j["dataset_size"] = s.dataset_size;
    j["pruned"] = s.prune_k != 0 && s.prune_k < s.dataset_size;
    j["prune_k"] = s.prune_k == 0 ? s.dataset_size : s.prune_k;
  }
  if (s.errored) j["error"] = s.error;
  return j;
}

inline nlohmann::json to_json(const SummaryReport& r) {
  nlohmann::json ctrls = nlohmann::json::array();
  for (const auto& c : r.controllers) ctrls.push_back(to_json(c));
  return {{"kind", std::string(to_string(r.kind))},
          {"comparison_slope", r.comparison_slope},
          {"thresholds",
           {{"decay_tolerance", kDecayTolerance},
            {"safety_tolerance", kSafetyTolerance},
            {"converged_threshold", kConvergedThreshold}}},
          {"controllers", ctrls}};
}

// ---------------------------------------------------------------------------
// Output

/// Trajectory CSV: t, state columns, u, certificate, status, margin. Row k
/// holds the state at t_k and the input applied over [t_{k-1}, t_k); the
/// initial row leaves u and margin empty and marks the status with '-'.
inline void emit_csv(const Trajectory& traj, std::ostream& out) {
  if (traj.states.empty()) throw std::invalid_argument("emit_csv: empty trajectory");
  const auto n = traj.states.front().size();
  const auto m = traj.inputs.empty() ? 1 : traj.inputs.front().size();
  std::string header = "t";
  if (n == 2) {
    header += ",theta,theta_dot";
  } else {
    for (Eigen::Index i = 0; i < n; ++i) header += ",x" + std::to_string(i);
  }
  if (m == 1) {
    header += ",u";
  } else {
    for (Eigen::Index i = 0; i < m; ++i) header += ",u" + std::to_string(i);
  }
  header += ",certificate,status,margin\n";
  out << header;
  const bool has_cert = traj.certificate_values.size() == traj.states.size();
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    std::string row = detail::format_double(traj.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) row += ',' + detail::format_double(traj.states[k](i));
    for (Eigen::Index i = 0; i < m; ++i) {
      row += ',';
      if (k > 0) row += detail::format_double(traj.inputs[k - 1](i));
    }
    row += ',';
    if (has_cert) row += detail::format_double(traj.certificate_values[k]);
    if (k == 0) {
      row += ",-,";
    } else {
      row += ',';
      row += to_string(traj.statuses[k - 1]);
      row += ',' + detail::format_double(traj.margins[k - 1]);
    }
    out << row << '\n';
  }
}

inline void emit_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_csv: cannot open " + path.string());
  emit_csv(traj, out);
  if (!out) throw std::runtime_error("emit_csv: write failed for " + path.string());
}

struct ExperimentResult {
  SummaryReport summary;
  std::map<std::string, Trajectory> trajectories;
};

/// Runs every configured controller against the true model. Failures are
/// recorded per controller and do not stop the remaining runs. With
/// write_outputs the CSVs and summary.json land in cfg.output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_outputs = true) {
  ExperimentResult result;
  const ExperimentSetup setup = make_setup(cfg);
  result.summary.kind = cfg.kind;
  result.summary.comparison_slope = setup.comparison.slope();
  const std::filesystem::path outdir(cfg.output_dir);
  if (write_outputs) std::filesystem::create_directories(outdir);

  std::map<std::string, Dataset> datasets;
  std::map<std::string, std::string> dataset_errors;
  for (const auto& spec : cfg.controllers) {
    if (spec.type != ControllerType::kRobust || datasets.count(spec.dataset) ||
        dataset_errors.count(spec.dataset)) {
      continue;
    }
    try {
      Dataset d = make_dataset(cfg, setup, spec.dataset);
      const BoundednessCheck bc = check_bounded(d);
      if (!bc.bounded) {
        spdlog::warn("dataset '{}': uncertainty set may be unbounded ({})", spec.dataset,
                     bc.message);
      }
      spdlog::info("dataset '{}': {} points", spec.dataset, d.size());
      datasets.emplace(spec.dataset, std::move(d));
    } catch (const std::exception& e) {
      dataset_errors.emplace(spec.dataset, e.what());
    }
  }

  const SimulationSettings sim = cfg.simulation();
  const auto& cert = setup.cert;
  auto cert_fn = [&cert](const VectorXd& x) { return cert.value(x); };
  for (const auto& spec : cfg.controllers) {
    ControllerSummary s;
    s.name = spec.name;
    s.type = spec.type;
    s.dataset = spec.dataset;
    s.prune_k = spec.prune_k;
    try {
      if (spec.type == ControllerType::kRobust) {
        if (auto it = dataset_errors.find(spec.dataset); it != dataset_errors.end()) {
          throw std::runtime_error("dataset construction failed: " + it->second);
        }
        s.dataset_size = datasets.at(spec.dataset).size();
        if (spec.prune_k > s.dataset_size) {
          throw std::runtime_error("prune_k exceeds the dataset size");
        }
      }
      spdlog::info("running controller '{}'", spec.name);
      const auto start = std::chrono::steady_clock::now();
      const Controller controller = make_controller(cfg, setup, spec, datasets);
      Trajectory traj = simulate(setup.truth, controller, cfg.x0, sim, cert_fn);
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ControllerSummary metrics =
          summarize(traj, cfg.kind, setup.comparison.slope(), sim.control_period);
      metrics.name = s.name;
      metrics.type = s.type;
      metrics.dataset = s.dataset;
      metrics.dataset_size = s.dataset_size;
      metrics.prune_k = s.prune_k;
      s = metrics;
      if (write_outputs) {
        const auto path = outdir / (spec.name + ".csv");
        emit_csv(traj, path);
        s.csv_path = path.string();
      }
      spdlog::info("controller '{}' done in {:.1f} s: final C = {:.3e}, violations = {}",
                   spec.name, elapsed, s.final_certificate, s.violation_steps);
      result.trajectories.emplace(spec.name, std::move(traj));
    } catch (const std::exception& e) {
      s.errored = true;
      s.error = e.what();
      spdlog::error("controller '{}' failed: {}", spec.name, e.what());
    }
    result.summary.controllers.push_back(std::move(s));
  }

  if (write_outputs) {
    std::ofstream out(outdir / "summary.json", std::ios::binary);
    out << to_json(result.summary).dump(2) << '\n';
  }
  return result;
}

}  // namespace ccf
