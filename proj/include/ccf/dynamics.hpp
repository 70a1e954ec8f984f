#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ccf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Control-affine system xdot = f(x) + g(x) u.
class ControlAffineModel {
 public:
  using DriftFn = std::function<VectorXd(const VectorXd&)>;
  using ActuationFn = std::function<MatrixXd(const VectorXd&)>;

  ControlAffineModel(int state_dim, int input_dim, DriftFn drift, ActuationFn actuation,
                     std::string name = "model")
      : state_dim_(state_dim),
        input_dim_(input_dim),
        drift_(std::move(drift)),
        actuation_(std::move(actuation)),
        name_(std::move(name)) {
    if (state_dim_ <= 0 || input_dim_ <= 0) {
      throw std::invalid_argument("ControlAffineModel: dimensions must be positive");
    }
  }

  int state_dim() const { return state_dim_; }
  int input_dim() const { return input_dim_; }
  const std::string& name() const { return name_; }

  VectorXd drift(const VectorXd& x) const {
    check_state(x);
    return drift_(x);
  }
  MatrixXd actuation(const VectorXd& x) const {
    check_state(x);
    return actuation_(x);
  }
  VectorXd xdot(const VectorXd& x, const VectorXd& u) const {
    if (u.size() != input_dim_) {
      throw std::invalid_argument("ControlAffineModel: input dimension mismatch");
    }
    return drift(x) + actuation(x) * u;
  }

 private:
  void check_state(const VectorXd& x) const {
    if (x.size() != state_dim_) {
      throw std::invalid_argument("ControlAffineModel: state dimension mismatch");
    }
  }

  int state_dim_;
  int input_dim_;
  DriftFn drift_;
  ActuationFn actuation_;
  std::string name_;
};

/// Physical parameters of the inverted pendulum. The actuation gain is
/// (1 - gain_attenuation * exp(-theta^2)) / (m l^2).
struct PendulumParams {
  double gravity = 10.0;
  double length = 1.0;
  double mass = 1.0;
  double gain_attenuation = 0.0;

  void validate() const {
    if (!(gravity > 0.0) || !(length > 0.0) || !(mass > 0.0)) {
      throw std::invalid_argument("PendulumParams: gravity, length and mass must be positive");
    }
    if (!(gain_attenuation >= 0.0 && gain_attenuation < 1.0)) {
      throw std::invalid_argument("PendulumParams: gain_attenuation must lie in [0, 1)");
    }
  }

  static PendulumParams true_system() { return {10.0, 0.7, 0.7, 0.75}; }
  static PendulumParams nominal_estimate() { return {10.0, 0.63, 0.63, 0.0}; }
};

namespace detail {

inline ControlAffineModel make_pendulum(const PendulumParams& p, std::string name) {
  p.validate();
  auto drift = [p](const VectorXd& x) {
    VectorXd f(2);
    f << x(1), (p.gravity / p.length) * std::sin(x(0));
    return f;
  };
  auto actuation = [p](const VectorXd& x) {
    MatrixXd g(2, 1);
    const double gain = 1.0 - p.gain_attenuation * std::exp(-x(0) * x(0));
    g << 0.0, gain / (p.mass * p.length * p.length);
    return g;
  };
  return ControlAffineModel(2, 1, drift, actuation, std::move(name));
}

}  // namespace detail

/// True pendulum with a state-dependent input gain. The angle is measured from
/// the upright equilibrium.
inline ControlAffineModel pendulum_true(const PendulumParams& params) {
  if (params.gain_attenuation != 0.75) {
    throw std::invalid_argument("pendulum_true: gain_attenuation must be 0.75");
  }
  return detail::make_pendulum(params, "pendulum_true");
}

/// Nominal pendulum with a constant input gain.
inline ControlAffineModel pendulum_nominal(const PendulumParams& params) {
  if (params.gain_attenuation != 0.0) {
    throw std::invalid_argument("pendulum_nominal: gain_attenuation must be 0");
  }
  return detail::make_pendulum(params, "pendulum_nominal");
}

/// Builds whichever pendulum variant the parameters describe.
inline ControlAffineModel pendulum_model(const PendulumParams& params) {
  return detail::make_pendulum(params, params.gain_attenuation == 0.0 ? "pendulum_nominal"
                                                                      : "pendulum_true");
}

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One classical fourth-order Runge-Kutta step.
template <typename VectorField>
VectorXd rk4_step(const VectorField& field, const VectorXd& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("rk4_step: step must be positive");
  if (!x.allFinite()) throw IntegrationError("rk4_step: non-finite state");
  const VectorXd k1 = field(x);
  const VectorXd k2 = field(VectorXd(x + 0.5 * h * k1));
  const VectorXd k3 = field(VectorXd(x + 0.5 * h * k2));
  const VectorXd k4 = field(VectorXd(x + h * k3));
  VectorXd next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!k1.allFinite() || !k2.allFinite() || !k3.allFinite() || !k4.allFinite() ||
      !next.allFinite()) {
    throw IntegrationError("rk4_step: non-finite intermediate value");
  }
  return next;
}

/// Outcome of one controller query.
enum class StepStatus {
  kOk,
  kFallback,    // controller failed; its fallback input was applied
  kInfeasible,  // controller certified infeasibility; its fallback input was applied
};

inline std::string_view to_string(StepStatus s) {
  switch (s) {
    case StepStatus::kOk:
      return "ok";
    case StepStatus::kFallback:
      return "fallback";
    case StepStatus::kInfeasible:
      return "infeasible";
  }
  return "?";
}

struct ControlAction {
  VectorXd u;
  StepStatus status = StepStatus::kOk;
  // Certificate margin reported by the controller; NaN when not applicable.
  double margin = std::numeric_limits<double>::quiet_NaN();
};

/// A state-feedback law together with the input it falls back to when the law
/// itself throws.
struct Controller {
  std::function<ControlAction(const VectorXd&)> act;
  std::function<VectorXd(const VectorXd&)> fallback;
};

struct TrajectoryEvent {
  double time;
  StepStatus status;
  std::string message;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<VectorXd> states;
  std::vector<VectorXd> inputs;  // one per control period
  std::vector<double> certificate_values;
  std::vector<StepStatus> statuses;  // one per input
  std::vector<double> margins;       // one per input
  std::vector<double> solve_seconds;  // wall clock per controller query
  std::vector<TrajectoryEvent> events;

  std::size_t num_steps() const { return inputs.size(); }
};

struct SimulationSettings {
  double duration = 10.0;
  double control_period = 1e-2;
  double integrator_step = 1e-3;
};

namespace detail {

inline long checked_ratio(double num, double den, const char* what) {
  const double r = num / den;
  const double rounded = std::round(r);
  if (rounded < 0.0 || std::abs(r - rounded) > 1e-9 * std::max(1.0, std::abs(r))) {
    throw std::invalid_argument(std::string("simulate: ") + what);
  }
  return static_cast<long>(rounded);
}

}  // namespace detail

/// Closed-loop simulation under zero-order hold. The controller is queried once
/// per control period; between queries the state is advanced with RK4 on
/// f(x) + g(x) u.
inline Trajectory simulate(const ControlAffineModel& model, const Controller& controller,
                           const VectorXd& x0, const SimulationSettings& settings,
                           const std::function<double(const VectorXd&)>& certificate = {}) {
  if (x0.size() != model.state_dim()) {
    throw std::invalid_argument("simulate: initial state dimension mismatch");
  }
  if (!(settings.control_period > 0.0) || !(settings.integrator_step > 0.0) ||
      settings.duration < 0.0) {
    throw std::invalid_argument("simulate: periods must be positive");
  }
  const long substeps = detail::checked_ratio(
      settings.control_period, settings.integrator_step,
      "control_period must be an integer multiple of integrator_step");
  const long steps = detail::checked_ratio(
      settings.duration, settings.control_period,
      "duration must be an integer multiple of control_period");
  if (substeps < 1) throw std::invalid_argument("simulate: integrator_step exceeds period");
  const double h = settings.control_period / static_cast<double>(substeps);

  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.inputs.reserve(steps);

  VectorXd x = x0;
  auto record_state = [&](long k) {
    traj.times.push_back(static_cast<double>(k) * settings.control_period);
    traj.states.push_back(x);
    if (certificate) traj.certificate_values.push_back(certificate(x));
  };
  record_state(0);

  for (long k = 0; k < steps; ++k) {
    const double t = traj.times.back();
    ControlAction action;
    const auto start = std::chrono::steady_clock::now();
    try {
      action = controller.act(x);
    } catch (const std::exception& e) {
      action.u = controller.fallback(x);
      action.status = StepStatus::kFallback;
      traj.events.push_back({t, StepStatus::kFallback, e.what()});
    }
    const auto stop = std::chrono::steady_clock::now();
    if (action.status == StepStatus::kInfeasible ||
        (action.status == StepStatus::kFallback &&
         (traj.events.empty() || traj.events.back().time != t))) {
      traj.events.push_back({t, action.status, "controller declared fallback input"});
    }
    if (action.u.size() != model.input_dim() || !action.u.allFinite()) {
      throw IntegrationError("simulate: controller returned an invalid input");
    }
    traj.solve_seconds.push_back(std::chrono::duration<double>(stop - start).count());
    traj.inputs.push_back(action.u);
    traj.statuses.push_back(action.status);
    traj.margins.push_back(action.margin);

    const VectorXd u = action.u;
    auto field = [&model, &u](const VectorXd& s) { return model.xdot(s, u); };
    for (long j = 0; j < substeps; ++j) x = rk4_step(field, x, h);
    record_state(k + 1);
  }
  return traj;
}

}  // namespace ccf
