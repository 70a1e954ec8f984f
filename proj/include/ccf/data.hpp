#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccf/dynamics.hpp"

namespace ccf {

struct DataPoint {
  VectorXd x;
  VectorXd u;
  VectorXd xdot;
  VectorXd residual;  // xdot - (f_hat(x) + g_hat(x) u)
};

/// F_tilde = xdot - f_hat(x) - g_hat(x) u.
inline VectorXd residual(const VectorXd& x, const VectorXd& u, const VectorXd& xdot,
                         const ControlAffineModel& nominal) {
  if (xdot.size() != nominal.state_dim()) {
    throw std::invalid_argument("residual: derivative dimension mismatch");
  }
  return xdot - nominal.xdot(x, u);
}

/// Lipschitz error bound (L_f + L_g |u_i|) |x - x_i| between a query state and
/// a data point.
inline double epsilon_bound(const VectorXd& x, const DataPoint& point, double lip_f,
                            double lip_g) {
  return (lip_f + lip_g * point.u.norm()) * (x - point.x).norm();
}

struct LipschitzConstants {
  double lip_f = 0.0;
  double lip_g = 0.0;
};

/// Bounds on the drift and actuation residual Lipschitz constants for the
/// pendulum pair: L_f = g|l - l_hat| / (l l_hat), L_g = 0.75 sqrt(2) e^{-1/2} / (m l^2).
inline LipschitzConstants pendulum_lipschitz_constants(const PendulumParams& truth,
                                                       const PendulumParams& nominal) {
  truth.validate();
  nominal.validate();
  LipschitzConstants c;
  c.lip_f = truth.gravity * std::abs(truth.length - nominal.length) /
            (truth.length * nominal.length);
  c.lip_g = truth.gain_attenuation * std::sqrt(2.0) * std::exp(-0.5) /
            (truth.mass * truth.length * truth.length);
  return c;
}

/// Immutable collection of data points with cached residuals.
class Dataset {
 public:
  Dataset(std::vector<DataPoint> points, double lip_f, double lip_g,
          std::string nominal_model_id = "")
      : points_(std::make_shared<const std::vector<DataPoint>>(std::move(points))),
        lip_f_(lip_f),
        lip_g_(lip_g),
        nominal_model_id_(std::move(nominal_model_id)) {
    validate();
  }

  std::size_t size() const { return points_->size(); }
  const DataPoint& operator[](std::size_t i) const { return (*points_)[i]; }
  const std::vector<DataPoint>& points() const { return *points_; }
  auto begin() const { return points_->begin(); }
  auto end() const { return points_->end(); }

  int state_dim() const { return static_cast<int>(points_->front().x.size()); }
  int input_dim() const { return static_cast<int>(points_->front().u.size()); }
  double lip_f() const { return lip_f_; }
  double lip_g() const { return lip_g_; }
  const std::string& nominal_model_id() const { return nominal_model_id_; }

  double epsilon(const VectorXd& x, std::size_t i) const {
    return epsilon_bound(x, (*points_)[i], lip_f_, lip_g_);
  }
  VectorXd epsilons(const VectorXd& x) const {
    VectorXd eps(size());
    for (std::size_t i = 0; i < size(); ++i) eps(i) = epsilon(x, i);
    return eps;
  }

  /// Subset in the given order, sharing the Lipschitz constants.
  Dataset subset(const std::vector<std::size_t>& indices) const {
    std::vector<DataPoint> pts;
    pts.reserve(indices.size());
    for (std::size_t i : indices) pts.push_back(points_->at(i));
    return Dataset(std::move(pts), lip_f_, lip_g_, nominal_model_id_);
  }

 private:
  void validate() const {
    if (points_->empty()) throw std::invalid_argument("Dataset: at least one point required");
    if (!(lip_f_ >= 0.0) || !(lip_g_ >= 0.0)) {
      throw std::invalid_argument("Dataset: Lipschitz constants must be nonnegative");
    }
    const auto n = points_->front().x.size();
    const auto m = points_->front().u.size();
    for (const DataPoint& p : *points_) {
      if (p.x.size() != n || p.xdot.size() != n || p.residual.size() != n || p.u.size() != m) {
        throw std::invalid_argument("Dataset: inconsistent point dimensions");
      }
    }
  }

  std::shared_ptr<const std::vector<DataPoint>> points_;
  double lip_f_;
  double lip_g_;
  std::string nominal_model_id_;
};

struct GridSpec {
  VectorXd state_lo;
  VectorXd state_hi;
  VectorXd state_step;
  std::vector<VectorXd> input_values;

  void validate() const {
    if (state_lo.size() == 0 || state_lo.size() != state_hi.size() ||
        state_lo.size() != state_step.size()) {
      throw std::invalid_argument("GridSpec: inconsistent state box dimensions");
    }
    if ((state_lo.array() > state_hi.array()).any()) {
      throw std::invalid_argument("GridSpec: state_lo must not exceed state_hi");
    }
    if (!(state_step.array() > 0.0).all()) {
      throw std::invalid_argument("GridSpec: state_step must be positive");
    }
    if (input_values.empty()) throw std::invalid_argument("GridSpec: empty input_values");
    for (const auto& u : input_values) {
      if (u.size() != input_values.front().size() || u.size() == 0) {
        throw std::invalid_argument("GridSpec: inconsistent input dimensions");
      }
    }
  }

  /// Endpoint-inclusive axis samples lo + k*step <= hi + 1e-12.
  std::vector<double> axis(Eigen::Index d) const {
    std::vector<double> values;
    for (long k = 0;; ++k) {
      const double v = state_lo(d) + static_cast<double>(k) * state_step(d);
      if (v > state_hi(d) + 1e-12) break;
      values.push_back(v);
    }
    return values;
  }

  std::size_t num_states() const {
    std::size_t count = 1;
    for (Eigen::Index d = 0; d < state_lo.size(); ++d) count *= axis(d).size();
    return count;
  }
};

/// Grid states (lexicographic, first axis slowest) crossed with the listed
/// inputs; derivatives come from the true model, residuals from the nominal one.
inline Dataset grid_dataset(const GridSpec& spec, const ControlAffineModel& truth,
                            const ControlAffineModel& nominal, double lip_f, double lip_g) {
  spec.validate();
  const auto n = spec.state_lo.size();
  if (truth.state_dim() != n || nominal.state_dim() != n ||
      truth.input_dim() != nominal.input_dim() ||
      spec.input_values.front().size() != truth.input_dim()) {
    throw std::invalid_argument("grid_dataset: model and grid dimensions differ");
  }
  std::vector<std::vector<double>> axes;
  for (Eigen::Index d = 0; d < n; ++d) axes.push_back(spec.axis(d));

  std::vector<DataPoint> points;
  points.reserve(spec.num_states() * spec.input_values.size());
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    VectorXd x(n);
    for (Eigen::Index d = 0; d < n; ++d) x(d) = axes[d][idx[d]];
    for (const VectorXd& u : spec.input_values) {
      DataPoint p;
      p.x = x;
      p.u = u;
      p.xdot = truth.xdot(x, u);
      p.residual = residual(x, u, p.xdot, nominal);
      points.push_back(std::move(p));
    }
    Eigen::Index d = n - 1;
    while (d >= 0 && ++idx[d] == axes[d].size()) {
      idx[d] = 0;
      --d;
    }
    if (d < 0) break;
  }
  return Dataset(std::move(points), lip_f, lip_g, nominal.name());
}

// ---------------------------------------------------------------------------
// Serialization: CSV rows x0..,u0..,xdot0..,res0.. plus a JSON sidecar.

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  const int n = data.state_dim();
  const int m = data.input_dim();
  std::string header;
  auto add = [&header](const std::string& col) {
    if (!header.empty()) header += ',';
    header += col;
  };
  for (int i = 0; i < n; ++i) add("x" + std::to_string(i));
  for (int i = 0; i < m; ++i) add("u" + std::to_string(i));
  for (int i = 0; i < n; ++i) add("xdot" + std::to_string(i));
  for (int i = 0; i < n; ++i) add("res" + std::to_string(i));
  out << header << '\n';
  for (const DataPoint& p : data) {
    std::string row;
    auto put = [&row](const VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!row.empty()) row += ',';
        row += detail::format_double(v(i));
      }
    };
    put(p.x);
    put(p.u);
    put(p.xdot);
    put(p.residual);
    out << row << '\n';
  }
}

inline nlohmann::json dataset_metadata(const Dataset& data) {
  return {{"num_points", data.size()},
          {"state_dim", data.state_dim()},
          {"input_dim", data.input_dim()},
          {"lip_f", data.lip_f()},
          {"lip_g", data.lip_g()},
          {"nominal_model_id", data.nominal_model_id()}};
}

/// Reads a dataset CSV and its metadata. Column counts come from the metadata.
inline Dataset read_dataset(std::istream& csv, const nlohmann::json& meta) {
  const int n = meta.at("state_dim").get<int>();
  const int m = meta.at("input_dim").get<int>();
  std::string line;
  if (!std::getline(csv, line)) throw std::runtime_error("read_dataset: missing header");
  std::vector<DataPoint> points;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != static_cast<std::size_t>(3 * n + m)) {
      throw std::runtime_error("read_dataset: wrong column count");
    }
    DataPoint p;
    p.x = Eigen::Map<VectorXd>(values.data(), n);
    p.u = Eigen::Map<VectorXd>(values.data() + n, m);
    p.xdot = Eigen::Map<VectorXd>(values.data() + n + m, n);
    p.residual = Eigen::Map<VectorXd>(values.data() + 2 * n + m, n);
    points.push_back(std::move(p));
  }
  if (meta.contains("num_points") && meta.at("num_points").get<std::size_t>() != points.size()) {
    throw std::runtime_error("read_dataset: point count does not match metadata");
  }
  return Dataset(std::move(points), meta.at("lip_f").get<double>(),
                 meta.at("lip_g").get<double>(),
                 meta.value("nominal_model_id", std::string{}));
}

}  // namespace ccf
