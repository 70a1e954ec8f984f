#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccf/certificates.hpp"
#include "ccf/conic_program.hpp"
#include "ccf/data.hpp"
#include "ccf/linalg.hpp"
#include "ccf/socp_solver.hpp"

namespace ccf {

// The uncertainty set U(x) collects pairs (A, b) in R^{n x m} x R^n with
// |b + A u_i - F_i| <= eps_i(x) for every data point. Programs over U(x) use
// the variable layout w = (vec(A), b) with A stored column-major.

struct BoundednessCheck {
  bool bounded = false;
  std::vector<std::size_t> witness;  // indices of m+1 points with independent [u_i; 1]
  double sigma_min = 0.0;            // of the stacked witness matrix, 0 without witness
  double tolerance = 0.0;
  std::string message;
};

/// Default rank threshold 1e-9 (1 + max |u_i|).
inline double default_rank_tolerance(const Dataset& data) {
  double umax = 0.0;
  for (const DataPoint& p : data) umax = std::max(umax, p.u.norm());
  return 1e-9 * (1.0 + umax);
}

/// Greedy search for m+1 data points whose augmented inputs [u_i; 1] are
/// linearly independent, which makes U(x) bounded for every x. A point is kept
/// when it raises the rank of the kept set; rank is read off the Gram matrix
/// eigenvalues. A negative tol selects default_rank_tolerance.
inline BoundednessCheck check_bounded(const Dataset& data, double tol = -1.0) {
  BoundednessCheck out;
  out.tolerance = tol < 0.0 ? default_rank_tolerance(data) : tol;
  const int m = data.input_dim();
  if (data.size() < static_cast<std::size_t>(m + 1)) {
    out.message = "fewer than m+1 data points";
    return out;
  }
  const double tol_sq = out.tolerance * out.tolerance;
  std::vector<VectorXd> kept;
  for (std::size_t i = 0; i < data.size() && kept.size() < static_cast<std::size_t>(m + 1); ++i) {
    VectorXd v(m + 1);
    v << data[i].u, 1.0;
    const int k = static_cast<int>(kept.size()) + 1;
    MatrixXd rows(k, m + 1);
    for (int r = 0; r + 1 < k; ++r) rows.row(r) = kept[r].transpose();
    rows.row(k - 1) = v.transpose();
    const MatrixXd gram = rows * rows.transpose();
    if (linalg::symmetric_eigenvalues(gram)(0) > tol_sq) {
      kept.push_back(v);
      out.witness.push_back(i);
    }
  }
  if (kept.size() < static_cast<std::size_t>(m + 1)) {
    out.witness.clear();
    out.message = "augmented inputs [u_i; 1] span fewer than m+1 dimensions";
    return out;
  }
  MatrixXd U(m + 1, m + 1);
  for (int r = 0; r <= m; ++r) U.row(r) = kept[r].transpose();
  out.sigma_min = linalg::singular_values(U)(0);
  out.bounded = out.sigma_min > out.tolerance;
  out.message = out.bounded ? "bounded" : "witness matrix numerically singular";
  if (!out.bounded) out.witness.clear();
  return out;
}

namespace detail {

/// Adds the constraints (A, b) in U(x) to a program over w = (vec(A), b)
/// starting at column `offset`. Points with eps_i = 0 become equalities.
inline void add_uncertainty_constraints(ConicProgram& p, int offset, const Dataset& data,
                                        const VectorXd& eps) {
  const int n = data.state_dim();
  const int m = data.input_dim();
  std::vector<Triplet> eq;
  std::vector<double> eq_rhs;
  for (int r = 0; r < p.eq_matrix.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(p.eq_matrix, r); it; ++it) {
      eq.emplace_back(it.row(), it.col(), it.value());
    }
  }
  eq_rhs.assign(p.eq_rhs.data(), p.eq_rhs.data() + p.eq_rhs.size());

  for (std::size_t i = 0; i < data.size(); ++i) {
    const DataPoint& pt = data[i];
    // Row j of b + A u_i: sum_k A(j,k) u_ik + b_j.
    std::vector<Triplet> rows;
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < m; ++k) {
        if (pt.u(k) != 0.0) rows.emplace_back(j, offset + j + n * k, pt.u(k));
      }
      rows.emplace_back(j, offset + n * m + j, 1.0);
    }
    if (eps(i) > 0.0) {
      SecondOrderConeBlock cone;
      cone.M = SparseMatrix(n, p.num_vars);
      cone.M.setFromTriplets(rows.begin(), rows.end());
      cone.q = -pt.residual;
      cone.r = Eigen::SparseVector<double>(p.num_vars);
      cone.s = eps(i);
      p.cones.push_back(std::move(cone));
    } else {
      const int base = static_cast<int>(eq_rhs.size());
      for (const Triplet& t : rows) eq.emplace_back(base + t.row(), t.col(), t.value());
      for (int j = 0; j < n; ++j) eq_rhs.push_back(pt.residual(j));
    }
  }
  p.eq_matrix = SparseMatrix(static_cast<Eigen::Index>(eq_rhs.size()), p.num_vars);
  p.eq_matrix.setFromTriplets(eq.begin(), eq.end());
  p.eq_rhs = Eigen::Map<const VectorXd>(eq_rhs.data(), static_cast<Eigen::Index>(eq_rhs.size()));
}

}  // namespace detail

struct SupportResult {
  SolverStatus status = SolverStatus::kNumericalFailure;
  double value = std::numeric_limits<double>::quiet_NaN();  // +inf when unbounded
  VectorXd argmax;                                          // w = (vec(A), b)
};

/// sup { d'w : w = (vec(A), b) in U(x), E_extra w = d_extra } for a linear
/// functional d. -inf when the constrained set is empty.
inline SupportResult support_function(const Dataset& data, const VectorXd& x,
                                      const VectorXd& direction, const SolverSettings& settings = {},
                                      const SparseMatrix& extra_eq = {},
                                      const VectorXd& extra_rhs = {}) {
  const int n = data.state_dim();
  const int m = data.input_dim();
  const int nw = n * m + n;
  if (direction.size() != nw) throw std::invalid_argument("support_function: direction size");
  ConicProgram p(nw);
  p.linear_cost = -direction;
  if (extra_eq.rows() > 0) {
    if (extra_eq.cols() != nw || extra_rhs.size() != extra_eq.rows()) {
      throw std::invalid_argument("support_function: extra equality dimensions");
    }
    p.eq_matrix = extra_eq;
    p.eq_rhs = extra_rhs;
  }
  detail::add_uncertainty_constraints(p, 0, data, data.epsilons(x));
  const SolverSolution sol = solve_conic(p, settings);
  SupportResult out;
  out.status = sol.status;
  switch (sol.status) {
    case SolverStatus::kOptimal:
      out.value = direction.dot(sol.primal);
      out.argmax = sol.primal;
      break;
    case SolverStatus::kUnbounded:
      out.value = std::numeric_limits<double>::infinity();
      break;
    case SolverStatus::kInfeasible:
      out.value = -std::numeric_limits<double>::infinity();
      break;
    case SolverStatus::kNumericalFailure:
      break;
  }
  return out;
}

/// sup over (A, b) in U(x) of the certificate derivative
/// L_f^C + L_g^C u + grad C'(b + A u), with hats denoting the nominal model.
/// +inf when the supremum is unbounded; status kNumericalFailure and a NaN
/// value when the solver gives up.
inline SupportResult worst_case_cdot(const VectorXd& x, const VectorXd& u,
                                     const QuadraticCertificate& cert,
                                     const ControlAffineModel& nominal, const Dataset& data,
                                     const SolverSettings& settings = {}) {
  const int n = data.state_dim();
  const int m = data.input_dim();
  if (u.size() != m || nominal.state_dim() != n || nominal.input_dim() != m) {
    throw std::invalid_argument("worst_case_cdot: dimension mismatch");
  }
  const LieDerivatives lie = lie_derivatives(cert, nominal, x);
  const double nominal_cdot = lie.lf + lie.lg.dot(u);
  const VectorXd grad = cert.gradient(x);
  if (grad.isZero(0.0)) return {SolverStatus::kOptimal, nominal_cdot, VectorXd::Zero(n * m + n)};

  VectorXd d(n * m + n);
  for (int k = 0; k < m; ++k) d.segment(n * k, n) = grad * u(k);
  d.tail(n) = grad;
  SupportResult r = support_function(data, x, d, settings);
  if (r.status == SolverStatus::kOptimal) r.value += nominal_cdot;
  return r;
}

enum class RayDecision { kClear, kBlocked, kUnknown };

inline std::string_view to_string(RayDecision d) {
  switch (d) {
    case RayDecision::kClear:
      return "clear";
    case RayDecision::kBlocked:
      return "blocked";
    case RayDecision::kUnknown:
      return "unknown";
  }
  return "?";
}

struct FeasibilityReport {
  bool bounded = false;
  std::vector<std::size_t> witness;
  double sigma_min = 0.0;
  bool ray_clear = false;
  RayDecision decision = RayDecision::kUnknown;
  // sup of L_f^C + grad C'b over the slice grad C'A = -L_g^C; -inf for an
  // empty slice, +inf when unbounded, NaN when unknown.
  double ray_sup = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.0;  // alpha(C(x))
  SolverStatus solver_status = SolverStatus::kNumericalFailure;
};

/// Clearance threshold for ray_sup <= -alpha(C(x)).
inline constexpr double kRayTolerance = 1e-9;

/// Decides whether the robust program is feasible at x by testing whether the
/// recentred Lie derivative uncertainty set meets the ray {0} x (-alpha, inf).
inline FeasibilityReport feasibility_check(const VectorXd& x, const QuadraticCertificate& cert,
                                           const LinearComparison& comparison,
                                           const ControlAffineModel& nominal,
                                           const Dataset& data,
                                           const SolverSettings& settings = {}) {
  const int n = data.state_dim();
  const int m = data.input_dim();
  FeasibilityReport rep;
  const BoundednessCheck bc = check_bounded(data);
  rep.bounded = bc.bounded;
  rep.witness = bc.witness;
  rep.sigma_min = bc.sigma_min;
  rep.alpha = comparison(cert.value(x));

  const LieDerivatives lie = lie_derivatives(cert, nominal, x);
  const VectorXd grad = cert.gradient(x);
  auto decide = [&rep]() {
    rep.ray_clear = rep.ray_sup <= -rep.alpha + kRayTolerance;
    rep.decision = rep.ray_clear ? RayDecision::kClear : RayDecision::kBlocked;
  };

  if (grad.isZero(0.0)) {
    // grad C'A = 0 for every A, so the slice is all of U(x) iff L_g^C = 0.
    rep.solver_status = SolverStatus::kOptimal;
    rep.ray_sup = lie.lg.isZero(0.0) ? lie.lf : -std::numeric_limits<double>::infinity();
    decide();
    return rep;
  }

  // grad C'A = -L_g^C: one row per input column k.
  SparseMatrix eq(m, n * m + n);
  std::vector<Triplet> t;
  for (int k = 0; k < m; ++k) {
    for (int j = 0; j < n; ++j) {
      if (grad(j) != 0.0) t.emplace_back(k, j + n * k, grad(j));
    }
  }
  eq.setFromTriplets(t.begin(), t.end());
  VectorXd d = VectorXd::Zero(n * m + n);
  d.tail(n) = grad;
  const SupportResult r = support_function(data, x, d, settings, eq, -lie.lg);
  rep.solver_status = r.status;
  switch (r.status) {
    case SolverStatus::kOptimal:
      rep.ray_sup = lie.lf + r.value;
      decide();
      break;
    case SolverStatus::kInfeasible:
      rep.ray_sup = -std::numeric_limits<double>::infinity();
      rep.ray_clear = true;
      rep.decision = RayDecision::kClear;
      break;
    case SolverStatus::kUnbounded:
      rep.ray_sup = std::numeric_limits<double>::infinity();
      rep.bounded = false;
      rep.ray_clear = false;
      rep.decision = RayDecision::kBlocked;
      break;
    case SolverStatus::kNumericalFailure:
      rep.decision = RayDecision::kUnknown;
      break;
  }
  return rep;
}

namespace detail {

inline nlohmann::json finite_or_string(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const FeasibilityReport& r) {
  return {{"bounded", r.bounded},
          {"witness", r.witness},
          {"sigma_min", r.sigma_min},
          {"ray_clear", r.ray_clear},
          {"decision", std::string(to_string(r.decision))},
          {"ray_sup", detail::finite_or_string(r.ray_sup)},
          {"alpha", r.alpha},
          {"solver_status", std::string(to_string(r.solver_status))}};
}

}  // namespace ccf
