#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "ccf/certificates.hpp"
#include "ccf/conic_program.hpp"
#include "ccf/data.hpp"
#include "ccf/socp_solver.hpp"
#include "ccf/uncertainty.hpp"

namespace ccf {

/// Column layout of the data-robust program: z = (u, lambda_1..lambda_N, nu_1..nu_N).
struct DrccfLayout {
  int n = 0;
  int m = 0;
  int N = 0;

  int num_vars() const { return m + N * n + N; }
  int u(int k) const { return k; }
  int lambda(int i, int j) const { return m + i * n + j; }
  int nu(int i) const { return m + N * n + i; }
};

/// Data-robust certificate program at x:
///
///   min 1/2 |u - k_d|^2
///   s.t. L_f^C + L_g^C u - sum_i (lambda_i'F_i - nu_i eps_i) <= -alpha(C(x))
///        sum_i lambda_i = -grad C
///        sum_i lambda_i u_i' = -grad C u'
///        |lambda_i| <= nu_i
///
/// with Lie derivatives of the nominal model. The second equality family has
/// one row per entry (j, k) of the n x m matrix, row index n + j + n k.
inline ConicProgram assemble_drccf_socp(const VectorXd& x, const QuadraticCertificate& cert,
                                        const LinearComparison& comparison,
                                        const ControlAffineModel& nominal,
                                        const VectorXd& k_d_value, const Dataset& data) {
  const DrccfLayout L{data.state_dim(), data.input_dim(), static_cast<int>(data.size())};
  if (nominal.state_dim() != L.n || nominal.input_dim() != L.m || k_d_value.size() != L.m) {
    throw std::invalid_argument("assemble_drccf_socp: dimension mismatch");
  }
  const int nv = L.num_vars();
  const LieDerivatives lie = lie_derivatives(cert, nominal, x);
  const VectorXd grad = cert.gradient(x);
  const VectorXd eps = data.epsilons(x);

  ConicProgram p(nv);
  {
    std::vector<Triplet> t;
    for (int k = 0; k < L.m; ++k) t.emplace_back(k, L.u(k), 1.0);
    p.quad_map = SparseMatrix(L.m, nv);
    p.quad_map.setFromTriplets(t.begin(), t.end());
    p.quad_target = k_d_value;
  }
  {
    std::vector<Triplet> t;
    for (int k = 0; k < L.m; ++k) {
      if (lie.lg(k) != 0.0) t.emplace_back(0, L.u(k), lie.lg(k));
    }
    for (int i = 0; i < L.N; ++i) {
      for (int j = 0; j < L.n; ++j) {
        if (data[i].residual(j) != 0.0) t.emplace_back(0, L.lambda(i, j), -data[i].residual(j));
      }
      if (eps(i) != 0.0) t.emplace_back(0, L.nu(i), eps(i));
    }
    p.ineq_matrix = SparseMatrix(1, nv);
    p.ineq_matrix.setFromTriplets(t.begin(), t.end());
    p.ineq_rhs = VectorXd::Constant(1, -comparison(cert.value(x)) - lie.lf);
  }
  {
    const int rows = L.n + L.n * L.m;
    std::vector<Triplet> t;
    VectorXd rhs = VectorXd::Zero(rows);
    for (int j = 0; j < L.n; ++j) {
      for (int i = 0; i < L.N; ++i) t.emplace_back(j, L.lambda(i, j), 1.0);
      rhs(j) = -grad(j);
    }
    for (int k = 0; k < L.m; ++k) {
      for (int j = 0; j < L.n; ++j) {
        const int row = L.n + j + L.n * k;
        for (int i = 0; i < L.N; ++i) {
          if (data[i].u(k) != 0.0) t.emplace_back(row, L.lambda(i, j), data[i].u(k));
        }
        if (grad(j) != 0.0) t.emplace_back(row, L.u(k), grad(j));
      }
    }
    p.eq_matrix = SparseMatrix(rows, nv);
    p.eq_matrix.setFromTriplets(t.begin(), t.end());
    p.eq_rhs = rhs;
  }
  p.cones.reserve(L.N);
  for (int i = 0; i < L.N; ++i) {
    SecondOrderConeBlock cone;
    std::vector<Triplet> t;
    for (int j = 0; j < L.n; ++j) t.emplace_back(j, L.lambda(i, j), 1.0);
    cone.M = SparseMatrix(L.n, nv);
    cone.M.setFromTriplets(t.begin(), t.end());
    cone.q = VectorXd::Zero(L.n);
    cone.r = Eigen::SparseVector<double>(nv);
    cone.r.coeffRef(L.nu(i)) = 1.0;
    p.cones.push_back(std::move(cone));
  }
  return p;
}

/// Indices of the K points with the smallest eps_i(x), ties broken by dataset
/// order, returned in dataset order.
inline std::vector<std::size_t> prune_indices(const VectorXd& x, const Dataset& data,
                                              std::size_t K) {
  if (K == 0 || K > data.size()) {
    throw std::invalid_argument("prune_dataset: K must lie in [1, N]");
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (K == data.size()) return idx;
  const VectorXd eps = data.epsilons(x);
  std::stable_sort(idx.begin(), idx.end(),
                   [&eps](std::size_t a, std::size_t b) { return eps(a) < eps(b); });
  idx.resize(K);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Dataset prune_dataset(const VectorXd& x, const Dataset& data, std::size_t K) {
  if (K == data.size()) return data;
  return data.subset(prune_indices(x, data, K));
}

enum class RobustStatus { kOk, kInfeasible, kFallback };

inline std::string_view to_string(RobustStatus s) {
  switch (s) {
    case RobustStatus::kOk:
      return "ok";
    case RobustStatus::kInfeasible:
      return "infeasible";
    case RobustStatus::kFallback:
      return "fallback";
  }
  return "?";
}

struct RobustSettings {
  SolverSettings solver;
  std::size_t prune_k = 0;  // 0 keeps every point
  // Report the margin against the exact worst case over U(x) (one extra solve)
  // instead of the bound implied by the returned multipliers.
  bool exact_margin = false;
};

struct RobustControlResult {
  VectorXd u;
  RobustStatus status = RobustStatus::kFallback;
  std::vector<VectorXd> lambda;            // one per point of the (pruned) dataset
  std::vector<std::size_t> point_indices;  // dataset index of each multiplier
  // -alpha(C(x)) minus the bound on the worst-case certificate derivative.
  double certificate_margin = std::numeric_limits<double>::quiet_NaN();
  SolverStatus solver_status = SolverStatus::kNumericalFailure;
  int iterations = 0;
};

/// Bound on the worst-case certificate derivative implied by multipliers:
/// L_f^C + L_g^C u - sum_i (lambda_i'F_i - |lambda_i| eps_i).
inline double dual_cdot_bound(const VectorXd& x, const VectorXd& u,
                              const std::vector<VectorXd>& lambda,
                              const QuadraticCertificate& cert, const ControlAffineModel& nominal,
                              const Dataset& data) {
  const LieDerivatives lie = lie_derivatives(cert, nominal, x);
  double v = lie.lf + lie.lg.dot(u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    v -= lambda[i].dot(data[i].residual) - lambda[i].norm() * data.epsilon(x, i);
  }
  return v;
}

/// Solves the data-robust program at x. An infeasible program yields the
/// fallback input with status kInfeasible; solver breakdown yields it with
/// status kFallback.
inline RobustControlResult robust_control(const VectorXd& x, const QuadraticCertificate& cert,
                                          const LinearComparison& comparison,
                                          const ControlAffineModel& nominal,
                                          const FeedbackLaw& k_d, const Dataset& data,
                                          const RobustSettings& settings = {},
                                          const FeedbackLaw& fallback = {}) {
  RobustControlResult out;
  const std::size_t K = settings.prune_k == 0 ? data.size() : settings.prune_k;
  out.point_indices = prune_indices(x, data, K);
  const Dataset active = K == data.size() ? data : data.subset(out.point_indices);
  const VectorXd kd_value = k_d(x);
  const ConicProgram program = assemble_drccf_socp(x, cert, comparison, nominal, kd_value, active);
  const SolverSolution sol = solve_conic(program, settings.solver);
  out.solver_status = sol.status;
  out.iterations = sol.iterations;

  auto fall_back = [&](RobustStatus status) {
    out.status = status;
    out.u = fallback ? fallback(x) : kd_value;
    out.lambda.clear();
  };
  if (sol.status == SolverStatus::kInfeasible) {
    fall_back(RobustStatus::kInfeasible);
    return out;
  }
  if (sol.status != SolverStatus::kOptimal) {
    std::string state;
    for (Eigen::Index i = 0; i < x.size(); ++i) state += (i ? ", " : "") + detail::format_double(x(i));
    spdlog::warn("robust_control: solver returned {} at x = ({})", to_string(sol.status), state);
    fall_back(RobustStatus::kFallback);
    return out;
  }

  const DrccfLayout L{active.state_dim(), active.input_dim(), static_cast<int>(active.size())};
  out.status = RobustStatus::kOk;
  out.u = sol.primal.head(L.m);
  out.lambda.resize(L.N);
  for (int i = 0; i < L.N; ++i) out.lambda[i] = sol.primal.segment(L.lambda(i, 0), L.n);

  const double alpha = comparison(cert.value(x));
  if (settings.exact_margin) {
    const SupportResult wc = worst_case_cdot(x, out.u, cert, nominal, active, settings.solver);
    out.certificate_margin = wc.status == SolverStatus::kOptimal
                                 ? -alpha - wc.value
                                 : -alpha - dual_cdot_bound(x, out.u, out.lambda, cert, nominal,
                                                            active);
  } else {
    out.certificate_margin = -alpha - dual_cdot_bound(x, out.u, out.lambda, cert, nominal, active);
  }
  return out;
}

/// The data-robust program wrapped as a simulation controller.
inline Controller make_robust_controller(QuadraticCertificate cert, LinearComparison comparison,
                                         ControlAffineModel nominal, FeedbackLaw k_d,
                                         Dataset data, RobustSettings settings,
                                         FeedbackLaw fallback) {
  Controller c;
  c.act = [=](const VectorXd& x) {
    const RobustControlResult r =
        robust_control(x, cert, comparison, nominal, k_d, data, settings, fallback);
    ControlAction a;
    a.u = r.u;
    a.margin = r.certificate_margin;
    switch (r.status) {
      case RobustStatus::kOk:
        a.status = StepStatus::kOk;
        break;
      case RobustStatus::kInfeasible:
        a.status = StepStatus::kInfeasible;
        break;
      case RobustStatus::kFallback:
        a.status = StepStatus::kFallback;
        break;
    }
    return a;
  };
  c.fallback = std::move(fallback);
  return c;
}

}  // namespace ccf
