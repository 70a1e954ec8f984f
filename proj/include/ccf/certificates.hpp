#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string_view>

#include "ccf/dynamics.hpp"
#include "ccf/linalg.hpp"

namespace ccf {

enum class CertificateKind { kClf, kCbf };

inline std::string_view to_string(CertificateKind k) {
  return k == CertificateKind::kClf ? "clf" : "cbf";
}

/// C(x) = x' P x - c with P symmetric positive definite. A CLF uses c = 0; a
/// CBF with c > 0 certifies invariance of the ellipse {C <= 0}.
class QuadraticCertificate {
 public:
  QuadraticCertificate(MatrixXd P, double offset, CertificateKind kind)
      : P_(std::move(P)), offset_(offset), kind_(kind) {
    if (!linalg::is_symmetric(P_, 1e-12)) {
      throw std::invalid_argument("QuadraticCertificate: P must be symmetric");
    }
    if (!(linalg::symmetric_eigenvalues(P_)(0) > 0.0)) {
      throw std::invalid_argument("QuadraticCertificate: P must be positive definite");
    }
  }

  static QuadraticCertificate clf(MatrixXd P) {
    return {std::move(P), 0.0, CertificateKind::kClf};
  }
  static QuadraticCertificate cbf(MatrixXd P, double c) {
    return {std::move(P), c, CertificateKind::kCbf};
  }

  int dim() const { return static_cast<int>(P_.rows()); }
  const MatrixXd& P() const { return P_; }
  double offset() const { return offset_; }
  CertificateKind kind() const { return kind_; }

  double value(const VectorXd& x) const {
    check(x);
    return x.dot(P_ * x) - offset_;
  }
  VectorXd gradient(const VectorXd& x) const {
    check(x);
    return 2.0 * P_ * x;
  }

 private:
  void check(const VectorXd& x) const {
    if (x.size() != P_.rows()) {
      throw std::invalid_argument("QuadraticCertificate: state dimension mismatch");
    }
  }

  MatrixXd P_;
  double offset_;
  CertificateKind kind_;
};

/// alpha(r) = slope * r.
class LinearComparison {
 public:
  explicit LinearComparison(double slope) : slope_(slope) {
    if (!(slope_ > 0.0) || !std::isfinite(slope_)) {
      throw std::invalid_argument("LinearComparison: slope must be positive and finite");
    }
  }
  double slope() const { return slope_; }
  double operator()(double r) const { return slope_ * r; }

 private:
  double slope_;
};

struct LieDerivatives {
  double lf = 0.0;
  VectorXd lg;  // length m
};

inline LieDerivatives lie_derivatives(const QuadraticCertificate& cert,
                                      const ControlAffineModel& model, const VectorXd& x) {
  if (model.state_dim() != cert.dim()) {
    throw std::invalid_argument("lie_derivatives: certificate and model dimensions differ");
  }
  const VectorXd grad = cert.gradient(x);
  return {grad.dot(model.drift(x)), model.actuation(x).transpose() * grad};
}

/// Result of matching a quadratic certificate with a linear state-feedback
/// closed loop through the Lyapunov identity A'P + PA = -Q.
struct ComparisonDerivation {
  MatrixXd Q;
  double lambda_min_Q;
  double lambda_max_P;
  LinearComparison comparison;
};

/// Decay rate lambda_min(Q) / lambda_max(P) for an arbitrary closed-loop
/// matrix. Throws if A_cl is not Hurwitz or Q is not positive definite.
inline ComparisonDerivation derive_comparison_rate_for(const MatrixXd& a_cl, const MatrixXd& P) {
  if (a_cl.rows() != P.rows() || a_cl.cols() != P.cols()) {
    throw std::invalid_argument("derive_comparison_rate: dimension mismatch");
  }
  const Eigen::VectorXcd closed_loop_eigs = a_cl.eigenvalues();
  if ((closed_loop_eigs.real().array() >= 0.0).any()) {
    throw std::invalid_argument("derive_comparison_rate: closed loop is not Hurwitz");
  }
  const VectorXd p_eigs = linalg::symmetric_eigenvalues(P);
  if (!(p_eigs(0) > 0.0)) {
    throw std::invalid_argument("derive_comparison_rate: P is not positive definite");
  }
  MatrixXd Q = -(a_cl.transpose() * P + P * a_cl);
  Q = 0.5 * (Q + Q.transpose());
  const VectorXd q_eigs = linalg::symmetric_eigenvalues(Q);
  if (!(q_eigs(0) > 0.0)) {
    throw std::invalid_argument(
        "derive_comparison_rate: Q is not positive definite (invalid certificate/gain pairing)");
  }
  const double lmax_p = p_eigs(p_eigs.size() - 1);
  return {Q, q_eigs(0), lmax_p, LinearComparison(q_eigs(0) / lmax_p)};
}

/// Comparison rate for the double integrator closed under u = -kp*theta - kd*theta_dot.
inline ComparisonDerivation derive_comparison_rate(double kp, double kd, const MatrixXd& P) {
  if (P.rows() != 2 || P.cols() != 2) {
    throw std::invalid_argument("derive_comparison_rate: gains describe a 2-state loop");
  }
  Eigen::Matrix2d a_cl;
  a_cl << 0.0, 1.0, -kp, -kd;
  return derive_comparison_rate_for(a_cl, P);
}

enum class QpStatus { kOk, kInfeasible };

struct QpResult {
  VectorXd u;
  QpStatus status = QpStatus::kOk;
};

/// Closed-form minimizer of 0.5 |u - u_d|^2 s.t. lf + lg.u <= -alpha_value.
/// When lg = 0 and the constraint fails, returns u_d with kInfeasible.
inline QpResult ccf_qp_closed_form(double lf, const VectorXd& lg, double alpha_value,
                                   const VectorXd& u_d) {
  const double violation = lf + lg.dot(u_d) + alpha_value;
  if (violation <= 0.0) return {u_d, QpStatus::kOk};
  const double lg_sq = lg.squaredNorm();
  if (lg_sq == 0.0) return {u_d, QpStatus::kInfeasible};
  return {u_d - (violation / lg_sq) * lg, QpStatus::kOk};
}

using FeedbackLaw = std::function<VectorXd(const VectorXd&)>;

inline QpResult ccf_qp(const QuadraticCertificate& cert, const LinearComparison& comparison,
                       const ControlAffineModel& model, const FeedbackLaw& k_d,
                       const VectorXd& x) {
  const LieDerivatives lie = lie_derivatives(cert, model, x);
  return ccf_qp_closed_form(lie.lf, lie.lg, comparison(cert.value(x)), k_d(x));
}

/// CCF-QP wrapped as a simulation controller that trusts `model`.
inline Controller make_ccf_qp_controller(QuadraticCertificate cert, LinearComparison comparison,
                                         ControlAffineModel model, FeedbackLaw k_d,
                                         FeedbackLaw fallback) {
  Controller c;
  c.act = [=](const VectorXd& x) {
    const QpResult r = ccf_qp(cert, comparison, model, k_d, x);
    ControlAction a;
    a.u = r.u;
    a.status = r.status == QpStatus::kOk ? StepStatus::kOk : StepStatus::kFallback;
    const LieDerivatives lie = lie_derivatives(cert, model, x);
    a.margin = -comparison(cert.value(x)) - (lie.lf + lie.lg.dot(r.u));
    return a;
  };
  c.fallback = std::move(fallback);
  return c;
}

/// Feedback linearizing law on the nominal pendulum placing the closed loop at
/// theta_ddot = -kp theta - kd theta_dot.
inline FeedbackLaw feedback_linearizing_kd(const PendulumParams& nominal, double kp, double kd) {
  nominal.validate();
  const double inertia = nominal.mass * nominal.length * nominal.length;
  const double g_over_l = nominal.gravity / nominal.length;
  return [=](const VectorXd& x) {
    VectorXd u(1);
    u(0) = inertia * (-g_over_l * std::sin(x(0)) - kp * x(0) - kd * x(1));
    return u;
  };
}

inline FeedbackLaw zero_feedback(int input_dim) {
  return [input_dim](const VectorXd&) { return VectorXd::Zero(input_dim).eval(); };
}

}  // namespace ccf
