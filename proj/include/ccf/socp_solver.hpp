#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include "ccf/conic_program.hpp"

namespace ccf {

enum class SolverStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure };

inline std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::kOptimal:
      return "optimal";
    case SolverStatus::kInfeasible:
      return "infeasible";
    case SolverStatus::kUnbounded:
      return "unbounded";
    case SolverStatus::kNumericalFailure:
      return "numerical_failure";
  }
  return "?";
}

struct SolverSettings {
  double tolerance = 1e-8;  // primal and dual residuals
  // Absolute or relative duality gap. The minimizer of a distance objective
  // moves in proportion to the gap, so this is tighter than the residuals.
  double gap_tolerance = 1e-10;
  int max_iters = 200;
  double step_fraction = 0.95;
  double static_regularization = 7e-8;
  int refinement_steps = 10;
  int equilibration_passes = 3;
  // When the iteration stalls or breaks down short of `tolerance`, the best
  // iterate is still accepted if it meets this looser level.
  double reduced_tolerance = 1e-6;
};

struct SolverSolution {
  SolverStatus status = SolverStatus::kNumericalFailure;
  VectorXd primal;      // ConicProgram variables
  VectorXd eq_duals;    // multipliers of E z = d
  VectorXd cone_duals;  // standard-form z: linear rows, then cones in order
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool reduced_accuracy = false;  // optimal only to SolverSettings::reduced_tolerance
};

/// Primal-dual interior point method for convex quadratic objectives over
/// linear/second-order cones in standard form, on the homogeneous self-dual
/// embedding so that infeasible and unbounded problems terminate with
/// certificates. The quadratic term stays in the KKT matrix, which keeps the
/// minimizer accurate to the order of the gap rather than its square root. Search directions use
/// Nesterov-Todd scaling and a Mehrotra predictor-corrector; the KKT system
/// is factored by a sparse LDL' with static regularization and iterative
/// refinement. Each instance owns its workspace.
class SocpSolver {
 public:
  explicit SocpSolver(StandardConicForm form, SolverSettings settings = {})
      : f_(std::move(form)), settings_(settings) {
    nx_ = static_cast<int>(f_.c.size());
    ny_ = static_cast<int>(f_.A.rows());
    nz_ = static_cast<int>(f_.G.rows());
    if (f_.P.rows() == 0 && f_.P.cols() == 0) f_.P = SparseMatrix(nx_, nx_);
    if (f_.G.cols() != nx_ || f_.A.cols() != nx_ || f_.b.size() != ny_ || f_.h.size() != nz_ ||
        f_.P.rows() != nx_ || f_.P.cols() != nx_) {
      throw std::invalid_argument("SocpSolver: inconsistent standard form dimensions");
    }
    int total = f_.num_linear;
    for (int d : f_.soc_dims) {
      if (d < 2) throw std::invalid_argument("SocpSolver: second-order cones need dim >= 2");
      cone_start_.push_back(total);
      total += d;
    }
    if (total != nz_) throw std::invalid_argument("SocpSolver: cone dimensions do not sum up");
    degree_ = f_.num_linear + static_cast<int>(f_.soc_dims.size());
  }

  SolverSolution solve() {
    equilibrate();
    build_kkt_pattern();
    SolverSolution out = run();
    return out;
  }

 private:
  struct SocScaling {
    double eta = 1.0;
    double a = 1.0;
    VectorXd q;
  };

  // ---- cone algebra ------------------------------------------------------

  // lambda = W z
  VectorXd scale(const VectorXd& z) const {
    VectorXd out(nz_);
    const int l = f_.num_linear;
    out.head(l) = lp_w_.cwiseProduct(z.head(l));
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = cone_start_[k];
      const int d = f_.soc_dims[k];
      const SocScaling& w = soc_w_[k];
      const auto z1 = z.segment(st + 1, d - 1);
      const double zeta = w.q.dot(z1);
      const double factor = z(st) + zeta / (1.0 + w.a);
      out(st) = w.eta * (w.a * z(st) + zeta);
      out.segment(st + 1, d - 1) = w.eta * (z1 + factor * w.q);
    }
    return out;
  }

  // u o v
  VectorXd cone_product(const VectorXd& u, const VectorXd& v) const {
    VectorXd w(nz_);
    const int l = f_.num_linear;
    w.head(l) = u.head(l).cwiseProduct(v.head(l));
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = cone_start_[k];
      const int d = f_.soc_dims[k];
      w(st) = u.segment(st, d).dot(v.segment(st, d));
      w.segment(st + 1, d - 1) =
          u(st) * v.segment(st + 1, d - 1) + v(st) * u.segment(st + 1, d - 1);
    }
    return w;
  }

  // v such that u o v = w
  VectorXd cone_division(const VectorXd& u, const VectorXd& w) const {
    VectorXd v(nz_);
    const int l = f_.num_linear;
    v.head(l) = w.head(l).cwiseQuotient(u.head(l));
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = cone_start_[k];
      const int d = f_.soc_dims[k];
      const auto u1 = u.segment(st + 1, d - 1);
      const auto w1 = w.segment(st + 1, d - 1);
      const double rho = u(st) * u(st) - u1.squaredNorm();
      const double zeta = u1.dot(w1);
      const double v0 = (u(st) * w(st) - zeta) / rho;
      v(st) = v0;
      v.segment(st + 1, d - 1) = (w1 - v0 * u1) / u(st);
    }
    return v;
  }

  // s = r + (1 + alpha) e, alpha the largest cone violation of r.
  VectorXd bring_to_cone(const VectorXd& r) const {
    double alpha = -0.99;
    const int l = f_.num_linear;
    for (int i = 0; i < l; ++i) {
      if (r(i) <= 0.0 && -r(i) > alpha) alpha = -r(i);
    }
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = cone_start_[k];
      const double cres = r(st) - r.segment(st + 1, f_.soc_dims[k] - 1).norm();
      if (cres <= 0.0 && -cres > alpha) alpha = -cres;
    }
    alpha += 1.0;
    VectorXd s = r;
    s.head(l).array() += alpha;
    for (int st : cone_start_) s(st) += alpha;
    return s;
  }

  bool update_scalings(const VectorXd& s, const VectorXd& z) {
    const int l = f_.num_linear;
    if ((s.head(l).array() <= 0.0).any() || (z.head(l).array() <= 0.0).any()) return false;
    lp_v_ = s.head(l).cwiseQuotient(z.head(l));
    lp_w_ = lp_v_.cwiseSqrt();
    soc_w_.resize(f_.soc_dims.size());
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = cone_start_[k];
      const int d = f_.soc_dims[k];
      const double sres = s(st) * s(st) - s.segment(st + 1, d - 1).squaredNorm();
      const double zres = z(st) * z(st) - z.segment(st + 1, d - 1).squaredNorm();
      if (sres <= 0.0 || zres <= 0.0 || s(st) <= 0.0 || z(st) <= 0.0) return false;
      const double snorm = std::sqrt(sres);
      const double znorm = std::sqrt(zres);
      const VectorXd sbar = s.segment(st, d) / snorm;
      const VectorXd zbar = z.segment(st, d) / znorm;
      const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
      SocScaling& w = soc_w_[k];
      w.eta = std::sqrt(snorm / znorm);
      w.a = (0.5 / gamma) * (sbar(0) + zbar(0));
      w.q = (0.5 / gamma) * (sbar.tail(d - 1) - zbar.tail(d - 1));
    }
    return true;
  }

  // Largest step t with lambda + t*d still in the cone (positive orthant /
  // Lorentz cones); infinity when unconstrained.
  double max_step(const VectorXd& lam, const VectorXd& d) const {
    double alpha = std::numeric_limits<double>::infinity();
    const int l = f_.num_linear;
    for (int i = 0; i < l; ++i) {
      if (d(i) < 0.0) alpha = std::min(alpha, -lam(i) / d(i));
    }
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = cone_start_[k];
      const int dim = f_.soc_dims[k];
      const double lk2 = lam(st) * lam(st) - lam.segment(st + 1, dim - 1).squaredNorm();
      if (lk2 <= 0.0) return 0.0;
      const double lknorm = std::sqrt(lk2);
      const VectorXd lbar = lam.segment(st, dim) / lknorm;
      const double rho0 =
          (lbar(0) * d(st) - lbar.tail(dim - 1).dot(d.segment(st + 1, dim - 1))) / lknorm;
      const double factor = (rho0 + d(st) / lknorm) / (lbar(0) + 1.0);
      const VectorXd rho1 = d.segment(st + 1, dim - 1) / lknorm - factor * lbar.tail(dim - 1);
      const double sigma = rho1.norm() - rho0;
      if (sigma > 0.0) alpha = std::min(alpha, 1.0 / sigma);
    }
    return alpha;
  }

  // ---- KKT system ----------------------------------------------------------
  //
  //   [ P + delta I   A'         G'              ]
  //   [ A        -delta I    0               ]
  //   [ G         0         -(W'W) - delta I ]

  void build_kkt_pattern() {
    const int n = nx_ + ny_ + nz_;
    std::vector<Triplet> t;
    t.reserve(nx_ + ny_ + nz_ + Ahat_.nonZeros() + Ghat_.nonZeros() + 4 * nz_);
    for (int i = 0; i < nx_; ++i) t.emplace_back(i, i, 0.0);
    for (int k = 0; k < Phat_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(Phat_, k); it; ++it) {
        if (it.row() > it.col()) t.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int i = 0; i < ny_ + nz_; ++i) t.emplace_back(nx_ + i, nx_ + i, 0.0);
    for (int k = 0; k < Ahat_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(Ahat_, k); it; ++it) {
        t.emplace_back(nx_ + it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < Ghat_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(Ghat_, k); it; ++it) {
        t.emplace_back(nx_ + ny_ + it.row(), it.col(), it.value());
      }
    }
    const int zoff = nx_ + ny_;
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = zoff + cone_start_[k];
      const int d = f_.soc_dims[k];
      for (int c = 0; c < d; ++c) {
        for (int r = c + 1; r < d; ++r) t.emplace_back(st + r, st + c, 0.0);
      }
    }
    kkt_ = SparseMatrix(n, n);
    kkt_.setFromTriplets(t.begin(), t.end());
    kkt_.makeCompressed();
    ldlt_.analyzePattern(kkt_);
  }

  double& kkt_entry(int r, int c) { return kkt_.coeffRef(std::max(r, c), std::min(r, c)); }

  // Fills the scaling block with -(W'W) (or -I at initialization).
  void fill_kkt(bool identity_scaling) {
    const double delta = settings_.static_regularization;
    for (int i = 0; i < nx_; ++i) kkt_entry(i, i) = p_diag_(i) + delta;
    for (int i = 0; i < ny_; ++i) kkt_entry(nx_ + i, nx_ + i) = -delta;
    const int zoff = nx_ + ny_;
    for (int i = 0; i < f_.num_linear; ++i) {
      kkt_entry(zoff + i, zoff + i) = -(identity_scaling ? 1.0 : lp_v_(i)) - delta;
    }
    for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
      const int st = zoff + cone_start_[k];
      const int d = f_.soc_dims[k];
      MatrixXd v = MatrixXd::Identity(d, d);
      if (!identity_scaling) {
        const SocScaling& w = soc_w_[k];
        MatrixXd W(d, d);
        W(0, 0) = w.a;
        W.block(0, 1, 1, d - 1) = w.q.transpose();
        W.block(1, 0, d - 1, 1) = w.q;
        W.block(1, 1, d - 1, d - 1) =
            MatrixXd::Identity(d - 1, d - 1) + w.q * w.q.transpose() / (1.0 + w.a);
        v = (w.eta * w.eta) * (W * W);
      }
      for (int c = 0; c < d; ++c) {
        for (int r = c; r < d; ++r) kkt_entry(st + r, st + c) = -v(r, c) - (r == c ? delta : 0.0);
      }
    }
  }

  bool factorize() {
    ldlt_.factorize(kkt_);
    return ldlt_.info() == Eigen::Success;
  }

  // Product with the unregularized KKT operator.
  VectorXd apply_kkt(const VectorXd& v, bool identity_scaling) const {
    VectorXd out(v.size());
    const auto x = v.head(nx_);
    const auto y = v.segment(nx_, ny_);
    const auto z = v.tail(nz_);
    out.head(nx_) = Phat_ * x + At_ * y + Gt_ * z;
    out.segment(nx_, ny_) = Ahat_ * x;
    out.tail(nz_) = Ghat_ * x - (identity_scaling ? VectorXd(z) : scale(scale(z)));
    return out;
  }

  void solve_kkt(const VectorXd& rhs, bool identity_scaling, VectorXd& dx, VectorXd& dy,
                 VectorXd& dz) const {
    VectorXd sol = ldlt_.solve(rhs);
    const double rhs_norm = rhs.lpNorm<Eigen::Infinity>();
    double err_prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < settings_.refinement_steps; ++it) {
      const VectorXd e = rhs - apply_kkt(sol, identity_scaling);
      const double err = e.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(err) || err <= 1e-14 * (1.0 + rhs_norm) || err > 0.5 * err_prev) break;
      sol += ldlt_.solve(e);
      err_prev = err;
    }
    dx = sol.head(nx_);
    dy = sol.segment(nx_, ny_);
    dz = sol.tail(nz_);
  }

  // ---- equilibration -------------------------------------------------------

  void equilibrate() {
    Ahat_ = f_.A;
    Ghat_ = f_.G;
    Phat_ = f_.P;
    x_equil_ = VectorXd::Ones(nx_);
    a_equil_ = VectorXd::Ones(ny_);
    g_equil_ = VectorXd::Ones(nz_);
    for (int pass = 0; pass < settings_.equilibration_passes; ++pass) {
      VectorXd col = VectorXd::Zero(nx_);
      VectorXd arow = VectorXd::Zero(ny_);
      VectorXd grow = VectorXd::Zero(nz_);
      for (int k = 0; k < Ahat_.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(Ahat_, k); it; ++it) {
          const double v = std::abs(it.value());
          col(it.col()) = std::max(col(it.col()), v);
          arow(it.row()) = std::max(arow(it.row()), v);
        }
      }
      for (int k = 0; k < Ghat_.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(Ghat_, k); it; ++it) {
          const double v = std::abs(it.value());
          col(it.col()) = std::max(col(it.col()), v);
          grow(it.row()) = std::max(grow(it.row()), v);
        }
      }
      for (int k = 0; k < Phat_.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(Phat_, k); it; ++it) {
          col(it.col()) = std::max(col(it.col()), std::abs(it.value()));
        }
      }
      // One factor per cone keeps the cone invariant.
      for (std::size_t k = 0; k < f_.soc_dims.size(); ++k) {
        auto seg = grow.segment(cone_start_[k], f_.soc_dims[k]);
        seg.setConstant(seg.sum());
      }
      auto root = [](VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
          v(i) = std::abs(v(i)) < 1e-6 ? 1.0 : std::sqrt(v(i));
        }
      };
      root(col);
      root(arow);
      root(grow);
      auto rescale = [&](SparseMatrix& m, const VectorXd& rows) {
        for (int k = 0; k < m.outerSize(); ++k) {
          for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
            it.valueRef() /= rows(it.row()) * col(it.col());
          }
        }
      };
      rescale(Ahat_, arow);
      rescale(Ghat_, grow);
      rescale(Phat_, col);
      x_equil_ = x_equil_.cwiseProduct(col);
      a_equil_ = a_equil_.cwiseProduct(arow);
      g_equil_ = g_equil_.cwiseProduct(grow);
    }
    chat_ = f_.c.cwiseQuotient(x_equil_);
    bhat_ = f_.b.cwiseQuotient(a_equil_);
    hhat_ = f_.h.cwiseQuotient(g_equil_);
    p_diag_ = Phat_.diagonal();
    At_ = Ahat_.transpose();
    Gt_ = Ghat_.transpose();
  }

  // ---- main loop -------------------------------------------------------------

  SolverSolution run() {
    const double feastol = settings_.tolerance;
    const double abstol = settings_.gap_tolerance;
    const double reltol = settings_.gap_tolerance;
    SolverSolution out;

    const int n = nx_ + ny_ + nz_;
    VectorXd rhs1 = VectorXd::Zero(n);
    VectorXd rhs2 = VectorXd::Zero(n);
    VectorXd dx1, dy1, dz1, dx2, dy2, dz2;

    fill_kkt(true);
    if (!factorize()) return out;

    // Initial primal point: min |G x - h| s.t. A x = b.
    rhs1.segment(nx_, ny_) = bhat_;
    rhs1.tail(nz_) = hhat_;
    solve_kkt(rhs1, true, dx1, dy1, dz1);
    VectorXd x = dx1;
    VectorXd s = bring_to_cone(-dz1);
    // Initial dual point: min |z| s.t. A'y + G'z + c = 0.
    rhs2.head(nx_) = -chat_;
    solve_kkt(rhs2, true, dx2, dy2, dz2);
    VectorXd y = dy2;
    VectorXd z = bring_to_cone(dz2);
    double tau = 1.0;
    double kap = 1.0;

    rhs1.head(nx_) = -chat_;
    const double resx0 = std::max(1.0, chat_.norm());
    const double resy0 = std::max(1.0, bhat_.norm());
    const double resz0 = std::max(1.0, hhat_.norm());

    const VectorXd e = unit_cone_element();
    VectorXd lambda(nz_);
    SolverStatus status = SolverStatus::kNumericalFailure;
    int iter = 0;
    double pres = 0, dres = 0, gap = 0;

    struct Iterate {
      VectorXd x, y, z;
      double tau = 1.0;
      double pres = 0, dres = 0, gap = 0;
      double score = std::numeric_limits<double>::infinity();  // worst of residuals and gap
    } best;

    for (iter = 0; iter <= settings_.max_iters; ++iter) {
      // Residuals of the embedding.
      const VectorXd hrx = -(At_ * y) - Gt_ * z;
      const VectorXd hry = Ahat_ * x;
      const VectorXd hrz = s + Ghat_ * x;
      const VectorXd px = Phat_ * x;
      const double xpx = x.dot(px);
      const VectorXd rx = hrx - px - tau * chat_;
      const VectorXd ry = hry - tau * bhat_;
      const VectorXd rz = hrz - tau * hhat_;
      const double cx = chat_.dot(x);
      const double by = ny_ > 0 ? bhat_.dot(y) : 0.0;
      const double hz = hhat_.dot(z);
      const double rt = kap + cx + by + hz + xpx / tau;
      const double nxn = x.norm(), nyn = y.norm(), nzn = z.norm(), nsn = s.norm();

      const double sz = s.dot(z);
      const double mu = (sz + kap * tau) / (degree_ + 1);
      gap = sz / (tau * tau);
      const double pcost = cx / tau + 0.5 * xpx / (tau * tau);
      const double dcost = -(hz + by) / tau - 0.5 * xpx / (tau * tau);
      double relgap = std::numeric_limits<double>::infinity();
      if (pcost < 0.0) {
        relgap = gap / -pcost;
      } else if (dcost > 0.0) {
        relgap = gap / dcost;
      }
      // Residuals relative to the size of the recovered iterate x/tau etc.
      const double nry = ny_ > 0 ? ry.norm() / std::max(resy0 * tau + nxn, tau) : 0.0;
      const double nrz = rz.norm() / std::max(resz0 * tau + nxn + nsn, tau);
      pres = std::max(nry, nrz);
      dres = rx.norm() / std::max(resx0 * tau + nyn + nzn, tau);

      double pinfres = std::numeric_limits<double>::infinity();
      double dinfres = std::numeric_limits<double>::infinity();
      if ((hz + by) / std::max(nyn + nzn, 1.0) < -feastol) {
        pinfres = hrx.norm() / std::max(nyn + nzn, 1.0);
      }
      // A descent ray must also be flat in the quadratic. Px is judged against
      // the descent c'x, since x may be dominated by blocks that P ignores.
      if (cx / std::max(nxn, 1.0) < -feastol) {
        dinfres = std::max({hry.norm() / std::max(nxn, 1.0),
                            hrz.norm() / std::max(nxn + nsn, 1.0), px.norm() / -cx});
      }

      if (pres < feastol && dres < feastol && (gap < abstol || relgap < reltol)) {
        status = SolverStatus::kOptimal;
        break;
      }
      spdlog::trace("socp iter {} pres {:.3e} dres {:.3e} gap {:.3e} relgap {:.3e} tau {:.3e} kap {:.3e}",
                    iter, pres, dres, gap, relgap, tau, kap);
      const double score = std::max({pres, dres, std::min(gap, relgap)});
      if (score < best.score) best = {x, y, z, tau, pres, dres, gap, score};
      if (dinfres < feastol && tau < kap) {
        status = SolverStatus::kUnbounded;
        break;
      }
      if ((pinfres < feastol && tau < kap) ||
          (tau < feastol && kap < feastol && pinfres < feastol)) {
        status = SolverStatus::kInfeasible;
        break;
      }
      if (iter == settings_.max_iters) break;

      if (!update_scalings(s, z)) break;
      lambda = scale(z);
      fill_kkt(false);
      if (!factorize()) break;

      solve_kkt(rhs1, false, dx1, dy1, dz1);

      // Predictor.
      rhs2.head(nx_) = rx;
      rhs2.segment(nx_, ny_) = -ry;
      rhs2.tail(nz_) = s - rz;
      solve_kkt(rhs2, false, dx2, dy2, dz2);

      // The tau row linearizes x'Px/tau, so c picks up 2Px/tau.
      const VectorXd ctil = chat_ + (2.0 / tau) * px;
      const double dtau_denom = kap / tau + xpx / (tau * tau) - ctil.dot(dx1) -
                                (ny_ > 0 ? bhat_.dot(dy1) : 0.0) - hhat_.dot(dz1);
      const double dtau_aff = (rt - kap + ctil.dot(dx2) + (ny_ > 0 ? bhat_.dot(dy2) : 0.0) +
                               hhat_.dot(dz2)) /
                              dtau_denom;
      const VectorXd dz_aff = dz2 + dtau_aff * dz1;
      const VectorXd w_dz_aff = scale(dz_aff);
      const VectorXd ds_aff_by_w = -w_dz_aff - lambda;
      const double dkap_aff = -kap - kap / tau * dtau_aff;
      const double step_aff =
          line_search(lambda, ds_aff_by_w, w_dz_aff, tau, dtau_aff, kap, dkap_aff);
      const double sigma = std::clamp(std::pow(1.0 - step_aff, 3), 1e-4, 1.0);

      // Corrector.
      VectorXd ds_comb = cone_product(lambda, lambda) + cone_product(ds_aff_by_w, w_dz_aff) -
                         sigma * mu * e;
      const VectorXd lam_div = cone_division(lambda, ds_comb);
      rhs2.head(nx_) = (1.0 - sigma) * rx;
      rhs2.segment(nx_, ny_) = -(1.0 - sigma) * ry;
      rhs2.tail(nz_) = -(1.0 - sigma) * rz + scale(lam_div);
      solve_kkt(rhs2, false, dx2, dy2, dz2);

      const double bkap = kap * tau + dkap_aff * dtau_aff - sigma * mu;
      const double dtau = ((1.0 - sigma) * rt - bkap / tau + ctil.dot(dx2) +
                           (ny_ > 0 ? bhat_.dot(dy2) : 0.0) + hhat_.dot(dz2)) /
                          dtau_denom;
      const VectorXd dx = dx2 + dtau * dx1;
      const VectorXd dy = dy2 + dtau * dy1;
      const VectorXd dz = dz2 + dtau * dz1;
      const VectorXd w_dz = scale(dz);
      const VectorXd ds_by_w = -lam_div - w_dz;
      const double dkap = -(bkap + kap * dtau) / tau;

      const double step =
          settings_.step_fraction * line_search(lambda, ds_by_w, w_dz, tau, dtau, kap, dkap);
      if (!(step > 1e-10)) break;

      x += step * dx;
      y += step * dy;
      z += step * dz;
      s += step * scale(ds_by_w);
      kap += step * dkap;
      tau += step * dtau;
      if (!x.allFinite() || !z.allFinite() || !s.allFinite() || !(tau > 0.0) || !(kap > 0.0)) {
        break;
      }
    }

    if (status == SolverStatus::kNumericalFailure &&
        best.score < settings_.reduced_tolerance) {
      status = SolverStatus::kOptimal;
      out.reduced_accuracy = true;
      x = best.x;
      y = best.y;
      z = best.z;
      tau = best.tau;
      pres = best.pres;
      dres = best.dres;
      gap = best.gap;
    }
    out.status = status;
    out.iterations = iter;
    out.primal_residual = pres;
    out.dual_residual = dres;
    out.gap = gap;

    VectorXd x_out = x;
    VectorXd y_out = y;
    VectorXd z_out = z;
    if (status == SolverStatus::kInfeasible) {
      const double denom = -(hhat_.dot(z) + (ny_ > 0 ? bhat_.dot(y) : 0.0));
      y_out /= denom;
      z_out /= denom;
      x_out.setConstant(std::numeric_limits<double>::quiet_NaN());
    } else if (status == SolverStatus::kUnbounded) {
      x_out /= -chat_.dot(x);
      y_out.setConstant(std::numeric_limits<double>::quiet_NaN());
      z_out.setConstant(std::numeric_limits<double>::quiet_NaN());
    } else {
      x_out /= tau;
      y_out /= tau;
      z_out /= tau;
    }
    // Undo equilibration.
    x_out = x_out.cwiseQuotient(x_equil_);
    y_out = y_out.cwiseQuotient(a_equil_);
    z_out = z_out.cwiseQuotient(g_equil_);
    out.primal = x_out;
    out.eq_duals = y_out;
    out.cone_duals = z_out;
    return out;
  }

  double line_search(const VectorXd& lambda, const VectorXd& ds, const VectorXd& dz, double tau,
                     double dtau, double kap, double dkap) const {
    double alpha = std::min(max_step(lambda, ds), max_step(lambda, dz));
    if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
    if (dkap < 0.0) alpha = std::min(alpha, -kap / dkap);
    return std::min(alpha, 1.0);
  }

  VectorXd unit_cone_element() const {
    VectorXd e = VectorXd::Zero(nz_);
    e.head(f_.num_linear).setOnes();
    for (int st : cone_start_) e(st) = 1.0;
    return e;
  }

  StandardConicForm f_;
  SolverSettings settings_;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  int degree_ = 0;
  std::vector<int> cone_start_;

  SparseMatrix Ahat_, Ghat_, Phat_, At_, Gt_;
  VectorXd p_diag_;
  VectorXd chat_, bhat_, hhat_;
  VectorXd x_equil_, a_equil_, g_equil_;

  VectorXd lp_v_, lp_w_;
  std::vector<SocScaling> soc_w_;

  SparseMatrix kkt_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

/// Solves a ConicProgram. On kOptimal the primal is the minimizer and
/// objective_value the exact objective at it; on kUnbounded the primal is a
/// normalized recession direction with c'z = -1.
inline SolverSolution solve_conic(const ConicProgram& program, const SolverSettings& settings = {}) {
  SocpSolver solver(to_standard_form(program), settings);
  SolverSolution sol = solver.solve();
  if (sol.status == SolverStatus::kOptimal) {
    sol.objective_value = program.objective(sol.primal);
  } else if (sol.status == SolverStatus::kInfeasible) {
    sol.objective_value = std::numeric_limits<double>::infinity();
  } else if (sol.status == SolverStatus::kUnbounded) {
    sol.objective_value = -std::numeric_limits<double>::infinity();
  }
  return sol;
}

}  // namespace ccf
