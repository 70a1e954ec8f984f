#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pendulum_fixture.hpp"

namespace ccf {
namespace {

using testing::Pendulum;
using testing::vec2;

TEST(Assemble, SafetyProgramDimensions) {
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  ASSERT_EQ(d.size(), 462u);
  const ConicProgram p = assemble_drccf_socp(vec2(0.1, 0.1), pd.cbf, pd.comparison, pd.nominal,
                                             VectorXd::Zero(1), d);
  EXPECT_EQ(p.num_vars, 1 + 924 + 462);
  EXPECT_EQ(p.eq_matrix.rows(), 4);
  EXPECT_EQ(p.ineq_matrix.rows(), 1);
  EXPECT_EQ(p.cones.size(), 462u);
  for (const auto& k : p.cones) EXPECT_EQ(k.dim(), 3);
}

TEST(Assemble, DumpRoundTrip) {
  const Pendulum pd;
  const Dataset d = pd.grid(0.05, {-5, -1});
  const ConicProgram p = assemble_drccf_socp(vec2(0.03, -0.1), pd.cbf, pd.comparison,
                                             pd.nominal, VectorXd::Zero(1), d);
  std::stringstream s;
  write_conic_program(s, p);
  const ConicProgram q = read_conic_program(s);
  const SolverSolution a = solve_conic(p), b = solve_conic(q);
  ASSERT_EQ(a.status, b.status);
  if (a.status == SolverStatus::kOptimal) EXPECT_EQ(a.primal, b.primal);
}

TEST(RobustControl, SinglePointPinsTheInput) {
  const Pendulum pd;
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> ud(-0.3, 0.3);
  int feasible = 0, infeasible = 0;
  for (int k = 0; k < 40; ++k) {
    const VectorXd xi = vec2(ud(rng), ud(rng));
    const VectorXd x = xi + vec2(0.05 * ud(rng), 0.05 * ud(rng));
    const double ui = 20 * ud(rng);
    const Dataset d = pd.points({xi}, {ui});
    const LieDerivatives lie = lie_derivatives(pd.clf, pd.nominal, x);
    const VectorXd g = pd.clf.gradient(x);
    const double lhs = lie.lf + g.dot(d[0].residual) + lie.lg(0) * ui + d.epsilon(x, 0) * g.norm();
    const double rhs = -pd.comparison(pd.clf.value(x));
    if (std::abs(lhs - rhs) < 1e-8) continue;
    const RobustControlResult r = robust_control(x, pd.clf, pd.comparison, pd.nominal, pd.k_d, d);
    if (lhs <= rhs) {
      ++feasible;
      ASSERT_EQ(r.status, RobustStatus::kOk) << "instance " << k;
      EXPECT_NEAR(r.u(0), ui, 1e-6 * std::max(1.0, std::abs(ui)));
    } else {
      ++infeasible;
      EXPECT_EQ(r.status, RobustStatus::kInfeasible) << "instance " << k;
      EXPECT_EQ(r.u, pd.k_d(x));
    }
  }
  EXPECT_GT(feasible, 0);
  EXPECT_GT(infeasible, 0);
}

TEST(RobustControl, ZeroGradientReturnsDesiredInput) {
  const Pendulum pd;
  const VectorXd kd = VectorXd::Constant(1, 0.7);
  FeedbackLaw law = [&kd](const VectorXd&) { return kd; };
  const RobustControlResult r =
      robust_control(vec2(0, 0), pd.clf, pd.comparison, pd.nominal, law, pd.safety_sparse());
  ASSERT_EQ(r.status, RobustStatus::kOk);
  EXPECT_NEAR(r.u(0), 0.7, 1e-7);
}

TEST(RobustControl, ExactLocalDataMatchesOracle) {
  const Pendulum pd;
  for (const VectorXd& x : {vec2(0.3, -0.2), vec2(0.6, 0.2), vec2(0.8, 0.1)}) {
    const Dataset d = pd.points({x, x}, {-5, -1});
    const RobustControlResult r = robust_control(x, pd.clf, pd.comparison, pd.nominal, pd.k_d, d);
    ASSERT_EQ(r.status, RobustStatus::kOk);
    const QpResult oracle = ccf_qp(pd.clf, pd.comparison, pd.truth, pd.k_d, x);
    EXPECT_NEAR(r.u(0), oracle.u(0), 1e-6);
  }
}

// Near the origin the sparse stability data only admit large inputs and the
// robust row multiplier is about 2e6. Reference input from Clarabel.
TEST(RobustControl, LargeMultiplierProgramSolves) {
  const Pendulum pd;
  const VectorXd x = vec2(0.038669973720936217, -0.023713113202809437);
  const RobustControlResult r =
      robust_control(x, pd.clf, pd.comparison, pd.nominal, pd.k_d, pd.stability_sparse());
  ASSERT_EQ(r.status, RobustStatus::kOk);
  EXPECT_NEAR(r.u(0), 73.40813678, 1e-4);
}

// Multipliers satisfy the equality families and the robust row; the true
// system then decreases the certificate at the required rate.
TEST(RobustControl, MultipliersAndGuaranteeOnSafetyStates) {
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> th(0.0, 0.25), thd(-0.25, 0.25);
  int solved = 0;
  for (int k = 0; k < 15; ++k) {
    const VectorXd x = vec2(th(rng), thd(rng));
    const FeedbackLaw zero = zero_feedback(1);
    const RobustControlResult r = robust_control(x, pd.cbf, pd.comparison, pd.nominal, zero, d);
    if (r.status != RobustStatus::kOk) continue;
    ++solved;
    const VectorXd g = pd.cbf.gradient(x);
    VectorXd sum = VectorXd::Zero(2), sum_u = VectorXd::Zero(2);
    for (std::size_t i = 0; i < d.size(); ++i) {
      sum += r.lambda[i];
      sum_u += r.lambda[i] * d[i].u(0);
    }
    EXPECT_LE((sum + g).norm(), 1e-8 * std::max(1.0, g.norm()));
    EXPECT_LE((sum_u + g * r.u(0)).norm(), 1e-8 * std::max(1.0, g.norm() * std::abs(r.u(0))));
    const double alpha = pd.comparison(pd.cbf.value(x));
    EXPECT_LE(dual_cdot_bound(x, r.u, r.lambda, pd.cbf, pd.nominal, d), -alpha + 1e-8);
    EXPECT_GE(r.certificate_margin, -1e-8);
    EXPECT_LE(pd.true_cdot(pd.cbf, x, r.u), -alpha + 1e-6);
    const SupportResult wc = worst_case_cdot(x, r.u, pd.cbf, pd.nominal, d);
    ASSERT_EQ(wc.status, SolverStatus::kOptimal);
    EXPECT_LE(wc.value, -alpha + 1e-6);
  }
  EXPECT_GT(solved, 5);
}

TEST(Prune, SelectionRules) {
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  const VectorXd x = vec2(0.1, 0.0);
  std::vector<std::size_t> all = prune_indices(x, d, d.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  const std::vector<std::size_t> one = prune_indices(x, d, 1);
  ASSERT_EQ(one.size(), 1u);
  const VectorXd eps = d.epsilons(x);
  Eigen::Index argmin;
  eps.minCoeff(&argmin);
  EXPECT_EQ(one[0], static_cast<std::size_t>(argmin));
  // x is a grid state: both inputs there have eps = 0, ties keep dataset order.
  const std::vector<std::size_t> two = prune_indices(x, d, 2);
  EXPECT_EQ(d[two[0]].x, x);
  EXPECT_EQ(d[two[1]].x, x);
  EXPECT_LT(two[0], two[1]);
  EXPECT_THROW(prune_indices(x, d, 0), std::invalid_argument);
  EXPECT_THROW(prune_indices(x, d, d.size() + 1), std::invalid_argument);
}

TEST(Prune, PrunedWorstCaseIsARelaxation) {
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> th(0.0, 0.25), thd(-0.25, 0.25), uu(-5, 5);
  for (int k = 0; k < 10; ++k) {
    const VectorXd x = vec2(th(rng), thd(rng));
    const VectorXd u = VectorXd::Constant(1, uu(rng));
    const SupportResult full = worst_case_cdot(x, u, pd.cbf, pd.nominal, d);
    const SupportResult pruned =
        worst_case_cdot(x, u, pd.cbf, pd.nominal, prune_dataset(x, d, 40));
    ASSERT_EQ(full.status, SolverStatus::kOptimal);
    ASSERT_EQ(pruned.status, SolverStatus::kOptimal);
    EXPECT_GE(pruned.value, full.value - 1e-8 * std::max(1.0, std::abs(full.value)));
  }
}

TEST(Prune, MarginNeverGrowsWithFewerPoints) {
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  std::mt19937 rng(43);
  std::uniform_real_distribution<double> th(0.0, 0.25), thd(-0.25, 0.25);
  const FeedbackLaw zero = zero_feedback(1);
  for (int k = 0; k < 6; ++k) {
    const VectorXd x = vec2(th(rng), thd(rng));
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t K : {d.size(), std::size_t{200}, std::size_t{60}}) {
      RobustSettings rs;
      rs.prune_k = K;
      rs.exact_margin = true;
      const RobustControlResult r = robust_control(x, pd.cbf, pd.comparison, pd.nominal, zero, d, rs);
      if (r.status != RobustStatus::kOk) break;
      EXPECT_LE(r.certificate_margin, previous + 1e-8);
      previous = r.certificate_margin;
    }
  }
}

TEST(RobustControllerAdapter, MapsStatuses) {
  const Pendulum pd;
  const Dataset d = pd.points({vec2(0.1, 0.05)}, {-3});
  const Controller c = make_robust_controller(pd.clf, pd.comparison, pd.nominal, pd.k_d, d, {},
                                              zero_feedback(1));
  // A single point pins u = u_1, which does not stabilize at this state.
  const ControlAction a = c.act(vec2(0.5, 0.5));
  EXPECT_EQ(a.status, StepStatus::kInfeasible);
  EXPECT_EQ(a.u(0), 0.0);
  EXPECT_TRUE(std::isnan(a.margin));
}

}  // namespace
}  // namespace ccf
