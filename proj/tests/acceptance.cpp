// Acceptance checks for the library and the two pendulum experiments. Prints
// one PASS/FAIL line per criterion and exits nonzero if any criterion fails.
// Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <spdlog/cfg/env.h>
#include <spdlog/spdlog.h>

#include "pendulum_fixture.hpp"

namespace {

using namespace ccf;
using ccf::testing::Pendulum;
using ccf::testing::vec2;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

ExperimentResult run_config(const char* name) {
  ExperimentConfig cfg = parse_config(fs::path(CCF_SOURCE_DIR) / "configs" / name);
  cfg.output_dir = (fs::path("acceptance_out") / fs::path(name).stem()).string();
  return run_experiment(cfg);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
    d = std::max(d, std::abs(a[k] - b[k]));
  }
  return a.size() == b.size() ? d : std::numeric_limits<double>::infinity();
}

const ControllerSummary& summary_of(const ExperimentResult& r, const std::string& name) {
  const ControllerSummary* s = r.summary.find(name);
  if (!s) throw std::runtime_error("missing controller " + name);
  return *s;
}

Outcome criterion_safety() {
  Outcome o;
  const ExperimentResult r = run_config("safety.json");
  o.check(!r.summary.any_errored(), "a controller errored");
  if (r.summary.any_errored()) return o;
  const auto& nominal = summary_of(r, "nominal");
  o.check(nominal.max_certificate > kSafetyTolerance, "nominal never left the safe set");
  o.note("nominal max h " + fmt(nominal.max_certificate));
  for (const char* name : {"oracle", "robust_sparse", "robust_dense"}) {
    const auto& s = summary_of(r, name);
    o.check(s.violation_steps == 0, std::string(name) + " has h > 1e-3");
    o.check(s.infeasible_events == 0 && s.fallback_events == 0,
            std::string(name) + " recorded infeasible/fallback events");
    o.note(std::string(name) + " max h " + fmt(s.max_certificate));
  }
  o.check(summary_of(r, "robust_sparse").dataset_size == 462, "sparse N != 462");
  o.check(summary_of(r, "robust_dense").dataset_size == 1386, "dense N != 1386");
  const double diff = max_abs_diff(r.trajectories.at("robust_sparse").certificate_values,
                                   r.trajectories.at("robust_dense").certificate_values);
  o.check(diff <= 0.05, "sparse/dense h-traces differ by more than 0.05");
  o.note("sparse/dense max |dh| " + fmt(diff));
  return o;
}

Outcome criterion_stability() {
  Outcome o;
  const ExperimentResult r = run_config("stability.json");
  o.check(!r.summary.any_errored(), "a controller errored");
  if (r.summary.any_errored()) return o;
  for (const char* name : {"oracle", "robust_sparse"}) {
    const auto& s = summary_of(r, name);
    o.check(s.final_certificate <= kConvergedThreshold,
            std::string(name) + " V(10) = " + fmt(s.final_certificate) + " > 1e-2");
    o.check(s.infeasible_events == 0 && s.fallback_events == 0,
            std::string(name) + " recorded " + std::to_string(s.infeasible_events) +
                " infeasible and " + std::to_string(s.fallback_events) + " fallback events");
    o.note(std::string(name) + " V(10) " + fmt(s.final_certificate));
  }
  const auto& sparse = summary_of(r, "robust_sparse");
  o.check(sparse.dataset_size == 1722 && sparse.prune_k == 0, "sparse set must be N = 1722 unpruned");
  const auto& nominal = summary_of(r, "nominal");
  o.check(nominal.violation_steps >= 1, "nominal shows no decay violation");
  o.note("nominal decay violations " + std::to_string(nominal.violation_steps));
  const double diff = max_abs_diff(r.trajectories.at("robust_sparse").certificate_values,
                                   r.trajectories.at("robust_dense").certificate_values);
  o.check(diff <= 0.05, "sparse/dense V-traces differ by more than 0.05");
  o.note("sparse/dense max |dV| " + fmt(diff));
  return o;
}

Outcome criterion_duality() {
  Outcome o;
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  const FeedbackLaw zero = zero_feedback(1);
  std::mt19937 rng(103);
  std::uniform_real_distribution<double> th(0.0, 0.25), thd(-0.25, 0.25);
  int ok = 0, bad = 0, other = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    const VectorXd x = vec2(th(rng), thd(rng));
    const RobustControlResult r = robust_control(x, pd.cbf, pd.comparison, pd.nominal, zero, d);
    if (r.status != RobustStatus::kOk) {
      ++other;
      continue;
    }
    ++ok;
    const SupportResult wc = worst_case_cdot(x, r.u, pd.cbf, pd.nominal, d);
    const double excess = wc.value + pd.comparison(pd.cbf.value(x));
    worst = std::max(worst, excess);
    if (wc.status != SolverStatus::kOptimal || !(excess <= 1e-6)) ++bad;
  }
  o.check(bad == 0, std::to_string(bad) + " states exceed -alpha + 1e-6");
  o.check(ok > 0, "no state solved");
  o.note(std::to_string(ok) + " ok, " + std::to_string(other) + " not ok, max excess " + fmt(worst));
  return o;
}

Outcome criterion_brute_force() {
  Outcome o;
  const Pendulum pd;
  std::mt19937 rng(104);
  std::uniform_real_distribution<double> center(-0.5, 0.5), offset(-0.08, 0.08), input(-5, 5);
  int instances = 0, feasible = 0, disagreements = 0;
  double worst_gap = 0.0;
  while (instances < 20) {
    const VectorXd x = vec2(center(rng), center(rng));
    const int N = 2 + instances % 2;
    std::vector<VectorXd> xs;
    std::vector<double> us;
    for (int i = 0; i < N; ++i) {
      xs.push_back(x + vec2(offset(rng), offset(rng)));
      us.push_back(input(rng));
    }
    const Dataset d = pd.points(xs, us);
    if (!check_bounded(d).bounded) continue;
    ++instances;

    const double alpha = pd.comparison(pd.clf.value(x));
    const double kd = pd.k_d(x)(0);
    bool grid_feasible = false;
    double best = 0.0;
    for (int j = 0; j <= 40000; ++j) {
      const double u = -20.0 + 1e-3 * j;
      const SupportResult wc = worst_case_cdot(x, VectorXd::Constant(1, u), pd.clf, pd.nominal, d);
      if (wc.status != SolverStatus::kOptimal || !(wc.value <= -alpha)) continue;
      if (!grid_feasible || std::abs(u - kd) < std::abs(best - kd)) best = u;
      grid_feasible = true;
    }
    const RobustControlResult r = robust_control(x, pd.clf, pd.comparison, pd.nominal, pd.k_d, d);
    const bool socp_feasible = r.status == RobustStatus::kOk;
    if (r.status == RobustStatus::kFallback || socp_feasible != grid_feasible) {
      ++disagreements;
      continue;
    }
    if (socp_feasible) {
      ++feasible;
      const double gap = std::abs(r.u(0) - best);
      worst_gap = std::max(worst_gap, gap);
      if (gap > 5e-3) ++disagreements;
    }
  }
  o.check(disagreements == 0, std::to_string(disagreements) + " instances disagree");
  o.note(std::to_string(feasible) + " of 20 feasible, max |u_socp - u_grid| " + fmt(worst_gap));
  return o;
}

Outcome criterion_single_point() {
  Outcome o;
  const Pendulum pd;
  std::mt19937 rng(105);
  std::uniform_real_distribution<double> center(-0.6, 0.6), offset(-0.1, 0.1), input(-10, 10);
  int disagreements = 0, in_band = 0, feasible = 0, instances = 0;
  while (instances < 100) {
    const VectorXd xi = vec2(center(rng), center(rng));
    const VectorXd x = xi + vec2(offset(rng), offset(rng));
    const double ui = input(rng);
    const Dataset d = pd.points({xi}, {ui});
    const VectorXd g = pd.clf.gradient(x);
    if (g.norm() == 0.0) continue;
    ++instances;
    const LieDerivatives lie = lie_derivatives(pd.clf, pd.nominal, x);
    const double lhs = lie.lf + g.dot(d[0].residual) + lie.lg(0) * ui + d.epsilon(x, 0) * g.norm();
    const double rhs = -pd.comparison(pd.clf.value(x));
    const RobustControlResult r = robust_control(x, pd.clf, pd.comparison, pd.nominal, pd.k_d, d);
    if (std::abs(lhs - rhs) <= 1e-8) {
      ++in_band;
      continue;
    }
    const bool expect_feasible = lhs < rhs;
    if (expect_feasible) {
      ++feasible;
      if (r.status != RobustStatus::kOk || std::abs(r.u(0) - ui) > 1e-6 * std::max(1.0, std::abs(ui))) {
        ++disagreements;
      }
    } else if (r.status != RobustStatus::kInfeasible) {
      ++disagreements;
    }
  }
  o.check(disagreements == 0, std::to_string(disagreements) + " disagreements");
  o.note(std::to_string(feasible) + " feasible, " + std::to_string(100 - feasible - in_band) +
         " infeasible, " + std::to_string(in_band) + " in the boundary band");
  return o;
}

Outcome criterion_feasibility_decision() {
  Outcome o;
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  const FeedbackLaw zero = zero_feedback(1);
  std::mt19937 rng(106);
  std::uniform_real_distribution<double> th(0.0, 0.25), thd(-0.25, 0.25);
  int clear = 0, blocked = 0, disagreements = 0, band = 0;
  for (int k = 0; k < 200; ++k) {
    const VectorXd x = vec2(th(rng), thd(rng));
    const FeasibilityReport rep = feasibility_check(x, pd.cbf, pd.comparison, pd.nominal, d);
    const RobustControlResult r = robust_control(x, pd.cbf, pd.comparison, pd.nominal, zero, d);
    (rep.ray_clear ? clear : blocked)++;
    const bool solvable = r.status == RobustStatus::kOk;
    if (rep.decision == RayDecision::kUnknown || r.status == RobustStatus::kFallback ||
        solvable != rep.ray_clear) {
      if (std::abs(rep.ray_sup + rep.alpha) < 1e-6) {
        ++band;
      } else {
        ++disagreements;
      }
    }
  }
  o.check(disagreements == 0, std::to_string(disagreements) + " disagreements outside the band");
  o.note(std::to_string(clear) + " clear, " + std::to_string(blocked) + " blocked, " +
         std::to_string(band) + " in the band");
  return o;
}

Outcome criterion_membership() {
  Outcome o;
  const Pendulum pd;
  const Dataset d = pd.safety_sparse();
  const FeedbackLaw zero = zero_feedback(1);
  std::mt19937 rng(107);
  std::uniform_real_distribution<double> th(-0.1, 0.35), thd(-0.35, 0.35);
  double min_slack = std::numeric_limits<double>::infinity();
  double max_excess = -std::numeric_limits<double>::infinity();
  int ok = 0, cone_failures = 0, guarantee_failures = 0;
  for (int k = 0; k < 1000; ++k) {
    const VectorXd x = vec2(th(rng), thd(rng));
    const VectorXd b = pd.truth.drift(x) - pd.nominal.drift(x);
    const MatrixXd A = pd.truth.actuation(x) - pd.nominal.actuation(x);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double slack = d.epsilon(x, i) - (b + A * d[i].u - d[i].residual).norm();
      min_slack = std::min(min_slack, slack);
      if (slack < -1e-9) ++cone_failures;
    }
    const RobustControlResult r = robust_control(x, pd.cbf, pd.comparison, pd.nominal, zero, d);
    if (r.status != RobustStatus::kOk) continue;
    ++ok;
    const double excess = pd.true_cdot(pd.cbf, x, r.u) + pd.comparison(pd.cbf.value(x));
    max_excess = std::max(max_excess, excess);
    if (excess > 1e-6) ++guarantee_failures;
  }
  o.check(cone_failures == 0, std::to_string(cone_failures) + " cone violations");
  o.check(guarantee_failures == 0, std::to_string(guarantee_failures) + " true-derivative violations");
  o.note("min slack " + fmt(min_slack) + ", " + std::to_string(ok) +
         " ok states, max true excess " + fmt(max_excess));
  return o;
}

Outcome criterion_analytic() {
  Outcome o;
  const double s3 = std::sqrt(3.0);
  const ComparisonDerivation cd = derive_comparison_rate(0.5, s3 / 2, ccf::testing::pendulum_P());
  const double q_err = (cd.Q - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff();
  const double slope_err = std::abs(cd.comparison.slope() - 1.0 / (s3 + 1.0));
  o.check(q_err <= 1e-12, "Q differs from I by " + fmt(q_err));
  o.check(slope_err <= 1e-12, "slope differs by " + fmt(slope_err));

  const LipschitzConstants lc = pendulum_lipschitz_constants(PendulumParams::true_system(),
                                                             PendulumParams::nominal_estimate());
  const double lf = 10.0 * std::abs(0.7 - 0.63) / (0.7 * 0.63);
  const double lg = 0.75 * std::sqrt(2.0) * std::exp(-0.5) / (0.7 * 0.7 * 0.7);
  o.check(std::abs(lc.lip_f - lf) <= 1e-12, "lip_f mismatch");
  o.check(std::abs(lc.lip_g - lg) <= 1e-12, "lip_g mismatch");

  const Pendulum pd;
  const BoundednessCheck bc = check_bounded(pd.grid(0.25, {-5, -1}));
  o.check(bc.bounded && bc.sigma_min > 0.5, "no witness with sigma_min > 0.5");
  o.note("slope " + fmt(cd.comparison.slope()) + ", lip_f " + fmt(lc.lip_f) + ", lip_g " +
         fmt(lc.lip_g) + ", sigma_min " + fmt(bc.sigma_min));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  spdlog::cfg::load_env_levels();

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"safety reproduction", criterion_safety},
      {"stability reproduction", criterion_stability},
      {"duality cross-check", criterion_duality},
      {"brute-force equivalence", criterion_brute_force},
      {"single-point closed form", criterion_single_point},
      {"feasibility decision consistency", criterion_feasibility_decision},
      {"membership soundness", criterion_membership},
      {"analytic unit values", criterion_analytic},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out.pass) ++failures;
    std::printf("criterion %d %s: %s (%s) [%.1f s]\n", id, out.pass ? "PASS" : "FAIL",
                criteria[i].first, out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
