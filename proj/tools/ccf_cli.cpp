// Command line front end: run experiments, sweep the feasibility analysis over
// a state grid, materialize datasets, and dump assembled robust programs.
//
// Log verbosity follows SPDLOG_LEVEL (trace, debug, info, warn, error, off).

#include <CLI11.hpp>

#include <spdlog/cfg/env.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ccf/ccf.hpp"

namespace fs = std::filesystem;

namespace {

struct Axis {
  double lo;
  double hi;
  int count;

  double at(int k) const {
    return count == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / (count - 1);
  }
};

// "lo:hi:count" per state axis, comma separated.
std::vector<Axis> parse_grid_spec(const std::string& spec) {
  std::vector<Axis> axes;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    Axis a{};
    char c1 = 0, c2 = 0;
    std::stringstream ps(part);
    if (!(ps >> a.lo >> c1 >> a.hi >> c2 >> a.count) || c1 != ':' || c2 != ':' || a.count < 1 ||
        a.hi < a.lo || !(ps >> std::ws).eof()) {
      throw std::invalid_argument("bad grid axis '" + part + "', expected lo:hi:count");
    }
    axes.push_back(a);
  }
  return axes;
}

std::vector<double> parse_state(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) v.push_back(std::stod(part));
  return v;
}

const ccf::ControllerSpec* first_robust(const ccf::ExperimentConfig& cfg) {
  for (const auto& c : cfg.controllers) {
    if (c.type == ccf::ControllerType::kRobust) return &c;
  }
  return nullptr;
}

int cmd_run(const std::string& config_path, const std::string& output_dir) {
  ccf::ExperimentConfig cfg = ccf::parse_config(fs::path(config_path));
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  const ccf::ExperimentResult result = ccf::run_experiment(cfg);
  for (const auto& c : result.summary.controllers) {
    if (c.errored) {
      std::printf("%-16s ERROR %s\n", c.name.c_str(), c.error.c_str());
      continue;
    }
    std::printf("%-16s final C %.6g  max C %.6g  violations %zu  infeasible %zu  fallback %zu\n",
                c.name.c_str(), c.final_certificate, c.max_certificate, c.violation_steps,
                c.infeasible_events, c.fallback_events);
  }
  std::printf("summary written to %s\n", (fs::path(cfg.output_dir) / "summary.json").c_str());
  return result.summary.any_errored() ? 1 : 0;
}

int cmd_analyze(const std::string& config_path, const std::string& grid_spec,
                std::string dataset_name, const std::string& out_path) {
  const ccf::ExperimentConfig cfg = ccf::parse_config(fs::path(config_path));
  if (dataset_name.empty()) {
    const ccf::ControllerSpec* spec = first_robust(cfg);
    if (spec) {
      dataset_name = spec->dataset;
    } else if (!cfg.grids.empty()) {
      dataset_name = cfg.grids.begin()->first;
    } else {
      throw std::invalid_argument("analyze: the config defines no dataset grid");
    }
  }
  if (!cfg.grids.count(dataset_name)) {
    throw std::invalid_argument("analyze: no grid named '" + dataset_name + "'");
  }
  const std::vector<Axis> axes = parse_grid_spec(grid_spec);
  if (axes.size() != 2) throw std::invalid_argument("analyze: grid needs one axis per state");

  const ccf::ExperimentSetup setup = ccf::make_setup(cfg);
  const ccf::Dataset data = ccf::make_dataset(cfg, setup, dataset_name);
  const ccf::BoundednessCheck bc = ccf::check_bounded(data);

  nlohmann::json cells = nlohmann::json::array();
  int clear = 0, blocked = 0, unknown = 0;
  for (int i = 0; i < axes[0].count; ++i) {
    for (int k = 0; k < axes[1].count; ++k) {
      const Eigen::Vector2d x(axes[0].at(i), axes[1].at(k));
      const ccf::FeasibilityReport rep = ccf::feasibility_check(
          x, setup.cert, setup.comparison, setup.nominal, data, cfg.solver);
      nlohmann::json cell = {{"index", {i, k}},
                             {"x", {x(0), x(1)}},
                             {"ray_clear", rep.ray_clear},
                             {"decision", std::string(ccf::to_string(rep.decision))},
                             {"ray_sup", ccf::detail::finite_or_string(rep.ray_sup)},
                             {"alpha", rep.alpha}};
      cells.push_back(std::move(cell));
      switch (rep.decision) {
        case ccf::RayDecision::kClear:
          ++clear;
          break;
        case ccf::RayDecision::kBlocked:
          ++blocked;
          break;
        case ccf::RayDecision::kUnknown:
          ++unknown;
          break;
      }
    }
  }
  nlohmann::json out = {
      {"kind", std::string(ccf::to_string(cfg.kind))},
      {"dataset", dataset_name},
      {"num_points", data.size()},
      {"bounded", bc.bounded},
      {"witness", bc.witness},
      {"sigma_min", bc.sigma_min},
      {"axes",
       {{"theta", {{"lo", axes[0].lo}, {"hi", axes[0].hi}, {"count", axes[0].count}}},
        {"theta_dot", {{"lo", axes[1].lo}, {"hi", axes[1].hi}, {"count", axes[1].count}}}}},
      {"counts", {{"clear", clear}, {"blocked", blocked}, {"unknown", unknown}}},
      {"cells", cells}};
  if (out_path.empty() || out_path == "-") {
    std::cout << out.dump(2) << '\n';
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("analyze: cannot open " + out_path);
    f << out.dump(2) << '\n';
    spdlog::info("analysis written to {}", out_path);
  }
  return 0;
}

int cmd_dataset(const std::string& config_path, const std::string& out_dir) {
  const ccf::ExperimentConfig cfg = ccf::parse_config(fs::path(config_path));
  if (cfg.grids.empty()) throw std::invalid_argument("dataset: the config defines no grid");
  const ccf::ExperimentSetup setup = ccf::make_setup(cfg);
  fs::create_directories(out_dir);
  auto params_json = [](const ccf::PendulumParams& p) {
    return nlohmann::json{{"gravity", p.gravity},
                          {"length", p.length},
                          {"mass", p.mass},
                          {"gain_attenuation", p.gain_attenuation}};
  };
  for (const auto& [name, grid] : cfg.grids) {
    const ccf::Dataset data = ccf::make_dataset(cfg, setup, name);
    const fs::path csv = fs::path(out_dir) / (name + ".csv");
    const fs::path meta = fs::path(out_dir) / (name + ".json");
    {
      std::ofstream f(csv, std::ios::binary);
      if (!f) throw std::runtime_error("dataset: cannot open " + csv.string());
      ccf::write_dataset_csv(data, f);
    }
    nlohmann::json j = ccf::dataset_metadata(data);
    j["true_params"] = params_json(cfg.true_params);
    j["nominal_params"] = params_json(cfg.nominal_params);
    std::ofstream f(meta, std::ios::binary);
    f << j.dump(2) << '\n';
    std::printf("%s: %zu points -> %s\n", name.c_str(), data.size(), csv.c_str());
  }
  return 0;
}

int cmd_program(const std::string& config_path, std::string dataset_name,
                const std::string& state_text, std::size_t prune_k, const std::string& out_path) {
  const ccf::ExperimentConfig cfg = ccf::parse_config(fs::path(config_path));
  if (dataset_name.empty()) {
    const ccf::ControllerSpec* spec = first_robust(cfg);
    if (!spec) throw std::invalid_argument("program: no robust controller in the config");
    dataset_name = spec->dataset;
  }
  if (!cfg.grids.count(dataset_name)) {
    throw std::invalid_argument("program: no grid named '" + dataset_name + "'");
  }
  const std::vector<double> s = parse_state(state_text);
  if (s.size() != 2) throw std::invalid_argument("program: --state needs two values");
  const Eigen::Vector2d x(s[0], s[1]);
  const ccf::ExperimentSetup setup = ccf::make_setup(cfg);
  ccf::Dataset data = ccf::make_dataset(cfg, setup, dataset_name);
  if (prune_k != 0) data = ccf::prune_dataset(x, data, prune_k);
  const ccf::ConicProgram p =
      ccf::assemble_drccf_socp(x, setup.cert, setup.comparison, setup.nominal, setup.k_d(x), data);
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw std::runtime_error("program: cannot open " + out_path);
  ccf::write_conic_program(f, p);
  std::printf("program with %d variables and %zu cones written to %s\n", p.num_vars,
              p.cones.size(), out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::cfg::load_env_levels();
  CLI::App app{"Data-driven robust control certificate synthesis"};
  app.require_subcommand(1);

  std::string config, output_dir, grid, dataset, out, state;
  std::size_t prune_k = 0;

  auto* run = app.add_subcommand("run", "Run an experiment configuration");
  run->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--output-dir", output_dir, "Override the configured output directory");

  auto* analyze = app.add_subcommand("analyze", "Sweep the feasibility analysis over a state grid");
  analyze->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  analyze->add_option("--grid", grid, "lo:hi:count per state axis, comma separated")->required();
  analyze->add_option("--dataset", dataset, "Grid name (default: first robust controller's)");
  analyze->add_option("--out", out, "Output JSON path (default: stdout)");

  auto* ds = app.add_subcommand("dataset", "Write every configured dataset as CSV plus JSON");
  ds->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  ds->add_option("--out", out, "Output directory")->required();

  auto* prog = app.add_subcommand("program", "Dump the robust program assembled at one state");
  prog->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  prog->add_option("--state", state, "theta,theta_dot")->required();
  prog->add_option("--dataset", dataset, "Grid name (default: first robust controller's)");
  prog->add_option("--prune-k", prune_k, "Keep the K points closest in the error bound");
  prog->add_option("--out", out, "Output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, output_dir);
    if (*analyze) return cmd_analyze(config, grid, dataset, out);
    if (*ds) return cmd_dataset(config, out);
    if (*prog) return cmd_program(config, dataset, state, prune_k, out);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
