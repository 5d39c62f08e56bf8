// wmqd: analysis, watermark design and Monte-Carlo experiments for
// watermarked LQG loops under deception attacks.

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wmqd/analysis.h"
#include "wmqd/config.h"
#include "wmqd/csv.h"
#include "wmqd/errors.h"
#include "wmqd/optimizer.h"
#include "wmqd/simulator.h"
#include "wmqd/watermark.h"

namespace {

using nlohmann::json;
using wmqd::Matrix;

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  std::string detector;
  std::optional<std::uint64_t> seed;
  long trials = -1;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment file (JSON)");
  cmd->add_option("--preset", c.preset, "Built-in system")
      ->check(CLI::IsMember({"system-a", "system-b"}));
  cmd->add_option("--out", c.out, "Output file (default: stdout)");
  cmd->add_option("--seed", c.seed, "Random seed (64-bit unsigned)");
  cmd->add_option("--trials", c.trials, "Monte-Carlo trials")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--detector", c.detector, "Detector variant")
      ->check(CLI::IsMember({"optimal-cusum", "subopt-cusum", "np"}));
}

wmqd::ExperimentConfig load(const Common& c) {
  if (c.config.empty() == c.preset.empty()) {
    throw wmqd::ParseError("give exactly one of --config or --preset");
  }
  wmqd::ExperimentConfig cfg =
      c.config.empty() ? wmqd::preset(c.preset) : wmqd::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.trials > 0) cfg.trials = c.trials;
  if (!c.detector.empty()) {
    cfg.detector.variant = wmqd::parse_detector_variant(c.detector);
  }
  return cfg;
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(c.out, std::ios::binary);
  if (!f) throw wmqd::ValidationError("cannot write '" + c.out + "'");
  f << text;
}

json number_json(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(r, k));
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> parse_budgets(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw wmqd::ParseError("--budgets: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw wmqd::ParseError("--budgets: empty list");
  return out;
}

int cmd_analyze(const Common& c) {
  const auto cfg = load(c);
  const auto ctrl = wmqd::build_lqg(cfg.plant);
  const Matrix Se = wmqd::resolve_watermark(cfg, ctrl);
  const auto rep =
      wmqd::analyze(cfg.plant, ctrl, cfg.attack, Se, cfg.detector.arl_h);
  json j;
  j["Sigma_e"] = matrix_json(Se);
  j["Sigma_gamma"] = matrix_json(ctrl.Sigma_gamma);
  j["Sigma_gamma_tilde"] = matrix_json(rep.Sigma_gamma_tilde);
  j["expected_kld_optimal"] = number_json(rep.expected_kld_optimal);
  j["kld_suboptimal"] = number_json(rep.kld_suboptimal);
  j["optimality_gap"] = number_json(rep.optimality_gap);
  j["delta_lqg"] = number_json(rep.delta_lqg);
  j["sadd_pred_optimal"] = number_json(rep.sadd_pred_optimal);
  j["sadd_pred_suboptimal"] = number_json(rep.sadd_pred_suboptimal);
  j["arl_h"] = number_json(rep.arl_h);
  j["threshold"] = number_json(std::log(rep.arl_h));
  emit(c, j.dump(2) + "\n");
  return 0;
}

int cmd_optimize(const Common& c, double budget, const std::string& variant) {
  auto cfg = load(c);
  if (!variant.empty()) {
    cfg.watermark.variant = wmqd::parse_optimizer_variant(variant);
  }
  if (!(budget > 0.0)) throw wmqd::ValidationError("--budget must be > 0");
  const auto ctrl = wmqd::build_lqg(cfg.plant);
  wmqd::OptimizerConfig oc;
  oc.budget_J = budget;
  oc.variant = cfg.watermark.variant;
  const auto d = wmqd::optimize_watermark(cfg.plant, ctrl, cfg.attack, oc);
  cfg.watermark.budget_J = budget;
  cfg.watermark.optimize = true;
  json design;
  design["variant"] = wmqd::to_string(oc.variant);
  design["budget_J"] = budget;
  design["v_lambda"] = json::array();
  for (Eigen::Index i = 0; i < d.v_lambda.size(); ++i) {
    design["v_lambda"].push_back(d.v_lambda(i));
  }
  design["achieved_kld"] = number_json(d.achieved_kld);
  design["kld_gain"] = number_json(d.kld_gain);
  design["achieved_delta_lqg"] = number_json(d.achieved_delta_lqg);
  design["converged"] = d.converged;
  design["iterations"] = d.iterations;
  emit(c, wmqd::to_json_text(cfg, d.Sigma_e_star, design.dump()));
  return 0;
}

int cmd_simulate(const Common& c, bool trace) {
  const auto cfg = load(c);
  const auto ctrl = wmqd::build_lqg(cfg.plant);
  const Matrix Se = wmqd::resolve_watermark(cfg, ctrl);
  wmqd::SimConfig sc = wmqd::to_sim_config(cfg, Se);
  sc.threads = c.threads;
  std::ostringstream out;
  if (trace) {
    sc.stop_on_alarm = false;
    const wmqd::Simulation sim(sc);
    out << wmqd::csv::kTraceHeader << '\n';
    sim.run_trial(std::uint64_t{0}, [&](const wmqd::StepRecord& r) {
      if (r.detector_active) {
        wmqd::csv::write_trace_row(out, r.k, r.statistic, r.threshold, r.alarm);
      }
    });
  } else {
    const double budget =
        cfg.watermark.Sigma_e
            ? wmqd::delta_lqg(cfg.plant, ctrl, Se).delta_lqg
            : cfg.watermark.budget_J;
    const auto pt = wmqd::evaluate_watermark(sc, ctrl, budget, Se, true);
    wmqd::csv::write_sweep(out, {pt});
  }
  emit(c, out.str());
  return 0;
}

int cmd_sweep(const Common& c, const std::string& budgets, bool optimize,
              bool theory_only, const std::string& variant) {
  auto cfg = load(c);
  wmqd::SweepOptions opts;
  opts.optimize = optimize || cfg.watermark.optimize;
  opts.variant = variant.empty() ? cfg.watermark.variant
                                 : wmqd::parse_optimizer_variant(variant);
  opts.empirical = !theory_only;
  const auto ctrl = wmqd::build_lqg(cfg.plant);
  wmqd::SimConfig sc =
      wmqd::to_sim_config(cfg, Matrix::Zero(cfg.plant.p(), cfg.plant.p()));
  sc.threads = c.threads;
  const auto points = wmqd::sweep_tradeoff(sc, parse_budgets(budgets), opts);
  std::ostringstream out;
  wmqd::csv::write_sweep(out, points);
  emit(c, out.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermarked LQG deception-attack detection toolkit"};
  app.require_subcommand(1);

  Common analyze_opts, optimize_opts, simulate_opts, sweep_opts;
  double budget = 0.0;
  std::string opt_variant, sweep_variant, budgets;
  bool trace = false, optimize = false, theory_only = false;

  auto* analyze = app.add_subcommand(
      "analyze", "Closed-form KLDs, LQG penalty and predicted delays");
  add_common(analyze, analyze_opts);

  auto* opt = app.add_subcommand(
      "optimize", "Design the watermark covariance for an LQG budget");
  add_common(opt, optimize_opts);
  opt->add_option("--budget", budget, "LQG cost budget J (> 0)")->required();
  opt->add_option("--variant", opt_variant, "optimal-kld or subopt-kld")
      ->check(CLI::IsMember({"optimal-kld", "subopt-kld"}));

  auto* sim = app.add_subcommand(
      "simulate", "Monte-Carlo detection delay, or a per-step trace");
  add_common(sim, simulate_opts);
  sim->add_flag("--trace", trace, "Emit per-step statistics of trial 0");

  auto* sweep = app.add_subcommand(
      "sweep", "Detection delay versus LQG budget");
  add_common(sweep, sweep_opts);
  sweep->add_option("--budgets", budgets, "Comma-separated budgets")
      ->required();
  sweep->add_flag("--optimize", optimize, "Optimize Sigma_e per budget");
  sweep->add_option("--variant", sweep_variant, "optimal-kld or subopt-kld")
      ->check(CLI::IsMember({"optimal-kld", "subopt-kld"}));
  sweep->add_flag("--theory-only", theory_only,
                  "Skip the Monte-Carlo columns (reported as nan)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*analyze) return cmd_analyze(analyze_opts);
    if (*opt) return cmd_optimize(optimize_opts, budget, opt_variant);
    if (*sim) return cmd_simulate(simulate_opts, trace);
    if (*sweep) {
      return cmd_sweep(sweep_opts, budgets, optimize, theory_only,
                       sweep_variant);
    }
  } catch (const wmqd::Error& e) {
    std::cerr << "wmqd: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "wmqd: internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
