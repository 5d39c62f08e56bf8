#include "wmqd/simulator.h"

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.h"
#include "wmqd/errors.h"
#include "wmqd/watermark.h"

namespace wmqd {
namespace {

// Scalar loop whose output carries no state information (C = 0) and whose
// process noise is zero. With no watermark the state never leaves the origin.
SimConfig quiet_config() {
  SimConfig cfg;
  cfg.plant.A = Matrix::Constant(1, 1, 0.5);
  cfg.plant.B = Matrix::Constant(1, 1, 1.0);
  cfg.plant.C = Matrix::Constant(1, 1, 0.0);
  cfg.plant.Q = Matrix::Constant(1, 1, 0.0);
  cfg.plant.R = Matrix::Constant(1, 1, 1.0);
  cfg.plant.W = Matrix::Constant(1, 1, 1.0);
  cfg.plant.U = Matrix::Constant(1, 1, 1.0);
  cfg.attack = build_attack(Matrix::Zero(1, 1), Matrix::Constant(1, 1, 1.0));
  cfg.Sigma_e = Matrix::Zero(1, 1);
  cfg.nu = 50;
  cfg.burn_in = 10;
  cfg.max_steps = 300;
  cfg.trials = 20;
  cfg.seed = 5;
  return cfg;
}

SimConfig system_a_config(double budget) {
  SimConfig cfg;
  cfg.plant = testing::system_a();
  cfg.attack = testing::system_a_attack();
  const auto ctrl = build_lqg(cfg.plant);
  cfg.Sigma_e = budget > 0.0 ? equal_power_watermark(
                                   lqg_sensitivity(cfg.plant, ctrl).H, budget)
                             : Matrix::Zero(2, 2);
  cfg.detector.arl_h = 1000.0;
  cfg.trials = 200;
  cfg.seed = 11;
  return cfg;
}

void expect_same(const TrialResult& a, const TrialResult& b) {
  EXPECT_EQ(a.detection_time, b.detection_time);
  EXPECT_EQ(a.delay, b.delay);
  EXPECT_EQ(a.false_alarm, b.false_alarm);
  EXPECT_EQ(a.diverged, b.diverged);
  EXPECT_EQ(a.steps, b.steps);
}

TEST(RunTrial, QuietLoopStaysAtOriginWithZeroStatistic) {
  SimConfig cfg = quiet_config();
  cfg.attack_enabled = false;
  const Simulation sim(cfg);
  long visited = 0;
  const auto r = sim.run_trial(std::uint64_t{0}, [&](const StepRecord& rec) {
    EXPECT_EQ(rec.x->norm(), 0.0);
    EXPECT_EQ(rec.u->norm(), 0.0);
    EXPECT_EQ(rec.statistic, 0.0);
    ++visited;
  });
  EXPECT_EQ(visited, cfg.max_steps);
  EXPECT_FALSE(r.detection_time);
  EXPECT_EQ(r.steps, cfg.max_steps);
}

TEST(RunTrial, SameSeedGivesIdenticalResults) {
  SimConfig cfg = system_a_config(10.0);
  const Simulation sim(cfg);
  for (std::uint64_t i = 0; i < 5; ++i) {
    expect_same(sim.run_trial(i), sim.run_trial(i));
  }
  const Simulation again(cfg);
  expect_same(sim.run_trial(std::uint64_t{3}), again.run_trial(std::uint64_t{3}));
}

TEST(RunTrial, SystemAStateDivergesAfterAttackWithoutDetection) {
  SimConfig cfg = system_a_config(0.0);
  cfg.use_detector = false;
  cfg.max_steps = cfg.nu + 200;
  const Simulation sim(cfg);
  int blown_up = 0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    double pre = 0.0;
    double post = 0.0;
    sim.run_trial(static_cast<std::uint64_t>(s), [&](const StepRecord& rec) {
      if (rec.k < cfg.nu) {
        pre = std::max(pre, rec.x->norm());
      } else {
        post = std::max(post, rec.x->norm());
      }
    });
    EXPECT_LT(pre, 100.0);
    if (post > 1e6) ++blown_up;
  }
  EXPECT_GE(blown_up, seeds * 95 / 100);
}

TEST(RunTrial, DivergedFlagIsRecordedNotThrown) {
  SimConfig cfg = system_a_config(0.0);
  cfg.use_detector = false;
  cfg.max_steps = cfg.nu + 2000;
  const auto r = Simulation(cfg).run_trial(std::uint64_t{0});
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.steps, cfg.max_steps);
}

TEST(RunAll, IndependentOfThreadCount) {
  SimConfig cfg = system_a_config(10.0);
  cfg.trials = 60;
  cfg.threads = 1;
  const auto serial = Simulation(cfg).run_all();
  cfg.threads = 4;
  const auto parallel = Simulation(cfg).run_all();
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    expect_same(serial[i], parallel[i]);
  }
}

TEST(RunAll, TrialsFollowTheirOwnStreams) {
  SimConfig cfg = system_a_config(10.0);
  cfg.trials = 8;
  const Simulation sim(cfg);
  const auto all = sim.run_all();
  for (std::size_t i = 0; i < all.size(); ++i) {
    expect_same(all[i], sim.run_trial(static_cast<std::uint64_t>(i)));
  }
}

TEST(EstimateSadd, AttackIndistinguishableFromNominalIsNeverDetected) {
  // The attacked output has the same law as the nominal one (Q_a equals the
  // innovation covariance, no watermark), so the likelihood ratio is 1.
  SimConfig cfg = quiet_config();
  const auto ctrl = build_lqg(cfg.plant);
  cfg.attack = build_attack(Matrix::Zero(1, 1), ctrl.Sigma_gamma);
  cfg.detector.arl_h = 20.0;
  const Simulation sim(cfg);
  EXPECT_THROW(estimate_sadd(sim), ConvergenceError);
  const auto arl = estimate_arl(cfg);
  EXPECT_EQ(arl.alarms, 0);
  EXPECT_EQ(arl.censored, cfg.trials);
}

TEST(EstimateSadd, FalseAlarmsAreExcluded) {
  SimConfig cfg = system_a_config(10.0);
  cfg.detector.arl_h = 150.0;  // many trials alarm before nu
  cfg.trials = 200;
  const Simulation sim(cfg);
  const auto results = sim.run_all();
  double sum = 0.0;
  long detected = 0;
  for (const auto& r : results) {
    if (r.false_alarm) {
      EXPECT_LT(*r.detection_time, cfg.nu);
      EXPECT_FALSE(r.delay);
    } else if (r.delay) {
      sum += static_cast<double>(*r.delay);
      ++detected;
    }
  }
  const auto est = estimate_sadd(sim);
  EXPECT_GT(est.false_alarms, 20);
  EXPECT_GT(est.detected, 20);
  EXPECT_EQ(est.detected, detected);
  EXPECT_EQ(est.detected + est.false_alarms + est.censored, cfg.trials);
  EXPECT_DOUBLE_EQ(est.mean, sum / static_cast<double>(detected));
}

TEST(EstimateSadd, RequiresAttackAndDetector) {
  SimConfig cfg = system_a_config(10.0);
  cfg.use_detector = false;
  EXPECT_THROW(estimate_sadd(Simulation(cfg)), ValidationError);
}

TEST(EstimateSadd, DecreasesWithBudget) {
  SimConfig cfg = system_a_config(0.0);
  cfg.trials = 300;
  SweepOptions opts;
  opts.optimize = true;
  const auto pts = sweep_tradeoff(cfg, {1.0, 5.0, 20.0}, opts);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_LT(pts[i].sadd_emp + pts[i].sadd_ci,
              pts[i - 1].sadd_emp - pts[i - 1].sadd_ci);
  }
}

TEST(EstimateArl, InfiniteThresholdNeverAlarms) {
  SimConfig cfg = system_a_config(10.0);
  cfg.detector.arl_h = 1e300;
  cfg.max_steps = 3000;
  cfg.trials = 10;
  const auto est = estimate_arl(cfg);
  EXPECT_EQ(est.alarms, 0);
  EXPECT_EQ(est.censored, cfg.trials);
  EXPECT_DOUBLE_EQ(est.mean, static_cast<double>(cfg.max_steps - cfg.burn_in));
}

TEST(EstimateArl, IncreasesWithThreshold) {
  SimConfig cfg = system_a_config(10.0);
  cfg.max_steps = 200000;
  cfg.trials = 200;
  for (const auto v : {DetectorVariant::kOptimalCusum,
                       DetectorVariant::kSuboptCusum}) {
    cfg.detector.variant = v;
    cfg.detector.arl_h = 20.0;
    const auto low = estimate_arl(cfg);
    cfg.detector.arl_h = 200.0;
    const auto high = estimate_arl(cfg);
    EXPECT_EQ(low.censored, 0);
    EXPECT_EQ(high.censored, 0);
    EXPECT_GT(high.mean - high.ci_halfwidth, low.mean + low.ci_halfwidth);
    // CUSUM with threshold ln(h) keeps the run length at least near h.
    EXPECT_GT(high.mean, 0.3 * 200.0);
  }
}

TEST(SimConfig, ValidatesOrdering) {
  SimConfig cfg = system_a_config(10.0);
  cfg.nu = cfg.burn_in;
  EXPECT_THROW(Simulation{cfg}, ValidationError);
  cfg = system_a_config(10.0);
  cfg.max_steps = cfg.nu;
  EXPECT_THROW(Simulation{cfg}, ValidationError);
  cfg = system_a_config(10.0);
  cfg.trials = 0;
  EXPECT_THROW(Simulation{cfg}, ValidationError);
  cfg = system_a_config(10.0);
  cfg.Sigma_e = Matrix::Identity(3, 3);
  EXPECT_THROW(Simulation{cfg}, ValidationError);
}

TEST(SweepTradeoff, RowPerBudgetAndZeroBudgetMeansNoWatermark) {
  SimConfig cfg = system_a_config(0.0);
  SweepOptions opts;
  opts.empirical = false;
  const auto pts = sweep_tradeoff(cfg, {0.0, 10.0, 20.0, 50.0, 100.0}, opts);
  ASSERT_EQ(pts.size(), 5u);
  EXPECT_EQ(pts[0].Sigma_e.norm(), 0.0);
  EXPECT_EQ(pts[0].delta_lqg, 0.0);
  // The attack statistics differ from the nominal ones, so the attack is
  // detectable even without a watermark.
  EXPECT_GT(pts[0].kld_opt, 0.0);
  EXPECT_TRUE(std::isnan(pts[0].sadd_emp));
  for (const auto& pt : pts) {
    EXPECT_LE(pt.delta_lqg, pt.budget_J * (1.0 + 1e-6));
    EXPECT_NEAR(pt.delta_lqg, pt.budget_J, 1e-9 * std::max(1.0, pt.budget_J));
  }
}

TEST(SweepTradeoff, OptimizedDominatesEqualPower) {
  for (const auto& name : {"system-a", "system-b"}) {
    const auto ec = preset(name);
    SimConfig cfg;
    cfg.plant = ec.plant;
    cfg.attack = ec.attack;
    cfg.Sigma_e = Matrix::Zero(ec.plant.p(), ec.plant.p());
    const std::vector<double> budgets = {1.0, 10.0, 50.0};
    SweepOptions plain;
    plain.empirical = false;
    SweepOptions best = plain;
    best.optimize = true;
    const auto a = sweep_tradeoff(cfg, budgets, plain);
    const auto b = sweep_tradeoff(cfg, budgets, best);
    for (std::size_t i = 0; i < budgets.size(); ++i) {
      EXPECT_LE(b[i].sadd_pred_opt, a[i].sadd_pred_opt * (1.0 + 1e-9)) << name;
      EXPECT_GE(b[i].kld_opt, a[i].kld_opt * (1.0 - 1e-9)) << name;
    }
  }
}

TEST(SweepTradeoff, RejectsUnsortedOrNegativeBudgets) {
  SimConfig cfg = system_a_config(0.0);
  SweepOptions opts;
  opts.empirical = false;
  EXPECT_THROW(sweep_tradeoff(cfg, {10.0, 5.0}, opts), ValidationError);
  EXPECT_THROW(sweep_tradeoff(cfg, {-1.0}, opts), ValidationError);
}

TEST(SweepTradeoff, PredictedDelayFallsAsBudgetGrows) {
  SimConfig cfg = system_a_config(0.0);
  SweepOptions opts;
  opts.empirical = false;
  opts.optimize = true;
  const auto pts = sweep_tradeoff(cfg, {0.0, 1.0, 10.0, 100.0}, opts);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_LT(pts[i].sadd_pred_opt, pts[i - 1].sadd_pred_opt);
    EXPECT_LT(pts[i].sadd_pred_subopt, pts[i - 1].sadd_pred_subopt);
  }
}

}  // namespace
}  // namespace wmqd
