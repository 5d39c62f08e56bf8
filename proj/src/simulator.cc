#include "wmqd/simulator.h"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "wmqd/errors.h"
#include "wmqd/watermark.h"

namespace wmqd {

namespace {

constexpr double kDivergenceGuard = 1e9;
constexpr std::uint64_t kCalibrationStream = ~std::uint64_t{0};

double z95(double sd, long n) {
  return n > 1 ? 1.959963984540054 * sd / std::sqrt(static_cast<double>(n))
               : std::numeric_limits<double>::infinity();
}

void mean_and_sd(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

SimConfig calibrated(SimConfig cfg, const ControllerSolution& ctrl) {
  if (cfg.use_detector &&
      cfg.detector.variant == DetectorVariant::kNeymanPearson &&
      !cfg.detector.np_eta) {
    Rng rng = Rng::stream(cfg.seed, kCalibrationStream);
    NpCalibration opts;
    opts.steps = cfg.np_calibration_steps;
    opts.burn_in = cfg.burn_in;
    cfg.detector.np_eta = np_calibrate(cfg.plant, ctrl, cfg.Sigma_e,
                                       cfg.detector.alpha(), rng, opts);
  }
  return cfg;
}

}  // namespace

void SimConfig::validate() const {
  if (burn_in < 0) throw ValidationError("sim.burn_in must be >= 0");
  if (max_steps <= burn_in) {
    throw ValidationError("sim.max_steps must exceed sim.burn_in");
  }
  if (attack_enabled && !(burn_in < nu && nu < max_steps)) {
    throw ValidationError("sim requires burn_in < nu < max_steps");
  }
  if (trials < 1) throw ValidationError("sim.trials must be >= 1");
  WatermarkSpec{Sigma_e}.validate(plant.p());
  if (attack.m() != plant.m()) {
    throw ValidationError("attack dimension does not match the plant outputs");
  }
  detector.validate();
}

Simulation::Simulation(SimConfig cfg)
    : ctrl_(build_lqg(cfg.plant)),
      noise_(cfg.plant),
      watermark_(WatermarkSpec{cfg.Sigma_e}) {
  cfg.validate();
  cfg_ = calibrated(std::move(cfg), ctrl_);
  if (cfg_.use_detector) {
    detector_ = make_detector(cfg_.detector, cfg_.plant, ctrl_, cfg_.attack,
                              cfg_.Sigma_e);
  }
}

TrialResult Simulation::run_trial(std::uint64_t index,
                                  const TrialObserver& observer) const {
  Rng rng = Rng::stream(cfg_.seed, index);
  return run_trial(rng, observer);
}

TrialResult Simulation::run_trial(Rng& rng,
                                  const TrialObserver& observer) const {
  const PlantModel& plant = cfg_.plant;
  const auto n = plant.n();
  const auto m = plant.m();
  const auto p = plant.p();

  Vector x = Vector::Zero(n);
  Vector x_hat = Vector::Zero(n);
  Vector u_prev = Vector::Zero(p);
  Vector e_prev = Vector::Zero(p);
  Vector obs_prev = Vector::Zero(m);
  AttackGenerator attacker(cfg_.attack);
  DetectorState dstate;

  TrialResult result;
  for (long k = 0; k < cfg_.max_steps; ++k) {
    const bool attacked = cfg_.attack_enabled && k >= cfg_.nu;
    // The measurement noise is drawn even when it is discarded so that the
    // random stream stays aligned between attacked and clean runs.
    Vector obs = plant.C * x + noise_.measurement(rng);
    if (attacked) obs = attacker.next(rng);

    const FilterStep fs = kf_step(ctrl_, x_hat, u_prev, obs);

    DetectorStep dstep;
    const bool active = detector_ && k >= cfg_.burn_in;
    if (active) {
      if (k == cfg_.burn_in) dstate = detector_->start(k, x_hat, obs_prev);
      dstep = detector_->update(dstate, obs, e_prev);
    }

    const Vector e = watermark_.sample(rng);
    const Vector u = ctrl_.L * fs.x_hat + e;

    if (observer) {
      StepRecord rec;
      rec.k = k;
      rec.x = &x;
      rec.obs = &obs;
      rec.innovation = &fs.innovation;
      rec.e = &e;
      rec.u = &u;
      rec.attacked = attacked;
      rec.detector_active = active;
      rec.statistic = dstep.statistic;
      rec.increment = dstep.increment;
      rec.threshold = detector_ ? detector_->threshold() : 0.0;
      rec.alarm = dstep.alarm;
      observer(rec);
    }

    result.steps = k + 1;
    if (dstep.alarm && !result.detection_time) {
      result.detection_time = k;
      if (cfg_.attack_enabled && k >= cfg_.nu) {
        result.delay = k - cfg_.nu;
      } else {
        result.false_alarm = true;
      }
      if (cfg_.stop_on_alarm) break;
    }

    const Vector w = noise_.process(rng);
    if (!result.diverged) {
      x = plant.A * x + plant.B * u + w;
      if (!x.allFinite() || x.norm() > kDivergenceGuard) result.diverged = true;
    }
    x_hat = fs.x_hat;
    u_prev = u;
    e_prev = e;
    obs_prev = obs;
  }
  return result;
}

std::vector<TrialResult> Simulation::run_all() const {
  const auto trials = static_cast<std::size_t>(cfg_.trials);
  std::vector<TrialResult> results(trials);
  unsigned nthreads = cfg_.threads ? cfg_.threads
                                   : std::max(1u, std::thread::hardware_concurrency());
  nthreads = static_cast<unsigned>(
      std::min<std::size_t>(nthreads, std::max<std::size_t>(trials, 1)));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= trials || failed.load()) return;
      try {
        results[i] = run_trial(static_cast<std::uint64_t>(i));
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

DelayEstimate summarize_delays(const std::vector<TrialResult>& results) {
  DelayEstimate est;
  std::vector<double> delays;
  for (const auto& r : results) {
    if (r.delay) {
      delays.push_back(static_cast<double>(*r.delay));
    } else if (r.false_alarm) {
      ++est.false_alarms;
    } else {
      ++est.censored;
    }
  }
  est.detected = static_cast<long>(delays.size());
  if (delays.empty()) {
    throw ConvergenceError("no trial detected the attack before max_steps");
  }
  double sd = 0.0;
  mean_and_sd(delays, est.mean, sd);
  est.ci_halfwidth = z95(sd, est.detected);
  return est;
}

DelayEstimate estimate_sadd(const Simulation& sim) {
  if (!sim.config().attack_enabled || !sim.detector()) {
    throw ValidationError("estimate_sadd needs an attack and a detector");
  }
  return summarize_delays(sim.run_all());
}

RunLengthEstimate estimate_arl(const SimConfig& cfg) {
  SimConfig c = cfg;
  c.attack_enabled = false;
  c.use_detector = true;
  c.stop_on_alarm = true;
  const Simulation sim(c);
  const auto results = sim.run_all();
  RunLengthEstimate est;
  std::vector<double> lengths;
  lengths.reserve(results.size());
  for (const auto& r : results) {
    if (r.detection_time) {
      ++est.alarms;
      lengths.push_back(static_cast<double>(*r.detection_time - c.burn_in + 1));
    } else {
      ++est.censored;
      lengths.push_back(static_cast<double>(c.max_steps - c.burn_in));
    }
  }
  double sd = 0.0;
  mean_and_sd(lengths, est.mean, sd);
  est.ci_halfwidth = z95(sd, static_cast<long>(lengths.size()));
  return est;
}

double average_lqg_cost(const PlantModel& plant, const ControllerSolution& ctrl,
                        const Matrix& Sigma_e, long steps, long burn_in,
                        Rng& rng) {
  if (steps < 1 || burn_in < 0) {
    throw ValidationError("average_lqg_cost: steps must be >= 1");
  }
  const PlantNoise noise(plant);
  const WatermarkGenerator wm(WatermarkSpec{Sigma_e});
  Vector x = Vector::Zero(plant.n());
  Vector x_hat = Vector::Zero(plant.n());
  Vector u = Vector::Zero(plant.p());
  double total = 0.0;
  for (long k = 0; k < burn_in + steps; ++k) {
    const Vector y = plant.C * x + noise.measurement(rng);
    x_hat = kf_step(ctrl, x_hat, u, y).x_hat;
    u = ctrl.L * x_hat + wm.sample(rng);
    if (k >= burn_in) total += x.dot(plant.W * x) + u.dot(plant.U * u);
    x = plant.A * x + plant.B * u + noise.process(rng);
  }
  return total / static_cast<double>(steps);
}

Matrix watermark_for_budget(const PlantModel& plant,
                            const ControllerSolution& ctrl,
                            const AttackModel& attack, double J,
                            const SweepOptions& opts) {
  if (!(J >= 0.0) || !std::isfinite(J)) {
    throw ValidationError("budgets must be finite and >= 0");
  }
  if (J == 0.0) return Matrix::Zero(plant.p(), plant.p());
  if (opts.optimize) {
    OptimizerConfig oc;
    oc.budget_J = J;
    oc.variant = opts.variant;
    return optimize_watermark(plant, ctrl, attack, oc).Sigma_e_star;
  }
  return equal_power_watermark(lqg_sensitivity(plant, ctrl).H, J);
}

SweepPoint evaluate_watermark(const SimConfig& cfg,
                              const ControllerSolution& ctrl, double budget_J,
                              const Matrix& Sigma_e, bool empirical) {
  const auto prediction = [&](double kld) {
    return kld > 0.0 ? std::log(cfg.detector.arl_h) / kld
                     : std::numeric_limits<double>::infinity();
  };
  SweepPoint pt;
  pt.budget_J = budget_J;
  pt.Sigma_e = Sigma_e;
  pt.delta_lqg = delta_lqg(cfg.plant, ctrl, Sigma_e).delta_lqg;
  const Matrix sgt = sigma_gamma_tilde(cfg.plant, ctrl, cfg.attack, Sigma_e);
  pt.kld_opt = expected_kld_optimal(ctrl, cfg.attack, sgt);
  pt.kld_subopt = kld_suboptimal(cfg.plant, ctrl, sgt, Sigma_e);
  pt.sadd_pred_opt = prediction(pt.kld_opt);
  pt.sadd_pred_subopt = prediction(pt.kld_subopt);
  pt.sadd_emp = std::numeric_limits<double>::quiet_NaN();
  pt.sadd_ci = std::numeric_limits<double>::quiet_NaN();
  if (empirical) {
    SimConfig c = cfg;
    c.Sigma_e = Sigma_e;
    c.attack_enabled = true;
    c.use_detector = true;
    c.detector.np_eta.reset();
    const DelayEstimate est = estimate_sadd(Simulation(c));
    pt.sadd_emp = est.mean;
    pt.sadd_ci = est.ci_halfwidth;
  }
  return pt;
}

std::vector<SweepPoint> sweep_tradeoff(const SimConfig& cfg,
                                       const std::vector<double>& budgets,
                                       const SweepOptions& opts) {
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    if (!(budgets[i] > budgets[i - 1])) {
      throw ValidationError("budgets must be strictly increasing");
    }
  }
  const ControllerSolution ctrl = build_lqg(cfg.plant);
  std::vector<SweepPoint> out;
  out.reserve(budgets.size());
  for (const double J : budgets) {
    out.push_back(evaluate_watermark(
        cfg, ctrl, J,
        watermark_for_budget(cfg.plant, ctrl, cfg.attack, J, opts),
        opts.empirical));
  }
  return out;
}

}  // namespace wmqd
