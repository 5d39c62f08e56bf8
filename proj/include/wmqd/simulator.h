#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "wmqd/analysis.h"
#include "wmqd/attack.h"
#include "wmqd/control.h"
#include "wmqd/detectors.h"
#include "wmqd/optimizer.h"
#include "wmqd/random.h"
#include "wmqd/watermark.h"

namespace wmqd {

/// Everything that defines one closed-loop experiment.
struct SimConfig {
  PlantModel plant;
  AttackModel attack;
  Matrix Sigma_e;
  DetectorConfig detector;

  long nu = 500;        // first attacked sample
  long burn_in = 200;   // detector starts here
  long max_steps = 20000;
  long trials = 2000;
  std::uint64_t seed = 1;

  bool attack_enabled = true;
  bool use_detector = true;
  bool stop_on_alarm = true;
  unsigned threads = 0;  // 0 selects the hardware concurrency
  long np_calibration_steps = 1000000;

  /// Throws ValidationError unless burn_in < nu < max_steps (nu is only
  /// checked when the attack is enabled) and trials >= 1.
  void validate() const;
};

struct TrialResult {
  std::optional<long> detection_time;
  std::optional<long> delay;  // detection_time - nu, for detections at or after nu
  bool false_alarm = false;   // alarm before nu
  bool diverged = false;      // state norm crossed the divergence guard
  long steps = 0;             // samples simulated
};

/// Per-step view handed to an observer callback.
struct StepRecord {
  long k = 0;
  const Vector* x = nullptr;    // plant state at k (before the update)
  const Vector* obs = nullptr;  // observation fed to the filter
  const Vector* innovation = nullptr;
  const Vector* e = nullptr;    // watermark applied at k
  const Vector* u = nullptr;
  bool attacked = false;
  bool detector_active = false;
  double statistic = 0.0;
  double increment = 0.0;
  double threshold = 0.0;
  bool alarm = false;
};

using TrialObserver = std::function<void(const StepRecord&)>;

/// Prepared experiment: controller, detector and samplers are built once and
/// shared read-only by all trials.
class Simulation {
 public:
  explicit Simulation(SimConfig cfg);

  const SimConfig& config() const { return cfg_; }
  const ControllerSolution& controller() const { return ctrl_; }
  const Detector* detector() const { return detector_.get(); }

  /// Simulates one trial with generator stream `index` of the seed.
  TrialResult run_trial(std::uint64_t index,
                        const TrialObserver& observer = {}) const;
  TrialResult run_trial(Rng& rng, const TrialObserver& observer = {}) const;

  /// All trials, in trial order, independent of the thread count.
  std::vector<TrialResult> run_all() const;

 private:
  SimConfig cfg_;
  ControllerSolution ctrl_;
  std::unique_ptr<Detector> detector_;
  PlantNoise noise_;
  WatermarkGenerator watermark_;
};

struct DelayEstimate {
  double mean = 0.0;
  double ci_halfwidth = 0.0;  // 95 %, normal approximation
  long detected = 0;
  long false_alarms = 0;
  long censored = 0;
};

/// Mean detection delay over trials that alarm at or after nu. Trials that
/// alarm earlier count as false alarms and are excluded. Throws
/// ConvergenceError if no trial detects the attack.
DelayEstimate estimate_sadd(const Simulation& sim);
DelayEstimate summarize_delays(const std::vector<TrialResult>& results);

struct RunLengthEstimate {
  double mean = 0.0;
  double ci_halfwidth = 0.0;
  long alarms = 0;
  long censored = 0;  // counted at their full length, so mean is a lower bound
};

/// Mean number of detector samples until the first alarm with no attack.
RunLengthEstimate estimate_arl(const SimConfig& cfg);

/// Long-run average of x'Wx + u'Uu with no attack and no detector, after a
/// burn-in.
double average_lqg_cost(const PlantModel& plant, const ControllerSolution& ctrl,
                        const Matrix& Sigma_e, long steps, long burn_in,
                        Rng& rng);

struct SweepPoint {
  double budget_J = 0.0;
  double delta_lqg = 0.0;
  double kld_opt = 0.0;
  double kld_subopt = 0.0;
  double sadd_pred_opt = 0.0;
  double sadd_pred_subopt = 0.0;
  double sadd_emp = 0.0;      // NaN when no trials were run
  double sadd_ci = 0.0;
  Matrix Sigma_e;
};

struct SweepOptions {
  bool optimize = false;
  OptimizerVariant variant = OptimizerVariant::kOptimalKld;
  bool empirical = true;  // run Monte-Carlo trials for sadd_emp
};

/// One point per budget. Budget 0 means no watermark; otherwise Sigma_e is
/// either optimized or equal-power diagonal with tr(H Sigma_e) = J.
std::vector<SweepPoint> sweep_tradeoff(const SimConfig& cfg,
                                       const std::vector<double>& budgets,
                                       const SweepOptions& opts);

/// Theory columns (and, if `empirical`, the Monte-Carlo delay) for one
/// watermark covariance. cfg.Sigma_e is ignored.
SweepPoint evaluate_watermark(const SimConfig& cfg,
                              const ControllerSolution& ctrl, double budget_J,
                              const Matrix& Sigma_e, bool empirical);

/// Covariance for budget J under the sweep rules above.
Matrix watermark_for_budget(const PlantModel& plant,
                            const ControllerSolution& ctrl,
                            const AttackModel& attack, double J,
                            const SweepOptions& opts);

}  // namespace wmqd
