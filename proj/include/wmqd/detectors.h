#pragma once

#include <memory>
#include <optional>
#include <string>

#include "wmqd/attack.h"
#include "wmqd/control.h"
#include "wmqd/random.h"

namespace wmqd {

enum class DetectorVariant { kOptimalCusum, kSuboptCusum, kNeymanPearson };

DetectorVariant parse_detector_variant(const std::string& name);
std::string to_string(DetectorVariant v);

struct DetectorConfig {
  DetectorVariant variant = DetectorVariant::kOptimalCusum;
  double arl_h = 1000.0;
  double np_alpha = 0.0;  // 0 selects 1 / arl_h
  std::optional<double> np_eta;

  double alpha() const { return np_alpha > 0.0 ? np_alpha : 1.0 / arl_h; }
  void validate() const;
};

/// Per-trial mutable state. The detector runs its own copy of the Kalman
/// filter on the observation stream it receives.
struct DetectorState {
  double statistic = 0.0;
  Vector x_hat;     // x_hat[k-1|k-1]
  Vector prev_obs;  // observation at k-1
  Vector f;         // watermark convolution state (Neyman-Pearson only)
  std::optional<long> alarm_time;
  long k = 0;       // index of the next observation
};

struct DetectorStep {
  double increment = 0.0;  // log-likelihood ratio (CUSUM) or g_NP
  double statistic = 0.0;
  bool alarm = false;
};

/// Immutable detector model shared between trials. update() advances one
/// state by one sample: `obs` is the observation at time k and `e_prev` the
/// watermark applied at k-1.
class Detector {
 public:
  virtual ~Detector() = default;

  virtual DetectorVariant variant() const = 0;
  double threshold() const { return threshold_; }

  /// Starts a trial at time k with filter estimate x_hat[k-1|k-1] and the
  /// observation at k-1.
  DetectorState start(long k, const Vector& x_hat_prev,
                      const Vector& prev_obs) const;

  DetectorStep update(DetectorState& s, const Vector& obs,
                      const Vector& e_prev) const;

 protected:
  Detector(const ControllerSolution& ctrl, double threshold)
      : ctrl_(ctrl), threshold_(threshold) {}

  // Per-step quantity from the innovation at k and the pre-update state.
  virtual double increment(DetectorState& s, const Vector& innovation,
                           const Vector& e_prev) const = 0;
  virtual bool cumulative() const { return true; }

  ControllerSolution ctrl_;
  double threshold_;
};

/// CUSUM on the conditional density of the innovation given the past
/// observations and watermark: N(mu_k, Q_a) under attack, N(0, Sigma_gamma)
/// otherwise, with mu_k = A_a y[k-1] - C (A + B L) x_hat[k-1|k-1] - C B e[k-1].
class OptimalCusum final : public Detector {
 public:
  OptimalCusum(const ControllerSolution& ctrl, const AttackModel& attack,
               double arl_h);
  DetectorVariant variant() const override {
    return DetectorVariant::kOptimalCusum;
  }

 private:
  double increment(DetectorState& s, const Vector& innovation,
                   const Vector& e_prev) const override;

  Matrix A_a_;
  Matrix CA_cl_;
  Matrix CB_;
  linalg::GaussianLogDensity attacked_;
  linalg::GaussianLogDensity nominal_;
};

/// CUSUM on the stationary joint density of [innovation; e[k-1]]. The
/// watermark block lives in the range of Sigma_e, so rank-deficient
/// watermarks are handled by projecting e onto that subspace.
class SuboptCusum final : public Detector {
 public:
  SuboptCusum(const PlantModel& plant, const ControllerSolution& ctrl,
              const Matrix& Sigma_gamma_tilde, const Matrix& Sigma_e,
              double arl_h);
  DetectorVariant variant() const override {
    return DetectorVariant::kSuboptCusum;
  }

 private:
  double increment(DetectorState& s, const Vector& innovation,
                   const Vector& e_prev) const override;

  Matrix basis_;   // p x r orthonormal basis of range(Sigma_e)
  Vector lambda_;  // nonzero eigenvalues of Sigma_e
  linalg::GaussianLogDensity attacked_;
  linalg::GaussianLogDensity nominal_;
};

/// Per-step Neyman-Pearson test
///   g = gamma' Sigma_gamma^-1 gamma
///       - (gamma - mu)' (Sigma_gamma + Sigma_f)^-1 (gamma - mu),
/// mu = -C f, f[k] = scriptA f[k-1] + B e[k-1]. Alarms when g >= eta.
class NpDetector final : public Detector {
 public:
  NpDetector(const PlantModel& plant, const ControllerSolution& ctrl,
             const Matrix& Sigma_e, double eta);
  DetectorVariant variant() const override {
    return DetectorVariant::kNeymanPearson;
  }
  const Matrix& Sigma_f() const { return Sigma_f_; }

 private:
  double increment(DetectorState& s, const Vector& innovation,
                   const Vector& e_prev) const override;
  bool cumulative() const override { return false; }

  Matrix B_;
  Matrix Sigma_f_;
  Eigen::LLT<Matrix> nominal_;
  Eigen::LLT<Matrix> widened_;
};

struct NpCalibration {
  long steps = 1000000;
  long burn_in = 200;
};

/// Empirical (1 - alpha) quantile of g_NP over a no-attack closed-loop run.
/// Requires at least 100 / alpha samples.
double np_calibrate(const PlantModel& plant, const ControllerSolution& ctrl,
                    const Matrix& Sigma_e, double alpha, Rng& rng,
                    const NpCalibration& opts = {});

/// Builds the configured detector. The Neyman-Pearson variant requires
/// cfg.np_eta to be set (see np_calibrate).
std::unique_ptr<Detector> make_detector(const DetectorConfig& cfg,
                                        const PlantModel& plant,
                                        const ControllerSolution& ctrl,
                                        const AttackModel& attack,
                                        const Matrix& Sigma_e);

}  // namespace wmqd
