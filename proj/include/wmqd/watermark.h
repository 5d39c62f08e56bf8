#pragma once

#include "wmqd/control.h"
#include "wmqd/random.h"

namespace wmqd {

/// iid watermark e[k] ~ N(0, Sigma_e) added to the LQG input.
struct WatermarkSpec {
  Matrix Sigma_e;

  /// Throws ValidationError unless Sigma_e is a symmetric PSD p x p matrix.
  void validate(Eigen::Index p) const;
};

/// Cost of watermarking: the stationary LQG cost rises by tr(H Sigma_e),
/// with H = B' Sigma_L B + U and Sigma_L = A_cl' Sigma_L A_cl + L'UL + W.
struct LqgPenalty {
  Matrix H;
  Matrix Sigma_L;
  double delta_lqg = 0.0;
};

/// H and Sigma_L only; independent of the watermark.
LqgPenalty lqg_sensitivity(const PlantModel& plant,
                           const ControllerSolution& ctrl);

LqgPenalty delta_lqg(const PlantModel& plant, const ControllerSolution& ctrl,
                     const Matrix& Sigma_e);

class WatermarkGenerator {
 public:
  explicit WatermarkGenerator(const WatermarkSpec& spec)
      : sampler_(spec.Sigma_e) {}

  /// Consumes exactly p standard normals, including when Sigma_e = 0.
  Vector sample(Rng& rng) const { return sampler_.sample(rng); }

 private:
  GaussianSampler sampler_;
};

Vector sample_watermark(const WatermarkSpec& spec, Rng& rng);

/// Diagonal Sigma_e = s I scaled so that tr(H Sigma_e) = J.
Matrix equal_power_watermark(const Matrix& H, double J);

}  // namespace wmqd
