#include "wmqd/watermark.h"

#include "wmqd/errors.h"

namespace wmqd {

void WatermarkSpec::validate(Eigen::Index p) const {
  if (Sigma_e.rows() != p || Sigma_e.cols() != p) {
    throw ValidationError("watermark: Sigma_e must be p x p (p = " +
                          std::to_string(p) + ")");
  }
  linalg::require_finite(Sigma_e, "Sigma_e");
  linalg::require_psd(Sigma_e, "Sigma_e");
}

LqgPenalty lqg_sensitivity(const PlantModel& plant,
                           const ControllerSolution& ctrl) {
  LqgPenalty out;
  const Matrix Lt = ctrl.L.transpose();
  out.Sigma_L = linalg::solve_dlyap(
      ctrl.A_cl.transpose(), linalg::symmetrized(Lt * plant.U * ctrl.L + plant.W));
  out.H = linalg::symmetrized(plant.B.transpose() * out.Sigma_L * plant.B +
                              plant.U);
  return out;
}

LqgPenalty delta_lqg(const PlantModel& plant, const ControllerSolution& ctrl,
                     const Matrix& Sigma_e) {
  WatermarkSpec{Sigma_e}.validate(plant.p());
  LqgPenalty out = lqg_sensitivity(plant, ctrl);
  out.delta_lqg = (out.H * Sigma_e).trace();
  return out;
}

Vector sample_watermark(const WatermarkSpec& spec, Rng& rng) {
  return GaussianSampler(spec.Sigma_e).sample(rng);
}

Matrix equal_power_watermark(const Matrix& H, double J) {
  if (!(J >= 0.0)) throw ValidationError("watermark budget must be >= 0");
  const double tr = H.trace();
  if (!(tr > 0.0)) throw ValidationError("LQG sensitivity H has zero trace");
  return Matrix::Identity(H.rows(), H.cols()) * (J / tr);
}

}  // namespace wmqd
