#include "wmqd/attack.h"

#include <cmath>

#include "wmqd/errors.h"

namespace wmqd {

AttackModel build_attack(const Matrix& A_a, const Matrix& Q_a) {
  linalg::require_square(A_a, "A_a");
  linalg::require_finite(A_a, "A_a");
  if (Q_a.rows() != A_a.rows() || Q_a.cols() != A_a.cols()) {
    throw ValidationError("attack: A_a and Q_a must both be m x m");
  }
  linalg::require_psd(Q_a, "Q_a");
  linalg::require_stable(A_a, "A_a");
  return {A_a, Q_a, linalg::solve_dlyap(A_a, linalg::symmetrized(Q_a))};
}

AttackModel build_miso_attack(double rho, double sigma_z_sq) {
  if (!(std::abs(rho) < 1.0)) {
    throw InstabilityError("attack: |rho| must be < 1");
  }
  if (!(sigma_z_sq >= 0.0) || !std::isfinite(sigma_z_sq)) {
    throw ValidationError("attack: sigma_z^2 must be finite and >= 0");
  }
  return build_attack(Matrix::Constant(1, 1, rho),
                      Matrix::Constant(1, 1, (1.0 - rho * rho) * sigma_z_sq));
}

Vector attack_step(const AttackModel& model, const Vector& z_prev, Rng& rng) {
  if (z_prev.size() != model.m()) {
    throw ValidationError("attack_step: dimension mismatch");
  }
  return model.A_a * z_prev + linalg::psd_sqrt(model.Q_a) * rng.normal(model.m());
}

AttackGenerator::AttackGenerator(const AttackModel& model)
    : model_(&model),
      stationary_(model.E_zz0),
      innovation_(model.Q_a),
      z_(Vector::Zero(model.m())) {}

Vector AttackGenerator::next(Rng& rng) {
  if (!started_) {
    z_ = stationary_.sample(rng);
    started_ = true;
  } else {
    z_ = model_->A_a * z_ + innovation_.sample(rng);
  }
  return z_;
}

}  // namespace wmqd
