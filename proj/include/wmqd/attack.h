#pragma once

#include "wmqd/linalg.h"
#include "wmqd/random.h"

namespace wmqd {

/// Stationary fake-observation generator z[k] = A_a z[k-1] + w_a,
/// w_a ~ N(0, Q_a), started from its stationary law N(0, E_zz0).
struct AttackModel {
  Matrix A_a;
  Matrix Q_a;
  Matrix E_zz0;  // solves E_zz0 = A_a E_zz0 A_a' + Q_a

  Eigen::Index m() const { return A_a.rows(); }
};

/// Throws InstabilityError if A_a is not strictly stable and ValidationError
/// if Q_a is not symmetric PSD.
AttackModel build_attack(const Matrix& A_a, const Matrix& Q_a);

/// Single-output shorthand: A_a = rho, Q_a = (1 - rho^2) sigma_z^2, so that
/// E[z_k^2] = sigma_z^2 and E[z_k z_{k-j}] = rho^j sigma_z^2.
AttackModel build_miso_attack(double rho, double sigma_z_sq);

/// Running generator. The first call to next() draws z from N(0, E_zz0),
/// independent of anything observed before the attack.
class AttackGenerator {
 public:
  explicit AttackGenerator(const AttackModel& model);

  Vector next(Rng& rng);
  bool started() const { return started_; }

 private:
  const AttackModel* model_;
  GaussianSampler stationary_;
  GaussianSampler innovation_;
  Vector z_;
  bool started_ = false;
};

/// z[k] = A_a z_prev + w_a with w_a drawn from N(0, Q_a).
Vector attack_step(const AttackModel& model, const Vector& z_prev, Rng& rng);

}  // namespace wmqd
