#pragma once

#include "wmqd/linalg.h"
#include "wmqd/random.h"

namespace wmqd {

/// Linear Gaussian plant with LQG weights:
///   x[k+1] = A x[k] + B u[k] + w[k],  w ~ N(0, Q)
///   y[k]   = C x[k] + v[k],           v ~ N(0, R)
/// and cost weights W (state) and U (input).
struct PlantModel {
  Matrix A, B, C, Q, R, W, U;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index p() const { return B.cols(); }
  Eigen::Index m() const { return C.rows(); }

  /// Throws ValidationError on inconsistent dimensions, R not PD, Q not PSD,
  /// or W/U not positive definite diagonal.
  void validate() const;
};

/// Steady-state Kalman filter and LQG controller for a PlantModel.
struct ControllerSolution {
  Matrix P;            // prediction error covariance
  Matrix K;            // Kalman gain P C' (C P C' + R)^-1
  Matrix S;            // control Riccati solution
  Matrix L;            // feedback gain, u* = L x_hat[k|k]
  Matrix Sigma_gamma;  // innovation covariance C P C' + R
  Matrix A_cl;         // A + B L
  Matrix script_A;     // (I - K C)(A + B L)

  // Copies of the plant matrices the filter needs at run time.
  Matrix A, B, C;
};

/// Synthesizes the steady-state filter and controller. Throws SolverError if
/// a Riccati equation does not converge or the closed loop (A + B L, or the
/// filter-in-the-loop matrix) is not strictly stable.
ControllerSolution build_lqg(const PlantModel& plant);

struct FilterStep {
  Vector x_hat;       // x_hat[k|k]
  Vector innovation;  // obs - C x_hat[k|k-1]
};

/// One Kalman filter update driven by whatever observation stream arrives
/// (true or fake).
FilterStep kf_step(const ControllerSolution& ctrl, const Vector& x_hat_prev,
                   const Vector& u_prev, const Vector& obs);

/// Process and measurement noise generators for a plant.
class PlantNoise {
 public:
  explicit PlantNoise(const PlantModel& plant)
      : process_(plant.Q), measurement_(plant.R) {}

  Vector process(Rng& rng) const { return process_.sample(rng); }
  Vector measurement(Rng& rng) const { return measurement_.sample(rng); }

 private:
  GaussianSampler process_;
  GaussianSampler measurement_;
};

/// Stationary average cost E[x'Wx + u'Uu] of the loop u = L x_hat[k|k] + e,
/// e ~ N(0, Sigma_e) iid, from the joint stationary covariance of
/// (x, x_hat[k|k]). Sigma_e = 0 gives the optimal LQG cost.
double stationary_lqg_cost(const PlantModel& plant,
                           const ControllerSolution& ctrl,
                           const Matrix& Sigma_e);

}  // namespace wmqd
