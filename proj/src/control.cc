#include "wmqd/control.h"

#include <string>

#include "wmqd/errors.h"

namespace wmqd {

namespace {

void require_pd_diagonal(const Matrix& M, std::string_view name) {
  linalg::require_square(M, name);
  const Matrix off = M - Matrix(M.diagonal().asDiagonal());
  if (linalg::max_abs(off) != 0.0 || !(M.diagonal().minCoeff() > 0.0)) {
    throw ValidationError(std::string(name) +
                          " must be a positive definite diagonal matrix");
  }
}

}  // namespace

void PlantModel::validate() const {
  linalg::require_square(A, "A");
  const auto nx = n();
  if (B.rows() != nx || C.cols() != nx || B.cols() == 0 || C.rows() == 0) {
    throw ValidationError("plant: B must have n rows and C must have n columns");
  }
  if (Q.rows() != nx || Q.cols() != nx) {
    throw ValidationError("plant: Q must be n x n");
  }
  if (R.rows() != m() || R.cols() != m()) {
    throw ValidationError("plant: R must be m x m");
  }
  if (W.rows() != nx || W.cols() != nx) {
    throw ValidationError("plant: W must be n x n");
  }
  if (U.rows() != p() || U.cols() != p()) {
    throw ValidationError("plant: U must be p x p");
  }
  for (const auto* M : {&A, &B, &C}) linalg::require_finite(*M, "plant matrix");
  linalg::require_psd(Q, "Q");
  linalg::require_pd(R, "R");
  require_pd_diagonal(W, "W");
  require_pd_diagonal(U, "U");
}

ControllerSolution build_lqg(const PlantModel& plant) {
  plant.validate();
  ControllerSolution c;
  c.A = plant.A;
  c.B = plant.B;
  c.C = plant.C;

  c.P = linalg::solve_dare(plant.A, plant.C, plant.Q, plant.R);
  c.Sigma_gamma =
      linalg::symmetrized(plant.C * c.P * plant.C.transpose() + plant.R);
  c.K = c.Sigma_gamma.llt()
            .solve(plant.C * c.P.transpose())
            .transpose();  // P C' Sigma_gamma^-1

  c.S = linalg::solve_dare(plant.A.transpose(), plant.B.transpose(), plant.W,
                           plant.U);
  const Matrix BtS = plant.B.transpose() * c.S;
  c.L = -(BtS * plant.B + plant.U).llt().solve(BtS * plant.A);

  const auto n = plant.n();
  c.A_cl = plant.A + plant.B * c.L;
  c.script_A = (Matrix::Identity(n, n) - c.K * plant.C) * c.A_cl;

  const double rho_cl = linalg::spectral_radius(c.A_cl);
  if (!(rho_cl < 1.0)) {
    throw SolverError("build_lqg: A + B L is not strictly stable (spectral "
                      "radius " + std::to_string(rho_cl) + ")");
  }
  const double rho_f = linalg::spectral_radius(c.script_A);
  if (!(rho_f < 1.0)) {
    throw SolverError("build_lqg: (I - K C)(A + B L) is not strictly stable "
                      "(spectral radius " + std::to_string(rho_f) + ")");
  }
  return c;
}

FilterStep kf_step(const ControllerSolution& ctrl, const Vector& x_hat_prev,
                   const Vector& u_prev, const Vector& obs) {
  if (x_hat_prev.size() != ctrl.A.rows() || u_prev.size() != ctrl.B.cols() ||
      obs.size() != ctrl.C.rows()) {
    throw ValidationError("kf_step: dimension mismatch");
  }
  FilterStep out;
  Vector predicted = ctrl.A * x_hat_prev + ctrl.B * u_prev;
  out.innovation = obs - ctrl.C * predicted;
  out.x_hat = predicted + ctrl.K * out.innovation;
  return out;
}

double stationary_lqg_cost(const PlantModel& plant,
                           const ControllerSolution& ctrl,
                           const Matrix& Sigma_e) {
  const auto n = plant.n();
  const auto m = plant.m();
  const auto p = plant.p();
  if (Sigma_e.rows() != p || Sigma_e.cols() != p) {
    throw ValidationError("stationary_lqg_cost: Sigma_e must be p x p");
  }
  // xi[k] = [x[k]; x_hat[k|k]]
  //   x[k+1]       = A x + B L x_hat + B e + w
  //   x_hat[k+1]   = K C A x + (A + B L - K C A) x_hat + B e + K C w + K v
  const Matrix KCA = ctrl.K * plant.C * plant.A;
  Matrix F(2 * n, 2 * n);
  F << plant.A, plant.B * ctrl.L, KCA, ctrl.A_cl - KCA;

  Matrix G = Matrix::Zero(2 * n, n + m + p);
  G.block(0, 0, n, n).setIdentity();
  G.block(0, n + m, n, p) = plant.B;
  G.block(n, 0, n, n) = ctrl.K * plant.C;
  G.block(n, n, n, m) = ctrl.K;
  G.block(n, n + m, n, p) = plant.B;

  Matrix noise = Matrix::Zero(n + m + p, n + m + p);
  noise.block(0, 0, n, n) = plant.Q;
  noise.block(n, n, m, m) = plant.R;
  noise.block(n + m, n + m, p, p) = Sigma_e;

  const Matrix X =
      linalg::solve_dlyap(F, linalg::symmetrized(G * noise * G.transpose()));
  const Matrix Sxx = X.topLeftCorner(n, n);
  const Matrix Shh = X.bottomRightCorner(n, n);
  return (plant.W * Sxx).trace() +
         (plant.U * (ctrl.L * Shh * ctrl.L.transpose() + Sigma_e)).trace();
}

}  // namespace wmqd
