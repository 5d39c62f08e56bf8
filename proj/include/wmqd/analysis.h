#pragma once

#include "wmqd/attack.h"
#include "wmqd/control.h"

namespace wmqd {

/// Cross-covariance E[x_hat[k-1|k-1] z[k]'] of the stationary filter state
/// driven by fake observations:
///   E_xz(-1) = sum_i scriptA^i K E_zz0 (A_a')^(i+1).
/// Uses the eigen-decomposed closed form when both scriptA and A_a' have
/// well-conditioned eigenvector matrices, the truncated series otherwise.
Matrix exz_minus1(const ControllerSolution& ctrl, const AttackModel& attack);

/// The series above summed until the newest term is below rel_tail times the
/// running sum. Throws ConvergenceError after max_terms terms.
Matrix exz_minus1_series(const ControllerSolution& ctrl,
                         const AttackModel& attack, double rel_tail = 1e-12,
                         long max_terms = 1000000);

/// Stationary covariance of the innovation once the observations are fake,
/// together with the intermediate quantities it is assembled from.
struct InnovationCovariance {
  Matrix Sigma_gamma_tilde;
  Matrix E_xz;       // E_xz(-1)
  Matrix Sigma_xFz;  // filter-state covariance driven by z
  Matrix Sigma_xFe;  // filter-state covariance driven by the watermark
};

InnovationCovariance innovation_covariance(const PlantModel& plant,
                                           const ControllerSolution& ctrl,
                                           const AttackModel& attack,
                                           const Matrix& Sigma_e);

Matrix sigma_gamma_tilde(const PlantModel& plant,
                         const ControllerSolution& ctrl,
                         const AttackModel& attack, const Matrix& Sigma_e);

/// Expected per-step KLD seen by the optimal CUSUM test:
///   0.5 (tr(Sigma_gamma^-1 Sigma_gamma_tilde) - m - ln(|Q_a| / |Sigma_gamma|)).
/// Q_a must be positive definite.
double expected_kld_optimal(const ControllerSolution& ctrl,
                            const AttackModel& attack,
                            const Matrix& Sigma_gamma_tilde);

/// KLD between the joint stationary laws of (innovation, previous watermark)
/// with and without attack: the log-determinant term uses
/// Sigma_gamma_tilde - C B Sigma_e B' C'.
double kld_suboptimal(const PlantModel& plant, const ControllerSolution& ctrl,
                      const Matrix& Sigma_gamma_tilde, const Matrix& Sigma_e);

/// Expected KLD at step k of an optimal test that conditions on past
/// innovations only (not on the watermark). Requires k >= 3.
double kld_innovation_only(const PlantModel& plant,
                           const ControllerSolution& ctrl,
                           const AttackModel& attack, const Matrix& Sigma_e,
                           int k);

/// Single-output specialization with A_a = rho, Q_a = (1 - rho^2) sigma_z^2.
struct MisoAnalysis {
  double M_z = 0.0;
  Matrix M_e;  // p x p; equals the KLD sensitivity H_KLD
  double sigma_gamma_sq = 0.0;
  double sigma_gamma_tilde_sq = 0.0;
  double sigma_z_star_opt = 0.0;     // attacker power minimizing the optimal KLD
  double sigma_z_star_subopt = 0.0;  // same for the sub-optimal KLD
  double kld_optimal = 0.0;
  double kld_suboptimal = 0.0;
};

MisoAnalysis miso_analysis(const PlantModel& plant,
                           const ControllerSolution& ctrl, double rho,
                           double sigma_z_sq, const Matrix& Sigma_e);

/// ln(arl_h) / kld. Throws UndetectableAttackError when kld <= 0.
double predict_sadd(double kld, double arl_h);

struct KldReport {
  Matrix Sigma_gamma_tilde;
  double expected_kld_optimal = 0.0;
  double kld_suboptimal = 0.0;
  double optimality_gap = 0.0;
  double delta_lqg = 0.0;
  double sadd_pred_optimal = 0.0;
  double sadd_pred_suboptimal = 0.0;
  double arl_h = 0.0;
};

KldReport analyze(const PlantModel& plant, const ControllerSolution& ctrl,
                  const AttackModel& attack, const Matrix& Sigma_e,
                  double arl_h);

}  // namespace wmqd
