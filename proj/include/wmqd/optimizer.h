#pragma once

#include <string>
#include <vector>

#include "wmqd/attack.h"
#include "wmqd/control.h"

namespace wmqd {

enum class OptimizerVariant { kOptimalKld, kSuboptKld };

OptimizerVariant parse_optimizer_variant(const std::string& name);
std::string to_string(OptimizerVariant v);

struct OptimizerConfig {
  double budget_J = 1.0;
  OptimizerVariant variant = OptimizerVariant::kSuboptKld;
  int max_iterations = 200;
  double tolerance = 1e-8;  // on the tangent Lagrangian gradient, relative
  Vector initial_v;         // empty selects the generalized-eigen start
};

/// Rank-one watermark Sigma_e* = v v' maximizing a detection KLD subject to
/// tr(H Sigma_e) = J.
struct WatermarkDesign {
  Matrix Sigma_e_star;
  Vector v_lambda;
  double achieved_kld = 0.0;  // KLD of the targeted test at Sigma_e_star
  double kld_gain = 0.0;      // increase of that KLD over Sigma_e = 0
  double achieved_delta_lqg = 0.0;
  double mu = 0.0;            // constraint multiplier
  int iterations = 0;
  bool converged = true;
  std::vector<double> merit_history;  // 0.5 |grad_v L|^2 per iterate
};

/// H_KLD = B'(I - KC)' L_e (I - KC) B + B'C'CB, with
/// L_e = scriptA' L_e scriptA + A_cl' C'C A_cl.
Matrix h_kld(const PlantModel& plant, const ControllerSolution& ctrl);

/// Sensitivity of tr(Sigma_gamma^-1 Sigma_gamma_tilde) to Sigma_e: the same
/// structure as H_KLD with C'C replaced by C' Sigma_gamma^-1 C. The expected
/// optimal KLD is 0.5 tr(weighted_h_kld Sigma_e) plus a watermark-free
/// constant. For one output it equals H_KLD / sigma_gamma^2.
Matrix weighted_h_kld(const PlantModel& plant, const ControllerSolution& ctrl);

/// Closed-form maximizer of the expected optimal KLD: the top generalized
/// eigenvector of (weighted_h_kld, H), scaled onto the budget. When `attack`
/// is null, achieved_kld is left as NaN.
WatermarkDesign optimize_optimal(const PlantModel& plant,
                                 const ControllerSolution& ctrl, double J,
                                 const AttackModel* attack = nullptr);

/// Primal-dual iteration on the rank-one Lagrangian
///   L(v, mu) = -KLD(v v') + mu (v'Hv - J).
/// Iterates stay on the constraint and mu is the least-squares multiplier.
/// The primal step is a reduced Newton step where the Lagrangian Hessian is
/// positive definite on the constraint tangent space, and tangent ascent
/// otherwise; backtracking enforces a KLD increase, so the result is a local
/// maximizer. Handles both KLD variants. Hitting max_iterations returns the
/// last (best) iterate with converged = false.
WatermarkDesign optimize_subopt(const PlantModel& plant,
                                const ControllerSolution& ctrl,
                                const AttackModel& attack,
                                const OptimizerConfig& cfg);

/// Dispatches on cfg.variant to the closed form or the iterative solver.
WatermarkDesign optimize_watermark(const PlantModel& plant,
                                   const ControllerSolution& ctrl,
                                   const AttackModel& attack,
                                   const OptimizerConfig& cfg);

}  // namespace wmqd
