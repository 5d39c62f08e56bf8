#include "wmqd/optimizer.h"

#include <cmath>
#include <limits>

#include "wmqd/analysis.h"
#include "wmqd/errors.h"
#include "wmqd/watermark.h"

namespace wmqd {

namespace {

constexpr double kShrink = 0.5;
constexpr double kSufficientDecrease = 1e-4;

Matrix vec_to_mat(const Vector& x, Eigen::Index rows) {
  return Eigen::Map<const Matrix>(x.data(), rows, x.size() / rows);
}

Vector mat_to_vec(const Matrix& M) {
  return Eigen::Map<const Vector>(M.data(), M.size());
}

// The watermark enters Sigma_gamma_tilde through two linear maps of Sigma_e:
//   direct(S)  = C B S B' C'
//   filtered(S) = C A_cl X C'A_cl',  X = scriptA X scriptA' + G S G',
// G = (I - K C) B. Both are stored as m^2 x p^2 matrices acting on vec(S)
// for symmetric S.
struct WatermarkMaps {
  Eigen::Index m = 0;
  Eigen::Index p = 0;
  Matrix filtered;
  Matrix direct;

  Matrix apply_filtered(const Matrix& S) const {
    return vec_to_mat(filtered * mat_to_vec(S), m);
  }
  // Adjoint of `filtered` with respect to the trace inner product.
  Matrix adjoint_filtered(const Matrix& Y) const {
    return vec_to_mat(filtered.transpose() * mat_to_vec(Y), p);
  }
  Matrix adjoint_direct(const Matrix& Y) const {
    return vec_to_mat(direct.transpose() * mat_to_vec(Y), p);
  }
};

WatermarkMaps build_maps(const PlantModel& plant,
                         const ControllerSolution& ctrl) {
  WatermarkMaps w;
  w.m = plant.m();
  w.p = plant.p();
  const auto n = plant.n();
  const Matrix G = (Matrix::Identity(n, n) - ctrl.K * plant.C) * plant.B;
  const Matrix CA = plant.C * ctrl.A_cl;
  const Matrix CB = plant.C * plant.B;
  w.filtered.resize(w.m * w.m, w.p * w.p);
  w.direct.resize(w.m * w.m, w.p * w.p);
  for (Eigen::Index j = 0; j < w.p; ++j) {
    for (Eigen::Index i = 0; i < w.p; ++i) {
      // Only symmetric arguments are ever mapped, so each column is built
      // from the symmetric part of the basis matrix E_ij.
      Matrix E = Matrix::Zero(w.p, w.p);
      E(i, j) += 0.5;
      E(j, i) += 0.5;
      const Matrix X =
          linalg::solve_dlyap(ctrl.script_A, linalg::symmetrized(G * E * G.transpose()));
      w.filtered.col(i + j * w.p) = mat_to_vec(CA * X * CA.transpose());
      w.direct.col(i + j * w.p) = mat_to_vec(CB * E * CB.transpose());
    }
  }
  return w;
}

Matrix weighted_sensitivity(const WatermarkMaps& maps, const Matrix& Y) {
  return linalg::symmetrized(maps.adjoint_direct(Y) +
                             maps.adjoint_filtered(Y));
}

// KLD as a function of the rank-one factor v, Sigma_e = v v'.
class RankOneKld {
 public:
  RankOneKld(const PlantModel& plant, const ControllerSolution& ctrl,
             const AttackModel& attack, OptimizerVariant variant)
      : variant_(variant),
        maps_(build_maps(plant, ctrl)),
        m_(static_cast<double>(plant.m())) {
    const Matrix p0 = Matrix::Zero(plant.p(), plant.p());
    base_ = sigma_gamma_tilde(plant, ctrl, attack, p0);
    sg_inv_ = ctrl.Sigma_gamma.llt().solve(
        Matrix::Identity(plant.m(), plant.m()));
    Hw_ = weighted_sensitivity(maps_, sg_inv_);
    ld_sg_ = linalg::log_det_spd(ctrl.Sigma_gamma, "Sigma_gamma");
    if (variant_ == OptimizerVariant::kOptimalKld) {
      ld_qa_ = linalg::log_det_spd(attack.Q_a, "Q_a");
    }
  }

  double value(const Vector& v) const {
    const double lin = 0.5 * ((sg_inv_ * base_).trace() + v.dot(Hw_ * v));
    if (variant_ == OptimizerVariant::kOptimalKld) {
      return lin - 0.5 * m_ - 0.5 * (ld_qa_ - ld_sg_);
    }
    return lin - 0.5 * m_ - 0.5 * (log_det_D(v) - ld_sg_);
  }

  Vector gradient(const Vector& v) const {
    Vector g = Hw_ * v;
    if (variant_ == OptimizerVariant::kSuboptKld) {
      g -= maps_.adjoint_filtered(D_inv(v)) * v;
    }
    return g;
  }

  Matrix hessian(const Vector& v) const {
    Matrix Hs = Hw_;
    if (variant_ == OptimizerVariant::kSuboptKld) {
      const Matrix Di = D_inv(v);
      Hs -= maps_.adjoint_filtered(Di);
      const auto p = v.size();
      for (Eigen::Index k = 0; k < p; ++k) {
        Matrix dS = Matrix::Zero(p, p);
        dS.col(k) += v;
        dS.row(k) += v.transpose();
        const Matrix dD = maps_.apply_filtered(dS);
        Hs.col(k) += maps_.adjoint_filtered(Di * dD * Di) * v;
      }
    }
    return linalg::symmetrized(Hs);
  }

  const Matrix& weighted() const { return Hw_; }

 private:
  Matrix D(const Vector& v) const {
    return linalg::symmetrized(base_ +
                               maps_.apply_filtered(v * v.transpose()));
  }
  Matrix D_inv(const Vector& v) const {
    const Matrix Dv = D(v);
    return Dv.llt().solve(Matrix::Identity(Dv.rows(), Dv.cols()));
  }
  double log_det_D(const Vector& v) const {
    return linalg::log_det_spd(D(v), "Sigma_gamma_tilde - C B Sigma_e B' C'");
  }

  OptimizerVariant variant_;
  WatermarkMaps maps_;
  double m_;
  Matrix base_;  // Sigma_gamma_tilde at Sigma_e = 0
  Matrix sg_inv_;
  Matrix Hw_;
  double ld_sg_ = 0.0;
  double ld_qa_ = 0.0;
};

void fix_sign(Vector& v) {
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0.0) v = -v;
}

Vector onto_budget(const Vector& v, const Matrix& H, double J) {
  const double q = v.dot(H * v);
  if (!(q > 0.0)) throw NumericError("optimizer: iterate collapsed to zero");
  return v * std::sqrt(J / q);
}

// Orthonormal basis of {d : a'd = 0}.
Matrix tangent_basis(const Vector& a) {
  const auto p = a.size();
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix Q = qr.householderQ() * Matrix::Identity(p, p);
  return Q.rightCols(p - 1);
}

double least_squares_mu(const Vector& grad_phi, const Vector& Hv) {
  // Minimizes |grad_phi + 2 mu Hv|.
  return -grad_phi.dot(Hv) / (2.0 * Hv.squaredNorm());
}

}  // namespace

OptimizerVariant parse_optimizer_variant(const std::string& name) {
  if (name == "optimal-kld" || name == "optimal") {
    return OptimizerVariant::kOptimalKld;
  }
  if (name == "subopt-kld" || name == "subopt") {
    return OptimizerVariant::kSuboptKld;
  }
  throw ParseError("unknown optimizer variant '" + name +
                   "' (expected optimal-kld or subopt-kld)");
}

std::string to_string(OptimizerVariant v) {
  return v == OptimizerVariant::kOptimalKld ? "optimal-kld" : "subopt-kld";
}

Matrix h_kld(const PlantModel& plant, const ControllerSolution& ctrl) {
  const auto n = plant.n();
  const Matrix CA = plant.C * ctrl.A_cl;
  const Matrix CB = plant.C * plant.B;
  const Matrix Le = linalg::solve_dlyap(
      ctrl.script_A.transpose(), linalg::symmetrized(CA.transpose() * CA));
  const Matrix G = (Matrix::Identity(n, n) - ctrl.K * plant.C) * plant.B;
  return linalg::symmetrized(G.transpose() * Le * G + CB.transpose() * CB);
}

Matrix weighted_h_kld(const PlantModel& plant, const ControllerSolution& ctrl) {
  const auto n = plant.n();
  const Matrix Sinv = ctrl.Sigma_gamma.llt().solve(
      Matrix::Identity(plant.m(), plant.m()));
  const Matrix CA = plant.C * ctrl.A_cl;
  const Matrix CB = plant.C * plant.B;
  const Matrix Le = linalg::solve_dlyap(
      ctrl.script_A.transpose(),
      linalg::symmetrized(CA.transpose() * Sinv * CA));
  const Matrix G = (Matrix::Identity(n, n) - ctrl.K * plant.C) * plant.B;
  return linalg::symmetrized(G.transpose() * Le * G +
                             CB.transpose() * Sinv * CB);
}

WatermarkDesign optimize_optimal(const PlantModel& plant,
                                 const ControllerSolution& ctrl, double J,
                                 const AttackModel* attack) {
  if (!(J > 0.0) || !std::isfinite(J)) {
    throw ValidationError("watermark budget J must be > 0");
  }
  const LqgPenalty pen = lqg_sensitivity(plant, ctrl);
  const Matrix Hw = weighted_h_kld(plant, ctrl);
  const auto top = linalg::top_generalized_eigenpair(Hw, pen.H);
  if (!(top.value > 1e-14 * std::max(1.0, linalg::max_abs(Hw)))) {
    throw ValidationError(
        "KLD sensitivity is zero: watermarking cannot improve detection");
  }
  WatermarkDesign d;
  d.v_lambda = onto_budget(top.vector, pen.H, J);
  d.Sigma_e_star = d.v_lambda * d.v_lambda.transpose();
  d.kld_gain = 0.5 * d.v_lambda.dot(Hw * d.v_lambda);
  d.achieved_delta_lqg = (pen.H * d.Sigma_e_star).trace();
  d.mu = 0.5 * top.value;
  d.achieved_kld = attack ? expected_kld_optimal(
                                ctrl, *attack,
                                sigma_gamma_tilde(plant, ctrl, *attack,
                                                  d.Sigma_e_star))
                          : std::numeric_limits<double>::quiet_NaN();
  return d;
}

WatermarkDesign optimize_subopt(const PlantModel& plant,
                                const ControllerSolution& ctrl,
                                const AttackModel& attack,
                                const OptimizerConfig& cfg) {
  const double J = cfg.budget_J;
  if (!(J > 0.0) || !std::isfinite(J)) {
    throw ValidationError("watermark budget J must be > 0");
  }
  if (cfg.max_iterations < 1) {
    throw ValidationError("optimizer max_iterations must be >= 1");
  }
  const auto p = plant.p();
  const Matrix H = lqg_sensitivity(plant, ctrl).H;
  const RankOneKld kld(plant, ctrl, attack, cfg.variant);

  Vector v;
  if (cfg.initial_v.size() == 0) {
    v = linalg::top_generalized_eigenpair(kld.weighted(), H).vector;
  } else {
    if (cfg.initial_v.size() != p) {
      throw ValidationError("optimizer initial_v must have p entries");
    }
    v = cfg.initial_v;
  }
  v = onto_budget(v, H, J);

  // Iterates stay on the budget ellipse v'Hv = J. The multiplier is the
  // least-squares fit of the stationarity condition, and the primal step is a
  // reduced Newton step when the Lagrangian Hessian is positive definite on
  // the tangent space, otherwise tangent ascent (or negative curvature at a
  // saddle). Every accepted step increases the KLD.
  auto lagrangian_grad = [&](const Vector& x, double mu) -> Vector {
    return -kld.gradient(x) + 2.0 * mu * (H * x);
  };
  auto retract = [&](const Vector& x) { return onto_budget(x, H, J); };

  double mu = 0.0;
  bool converged = false;
  int it = 0;
  std::vector<double> merits;
  double f = kld.value(v);

  for (; it < cfg.max_iterations; ++it) {
    const Vector g = kld.gradient(v);
    const Vector Hv = H * v;
    mu = least_squares_mu(-g, Hv);
    const Vector gL = lagrangian_grad(v, mu);
    merits.push_back(0.5 * gL.squaredNorm());
    if (p == 1) {
      converged = true;
      break;
    }

    const Matrix Z = tangent_basis(Hv);
    const Matrix hess_L = -kld.hessian(v) + 2.0 * mu * H;
    Eigen::SelfAdjointEigenSolver<Matrix> es(
        linalg::symmetrized(Z.transpose() * hess_L * Z));
    const Vector& lam = es.eigenvalues();
    const double curv_scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    const bool positive = lam(0) > 1e-9 * curv_scale;
    const Vector reduced = Z.transpose() * gL;  // gradient of -KLD on tangent

    if (reduced.norm() <= cfg.tolerance * std::max(1.0, g.norm())) {
      if (lam(0) >= -1e-9 * curv_scale) {
        converged = true;
        break;
      }
    }

    Vector d;
    if (positive) {
      d = -Z * es.eigenvectors() *
          (es.eigenvectors().transpose() * reduced).cwiseQuotient(lam);
    } else if (reduced.norm() > cfg.tolerance * std::max(1.0, g.norm())) {
      d = -Z * reduced;
      d *= v.norm() / d.norm();
    } else {
      d = Z * es.eigenvectors().col(0) * v.norm();
    }
    const double slope = g.dot(d);  // directional derivative of the KLD

    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt, t *= kShrink) {
      const Vector trial = retract(v + t * d);
      const double f_try = kld.value(trial);
      if (f_try > f + kSufficientDecrease * t * std::max(slope, 0.0)) {
        v = trial;
        f = f_try;
        moved = true;
        break;
      }
    }
    if (!moved) {
      // No ascent left along any admissible direction at working precision.
      converged = reduced.norm() <= 1e-6 * std::max(1.0, g.norm());
      break;
    }
  }

  WatermarkDesign d;
  d.v_lambda = retract(v);
  d.mu = mu;
  fix_sign(d.v_lambda);
  d.converged = converged;
  d.iterations = it;
  d.merit_history = std::move(merits);
  d.Sigma_e_star = d.v_lambda * d.v_lambda.transpose();
  d.achieved_delta_lqg = (H * d.Sigma_e_star).trace();
  const Matrix sgt = sigma_gamma_tilde(plant, ctrl, attack, d.Sigma_e_star);
  const Matrix zero = Matrix::Zero(p, p);
  const Matrix sgt0 = sigma_gamma_tilde(plant, ctrl, attack, zero);
  if (cfg.variant == OptimizerVariant::kOptimalKld) {
    d.achieved_kld = expected_kld_optimal(ctrl, attack, sgt);
    d.kld_gain = d.achieved_kld - expected_kld_optimal(ctrl, attack, sgt0);
  } else {
    d.achieved_kld = kld_suboptimal(plant, ctrl, sgt, d.Sigma_e_star);
    d.kld_gain = d.achieved_kld - kld_suboptimal(plant, ctrl, sgt0, zero);
  }
  return d;
}

WatermarkDesign optimize_watermark(const PlantModel& plant,
                                   const ControllerSolution& ctrl,
                                   const AttackModel& attack,
                                   const OptimizerConfig& cfg) {
  if (cfg.variant == OptimizerVariant::kOptimalKld) {
    return optimize_optimal(plant, ctrl, cfg.budget_J, &attack);
  }
  return optimize_subopt(plant, ctrl, attack, cfg);
}

}  // namespace wmqd
