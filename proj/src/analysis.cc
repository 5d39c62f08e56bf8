#include "wmqd/analysis.h"

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/SVD>

#include "wmqd/errors.h"
#include "wmqd/watermark.h"

namespace wmqd {

namespace {

constexpr double kMaxEigenvectorCondition = 1e8;

double condition_number(const Eigen::MatrixXcd& V) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

// Returns false when either eigenvector basis is too ill-conditioned.
bool exz_eigen_form(const Matrix& F, const Matrix& M, const Matrix& Aat,
                    Matrix& out) {
  const auto ef = linalg::eigen_decompose(F);
  const auto ea = linalg::eigen_decompose(Aat);
  if (condition_number(ef.vectors) >= kMaxEigenvectorCondition ||
      condition_number(ea.vectors) >= kMaxEigenvectorCondition) {
    return false;
  }
  const Eigen::PartialPivLU<Eigen::MatrixXcd> Uf(ef.vectors);
  const Eigen::PartialPivLU<Eigen::MatrixXcd> Ua(ea.vectors);
  Eigen::MatrixXcd T = Uf.solve(M.cast<std::complex<double>>()) * ea.vectors;
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    for (Eigen::Index j = 0; j < T.cols(); ++j) {
      T(i, j) /= 1.0 - ef.values(i) * ea.values(j);
    }
  }
  const Eigen::MatrixXcd X = ef.vectors * T * Ua.inverse();
  const double scale = X.cwiseAbs().maxCoeff();
  if (X.imag().cwiseAbs().maxCoeff() > 1e-8 * std::max(scale, 1e-300)) {
    throw NumericError("E_xz(-1): eigen form left a non-negligible imaginary "
                       "part");
  }
  out = X.real();
  return true;
}

void require_sizes(const ControllerSolution& ctrl, const AttackModel& attack) {
  if (attack.m() != ctrl.C.rows()) {
    throw ValidationError("attack model dimension (" +
                          std::to_string(attack.m()) +
                          ") does not match the number of outputs (" +
                          std::to_string(ctrl.C.rows()) + ")");
  }
}

}  // namespace

Matrix exz_minus1_series(const ControllerSolution& ctrl,
                         const AttackModel& attack, double rel_tail,
                         long max_terms) {
  require_sizes(ctrl, attack);
  const Matrix Aat = attack.A_a.transpose();
  Matrix term = ctrl.K * attack.E_zz0 * Aat;
  Matrix sum = Matrix::Zero(term.rows(), term.cols());
  for (long i = 0; i < max_terms; ++i) {
    sum += term;
    const double tn = linalg::max_abs(term);
    if (tn <= rel_tail * linalg::max_abs(sum) || tn == 0.0) return sum;
    term = ctrl.script_A * term * Aat;
  }
  throw ConvergenceError("E_xz(-1): series did not converge within " +
                         std::to_string(max_terms) + " terms");
}

Matrix exz_minus1(const ControllerSolution& ctrl, const AttackModel& attack) {
  require_sizes(ctrl, attack);
  linalg::require_stable(ctrl.script_A, "(I - K C)(A + B L)");
  linalg::require_stable(attack.A_a, "A_a");
  const Matrix Aat = attack.A_a.transpose();
  const Matrix M = ctrl.K * attack.E_zz0 * Aat;
  Matrix X;
  if (exz_eigen_form(ctrl.script_A, M, Aat, X)) return X;
  return exz_minus1_series(ctrl, attack);
}

InnovationCovariance innovation_covariance(const PlantModel& plant,
                                           const ControllerSolution& ctrl,
                                           const AttackModel& attack,
                                           const Matrix& Sigma_e) {
  WatermarkSpec{Sigma_e}.validate(plant.p());
  InnovationCovariance out;
  const auto n = plant.n();
  const Matrix& F = ctrl.script_A;
  out.E_xz = exz_minus1(ctrl, attack);

  const Matrix FXK = F * out.E_xz * ctrl.K.transpose();
  out.Sigma_xFz = linalg::solve_dlyap(
      F, linalg::symmetrized(ctrl.K * attack.E_zz0 * ctrl.K.transpose() + FXK +
                             FXK.transpose()));
  const Matrix G = (Matrix::Identity(n, n) - ctrl.K * plant.C) * plant.B;
  out.Sigma_xFe =
      linalg::solve_dlyap(F, linalg::symmetrized(G * Sigma_e * G.transpose()));

  const Matrix CA = plant.C * ctrl.A_cl;
  const Matrix CB = plant.C * plant.B;
  const Matrix cross = CA * out.E_xz;
  out.Sigma_gamma_tilde = linalg::symmetrized(
      attack.E_zz0 - cross - cross.transpose() +
      CB * Sigma_e * CB.transpose() +
      CA * (out.Sigma_xFz + out.Sigma_xFe) * CA.transpose());
  return out;
}

Matrix sigma_gamma_tilde(const PlantModel& plant,
                         const ControllerSolution& ctrl,
                         const AttackModel& attack, const Matrix& Sigma_e) {
  return innovation_covariance(plant, ctrl, attack, Sigma_e).Sigma_gamma_tilde;
}

double expected_kld_optimal(const ControllerSolution& ctrl,
                            const AttackModel& attack,
                            const Matrix& Sigma_gamma_tilde) {
  require_sizes(ctrl, attack);
  const auto m = ctrl.Sigma_gamma.rows();
  Eigen::LLT<Matrix> qa(attack.Q_a);
  if (qa.info() != Eigen::Success ||
      !(qa.matrixLLT().diagonal().minCoeff() > 0.0)) {
    throw ValidationError(
        "Q_a must be positive definite for the optimal test; add a small "
        "multiple of the identity (Q_a + eps I) to regularize it");
  }
  const double tr =
      ctrl.Sigma_gamma.llt().solve(Sigma_gamma_tilde).trace();
  const double ld_qa = linalg::log_det_spd(attack.Q_a, "Q_a");
  const double ld_sg = linalg::log_det_spd(ctrl.Sigma_gamma, "Sigma_gamma");
  return 0.5 * (tr - static_cast<double>(m) - (ld_qa - ld_sg));
}

double kld_suboptimal(const PlantModel& plant, const ControllerSolution& ctrl,
                      const Matrix& Sigma_gamma_tilde, const Matrix& Sigma_e) {
  const auto m = ctrl.Sigma_gamma.rows();
  const Matrix CB = plant.C * plant.B;
  const Matrix D = linalg::symmetrized(Sigma_gamma_tilde -
                                       CB * Sigma_e * CB.transpose());
  const double tr =
      ctrl.Sigma_gamma.llt().solve(Sigma_gamma_tilde).trace();
  const double ld_d =
      linalg::log_det_spd(D, "Sigma_gamma_tilde - C B Sigma_e B' C'");
  const double ld_sg = linalg::log_det_spd(ctrl.Sigma_gamma, "Sigma_gamma");
  return 0.5 * (tr - static_cast<double>(m) - (ld_d - ld_sg));
}

double kld_innovation_only(const PlantModel& plant,
                           const ControllerSolution& ctrl,
                           const AttackModel& attack, const Matrix& Sigma_e,
                           int k) {
  if (k < 3) throw ValidationError("kld_innovation_only: k must be >= 3");
  linalg::require_stable(ctrl.A_cl, "A + B L");
  const auto n = plant.n();
  const auto m = plant.m();
  const auto p = plant.p();
  const Matrix& Acl = ctrl.A_cl;
  const Matrix& B = plant.B;
  const Matrix& C = plant.C;
  const Matrix Sgt = sigma_gamma_tilde(plant, ctrl, attack, Sigma_e);

  // Powers Acl^0 .. Acl^k and the watermark/innovation cross terms.
  std::vector<Matrix> Apow(k + 1);
  Apow[0] = Matrix::Identity(n, n);
  for (int i = 1; i <= k; ++i) Apow[i] = Acl * Apow[i - 1];
  std::vector<Matrix> Ege(k + 1, Matrix::Zero(m, p));
  {
    const Matrix G0 = (Matrix::Identity(n, n) - ctrl.K * C) * B * Sigma_e;
    Matrix Fpow = Matrix::Identity(n, n);  // scriptA^(j-2)
    for (int j = 2; j <= k; ++j) {
      Ege[j] = -C * Acl * Fpow * G0;
      Fpow = ctrl.script_A * Fpow;
    }
  }

  const Matrix D = attack.A_a * C - C * Acl;
  Matrix G = Matrix::Zero(n, n);
  for (int i = 2; i <= k - 1; ++i) {
    G += Apow[i - 1] * B * Sigma_e * B.transpose() * Apow[i - 1].transpose();
  }
  Matrix s1 = Matrix::Zero(n, n);
  Matrix s2 = Matrix::Zero(m, n);
  for (int j = 1; j <= k - 1; ++j) {
    const Matrix right = B.transpose() * Apow[j - 1].transpose();
    Matrix inner = Matrix::Zero(n, p);
    for (int i = 2; i <= j + 1; ++i) {
      inner += Apow[i - 1] * ctrl.K * Ege[j - i + 1];
    }
    s1 += inner * right;
    s2 += Ege[j] * right;
  }
  const Matrix E_mu = D * s1 * D.transpose() +
                      (attack.A_a - C * Acl * ctrl.K) * s2 * D.transpose();
  const Matrix CB = C * B;
  const Matrix S_cond = linalg::symmetrized(
      attack.Q_a + D * G * D.transpose() + CB * Sigma_e * CB.transpose());

  const double tr = ctrl.Sigma_gamma.llt()
                        .solve(Sgt - E_mu - E_mu.transpose())
                        .trace();
  const double ld_c =
      linalg::log_det_spd(S_cond, "innovation-only conditional covariance");
  const double ld_sg = linalg::log_det_spd(ctrl.Sigma_gamma, "Sigma_gamma");
  return 0.5 * (tr - static_cast<double>(m) - (ld_c - ld_sg));
}

MisoAnalysis miso_analysis(const PlantModel& plant,
                           const ControllerSolution& ctrl, double rho,
                           double sigma_z_sq, const Matrix& Sigma_e) {
  if (plant.m() != 1) {
    throw ValidationError("miso_analysis requires a single-output plant (m = 1)");
  }
  WatermarkSpec{Sigma_e}.validate(plant.p());
  const AttackModel attack = build_miso_attack(rho, sigma_z_sq);
  const auto n = plant.n();
  const Matrix& F = ctrl.script_A;
  const Matrix I = Matrix::Identity(n, n);
  const Matrix CA = plant.C * ctrl.A_cl;
  const Matrix CB = plant.C * plant.B;

  // (I - rho F)^-1 K rho
  const Matrix r = (I - rho * F).partialPivLu().solve(ctrl.K) * rho;
  const Matrix KKt = ctrl.K * ctrl.K.transpose();
  const Matrix FrK = F * r * ctrl.K.transpose();
  const Matrix Sz =
      linalg::solve_dlyap(F, linalg::symmetrized(KKt + FrK + FrK.transpose()));
  const Matrix Le = linalg::solve_dlyap(
      F.transpose(), linalg::symmetrized(CA.transpose() * CA));
  const Matrix Gm = (I - ctrl.K * plant.C) * plant.B;

  MisoAnalysis out;
  out.M_z = 1.0 - 2.0 * (CA * r)(0, 0) + (CA * Sz * CA.transpose())(0, 0);
  out.M_e = linalg::symmetrized(Gm.transpose() * Le * Gm +
                                CB.transpose() * CB);
  out.sigma_gamma_sq = ctrl.Sigma_gamma(0, 0);
  out.sigma_gamma_tilde_sq = out.M_z * sigma_z_sq + (out.M_e * Sigma_e).trace();
  out.sigma_z_star_opt = out.sigma_gamma_sq / out.M_z;
  out.sigma_z_star_subopt =
      (out.sigma_gamma_sq -
       ((out.M_e - CB.transpose() * CB) * Sigma_e).trace()) /
      out.M_z;

  const Matrix sgt = Matrix::Constant(1, 1, out.sigma_gamma_tilde_sq);
  out.kld_optimal = expected_kld_optimal(ctrl, attack, sgt);
  out.kld_suboptimal = kld_suboptimal(plant, ctrl, sgt, Sigma_e);
  return out;
}

double predict_sadd(double kld, double arl_h) {
  if (!(arl_h > 1.0)) throw ValidationError("arl_h must be > 1");
  if (!(kld > 0.0)) {
    throw UndetectableAttackError(
        "KLD is not positive; the attack leaves the monitored distribution "
        "unchanged and has no finite predicted delay");
  }
  return std::log(arl_h) / kld;
}

KldReport analyze(const PlantModel& plant, const ControllerSolution& ctrl,
                  const AttackModel& attack, const Matrix& Sigma_e,
                  double arl_h) {
  KldReport r;
  r.arl_h = arl_h;
  r.Sigma_gamma_tilde = sigma_gamma_tilde(plant, ctrl, attack, Sigma_e);
  r.expected_kld_optimal =
      expected_kld_optimal(ctrl, attack, r.Sigma_gamma_tilde);
  r.kld_suboptimal = kld_suboptimal(plant, ctrl, r.Sigma_gamma_tilde, Sigma_e);
  r.optimality_gap = r.expected_kld_optimal - r.kld_suboptimal;
  r.delta_lqg = delta_lqg(plant, ctrl, Sigma_e).delta_lqg;
  r.sadd_pred_optimal = predict_sadd(r.expected_kld_optimal, arl_h);
  r.sadd_pred_suboptimal = predict_sadd(r.kld_suboptimal, arl_h);
  return r;
}

}  // namespace wmqd
