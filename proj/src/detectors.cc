#include "wmqd/detectors.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "wmqd/analysis.h"
#include "wmqd/errors.h"
#include "wmqd/watermark.h"

namespace wmqd {

namespace {

double cusum_threshold(double arl_h) {
  if (!(arl_h > 1.0)) throw ValidationError("detector: arl_h must be > 1");
  return std::log(arl_h);
}

// Orthonormal basis of the range of a PSD matrix and its eigenvalues there.
void range_basis(const Matrix& Sigma, Matrix& basis, Vector& values) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetrized(Sigma));
  const Vector& lambda = es.eigenvalues();
  const double scale = lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > 1e-10 * scale && lambda(i) > 0.0) keep.push_back(i);
  }
  basis.resize(Sigma.rows(), static_cast<Eigen::Index>(keep.size()));
  values.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    basis.col(j) = es.eigenvectors().col(keep[j]);
    values(j) = lambda(keep[j]);
  }
}

}  // namespace

DetectorVariant parse_detector_variant(const std::string& name) {
  if (name == "optimal-cusum" || name == "optimal") {
    return DetectorVariant::kOptimalCusum;
  }
  if (name == "subopt-cusum" || name == "subopt") {
    return DetectorVariant::kSuboptCusum;
  }
  if (name == "np") return DetectorVariant::kNeymanPearson;
  throw ParseError("unknown detector variant '" + name +
                   "' (expected optimal-cusum, subopt-cusum or np)");
}

std::string to_string(DetectorVariant v) {
  switch (v) {
    case DetectorVariant::kOptimalCusum: return "optimal-cusum";
    case DetectorVariant::kSuboptCusum: return "subopt-cusum";
    case DetectorVariant::kNeymanPearson: return "np";
  }
  return "unknown";
}

void DetectorConfig::validate() const {
  if (!(arl_h > 1.0)) throw ValidationError("detector.arl_h must be > 1");
  if (!(np_alpha >= 0.0 && np_alpha < 1.0)) {
    throw ValidationError("detector.np_alpha must lie in [0, 1) (0 selects 1 / arl_h)");
  }
}

DetectorState Detector::start(long k, const Vector& x_hat_prev,
                              const Vector& prev_obs) const {
  if (x_hat_prev.size() != ctrl_.A.rows() ||
      prev_obs.size() != ctrl_.C.rows()) {
    throw ValidationError("detector start: dimension mismatch");
  }
  DetectorState s;
  s.x_hat = x_hat_prev;
  s.prev_obs = prev_obs;
  s.f = Vector::Zero(ctrl_.A.rows());
  s.k = k;
  return s;
}

DetectorStep Detector::update(DetectorState& s, const Vector& obs,
                              const Vector& e_prev) const {
  if (e_prev.size() != ctrl_.B.cols()) {
    throw ValidationError("detector update: watermark has wrong dimension");
  }
  const Vector u_prev = ctrl_.L * s.x_hat + e_prev;
  const FilterStep fs = kf_step(ctrl_, s.x_hat, u_prev, obs);
  DetectorStep out;
  out.increment = increment(s, fs.innovation, e_prev);
  if (!std::isfinite(out.increment)) {
    throw NumericError("detector statistic is not finite at k = " +
                       std::to_string(s.k));
  }
  s.statistic = cumulative() ? std::max(0.0, s.statistic + out.increment)
                             : out.increment;
  out.statistic = s.statistic;
  out.alarm = s.statistic >= threshold_;
  if (out.alarm && !s.alarm_time) s.alarm_time = s.k;
  s.x_hat = fs.x_hat;
  s.prev_obs = obs;
  ++s.k;
  return out;
}

OptimalCusum::OptimalCusum(const ControllerSolution& ctrl,
                           const AttackModel& attack, double arl_h)
    : Detector(ctrl, cusum_threshold(arl_h)),
      A_a_(attack.A_a),
      CA_cl_(ctrl.C * ctrl.A_cl),
      CB_(ctrl.C * ctrl.B),
      attacked_(attack.Q_a, "Q_a"),
      nominal_(ctrl.Sigma_gamma, "Sigma_gamma") {
  if (attack.m() != ctrl.C.rows()) {
    throw ValidationError("optimal CUSUM: attack dimension mismatch");
  }
}

double OptimalCusum::increment(DetectorState& s, const Vector& innovation,
                               const Vector& e_prev) const {
  const Vector mu = A_a_ * s.prev_obs - CA_cl_ * s.x_hat - CB_ * e_prev;
  return attacked_(innovation, mu) - nominal_(innovation);
}

namespace {

Matrix joint_nominal(const Matrix& Sigma_gamma, const Vector& lambda) {
  const auto m = Sigma_gamma.rows();
  const auto r = lambda.size();
  Matrix J = Matrix::Zero(m + r, m + r);
  J.topLeftCorner(m, m) = Sigma_gamma;
  J.bottomRightCorner(r, r) = lambda.asDiagonal();
  return J;
}

Matrix joint_attacked(const Matrix& Sigma_gamma_tilde, const Matrix& CB,
                      const Matrix& basis, const Vector& lambda) {
  const auto m = Sigma_gamma_tilde.rows();
  const auto r = lambda.size();
  Matrix J = Matrix::Zero(m + r, m + r);
  J.topLeftCorner(m, m) = Sigma_gamma_tilde;
  const Matrix cross = -CB * basis * lambda.asDiagonal();
  J.topRightCorner(m, r) = cross;
  J.bottomLeftCorner(r, m) = cross.transpose();
  J.bottomRightCorner(r, r) = lambda.asDiagonal();
  return J;
}

Matrix range_basis_of(const Matrix& Sigma) {
  Matrix basis;
  Vector values;
  range_basis(Sigma, basis, values);
  return basis;
}

Vector range_values_of(const Matrix& Sigma) {
  Matrix basis;
  Vector values;
  range_basis(Sigma, basis, values);
  return values;
}

}  // namespace

SuboptCusum::SuboptCusum(const PlantModel& plant,
                         const ControllerSolution& ctrl,
                         const Matrix& Sigma_gamma_tilde,
                         const Matrix& Sigma_e, double arl_h)
    : Detector(ctrl, cusum_threshold(arl_h)),
      basis_(range_basis_of(Sigma_e)),
      lambda_(range_values_of(Sigma_e)),
      attacked_(joint_attacked(Sigma_gamma_tilde, plant.C * plant.B, basis_,
                               lambda_),
                "joint attacked covariance of [innovation; e]"),
      nominal_(joint_nominal(ctrl.Sigma_gamma, lambda_),
               "joint nominal covariance of [innovation; e]") {}

double SuboptCusum::increment(DetectorState&, const Vector& innovation,
                              const Vector& e_prev) const {
  Vector joint(innovation.size() + basis_.cols());
  joint << innovation, basis_.transpose() * e_prev;
  return attacked_(joint) - nominal_(joint);
}

NpDetector::NpDetector(const PlantModel& plant,
                       const ControllerSolution& ctrl, const Matrix& Sigma_e,
                       double eta)
    : Detector(ctrl, eta), B_(plant.B) {
  WatermarkSpec{Sigma_e}.validate(plant.p());
  const Matrix Lf = linalg::solve_dlyap(
      ctrl.script_A,
      linalg::symmetrized(plant.B * Sigma_e * plant.B.transpose()));
  Sigma_f_ = linalg::symmetrized(plant.C * Lf * plant.C.transpose());
  nominal_.compute(ctrl.Sigma_gamma);
  widened_.compute(linalg::symmetrized(ctrl.Sigma_gamma + Sigma_f_));
  if (nominal_.info() != Eigen::Success || widened_.info() != Eigen::Success) {
    throw ValidationError("NP detector: innovation covariance is not PD");
  }
}

double NpDetector::increment(DetectorState& s, const Vector& innovation,
                             const Vector& e_prev) const {
  s.f = ctrl_.script_A * s.f + B_ * e_prev;
  const Vector d = innovation + ctrl_.C * s.f;  // gamma - mu, mu = -C f
  return innovation.dot(nominal_.solve(innovation)) - d.dot(widened_.solve(d));
}

double np_calibrate(const PlantModel& plant, const ControllerSolution& ctrl,
                    const Matrix& Sigma_e, double alpha, Rng& rng,
                    const NpCalibration& opts) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("np_calibrate: alpha must lie in (0, 1)");
  }
  if (opts.steps < static_cast<long>(std::ceil(100.0 / alpha))) {
    throw ValidationError("np_calibrate: " + std::to_string(opts.steps) +
                          " steps are too few for alpha = " +
                          std::to_string(alpha) + " (need >= 100 / alpha)");
  }
  // Threshold is irrelevant here; only the statistic is collected.
  const NpDetector det(plant, ctrl, Sigma_e, 0.0);
  const PlantNoise noise(plant);
  const WatermarkGenerator wm(WatermarkSpec{Sigma_e});

  const auto n = plant.n();
  Vector x = Vector::Zero(n);
  Vector e_prev = Vector::Zero(plant.p());
  DetectorState s = det.start(0, Vector::Zero(n), Vector::Zero(plant.m()));
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(opts.steps));
  const long total = opts.burn_in + opts.steps;
  for (long k = 0; k < total; ++k) {
    const Vector y = plant.C * x + noise.measurement(rng);
    const DetectorStep st = det.update(s, y, e_prev);
    if (k >= opts.burn_in) g.push_back(st.increment);
    const Vector e = wm.sample(rng);
    // The detector's filter is the loop's filter: both start from zero.
    const Vector u = ctrl.L * s.x_hat + e;
    x = plant.A * x + plant.B * u + noise.process(rng);
    e_prev = e;
  }
  const auto N = static_cast<double>(g.size());
  auto idx = static_cast<std::size_t>(std::ceil((1.0 - alpha) * N));
  idx = idx == 0 ? 0 : std::min(idx - 1, g.size() - 1);
  std::nth_element(g.begin(), g.begin() + static_cast<long>(idx), g.end());
  return g[idx];
}

std::unique_ptr<Detector> make_detector(const DetectorConfig& cfg,
                                        const PlantModel& plant,
                                        const ControllerSolution& ctrl,
                                        const AttackModel& attack,
                                        const Matrix& Sigma_e) {
  cfg.validate();
  switch (cfg.variant) {
    case DetectorVariant::kOptimalCusum:
      return std::make_unique<OptimalCusum>(ctrl, attack, cfg.arl_h);
    case DetectorVariant::kSuboptCusum:
      return std::make_unique<SuboptCusum>(
          plant, ctrl, sigma_gamma_tilde(plant, ctrl, attack, Sigma_e),
          Sigma_e, cfg.arl_h);
    case DetectorVariant::kNeymanPearson:
      if (!cfg.np_eta) {
        throw ValidationError("NP detector needs a calibrated threshold eta");
      }
      return std::make_unique<NpDetector>(plant, ctrl, Sigma_e, *cfg.np_eta);
  }
  throw ValidationError("unknown detector variant");
}

}  // namespace wmqd
