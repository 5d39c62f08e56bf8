#include "wmqd/linalg.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "wmqd/errors.h"

namespace wmqd {
namespace linalg {

namespace {

constexpr double kDareTolerance = 1e-12;
constexpr int kDareMaxIterations = 100000;

std::string dims(const Matrix& M) {
  return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

double riccati_residual(const Matrix& P, const Matrix& A, const Matrix& C,
                        const Matrix& Q, const Matrix& R) {
  const Matrix APCt = A * P * C.transpose();
  const Matrix S = C * P * C.transpose() + R;
  const Matrix rhs =
      A * P * A.transpose() + Q - APCt * S.ldlt().solve(APCt.transpose());
  return (P - rhs).norm();
}

}  // namespace

double max_abs(const Matrix& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

bool is_symmetric(const Matrix& M, double rel_tol) {
  if (M.rows() != M.cols()) return false;
  return max_abs(M - M.transpose()) <= rel_tol * (1.0 + max_abs(M));
}

Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

void require_square(const Matrix& M, std::string_view name) {
  if (M.rows() != M.cols() || M.rows() == 0) {
    throw ValidationError(std::string(name) + " must be square and non-empty, got " +
                          dims(M));
  }
}

void require_finite(const Matrix& M, std::string_view name) {
  if (!M.allFinite()) {
    throw ValidationError(std::string(name) + " has non-finite entries");
  }
}

void require_symmetric(const Matrix& M, std::string_view name) {
  require_square(M, name);
  require_finite(M, name);
  if (!is_symmetric(M)) {
    throw ValidationError(std::string(name) + " must be symmetric");
  }
}

void require_psd(const Matrix& M, std::string_view name) {
  require_symmetric(M, name);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M),
                                           Eigen::EigenvaluesOnly);
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw ValidationError(std::string(name) +
                          " must be positive semidefinite (min eigenvalue " +
                          std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
}

void require_pd(const Matrix& M, std::string_view name) {
  require_symmetric(M, name);
  Eigen::LLT<Matrix> llt(symmetrized(M));
  if (llt.info() != Eigen::Success) {
    throw ValidationError(std::string(name) + " must be positive definite");
  }
}

void require_stable(const Matrix& M, std::string_view name) {
  const double rho = spectral_radius(M);
  if (!(rho < 1.0)) {
    throw InstabilityError(std::string(name) +
                           " is not strictly stable (spectral radius " +
                           std::to_string(rho) + ")");
  }
}

double log_det_spd(const Matrix& M, std::string_view name) {
  Eigen::LLT<Matrix> llt(symmetrized(M));
  if (llt.info() != Eigen::Success) {
    throw ValidationError(std::string(name) +
                          " must be positive definite for its log-determinant");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix solve_dare(const Matrix& A, const Matrix& C, const Matrix& Q,
                  const Matrix& R) {
  require_square(A, "A");
  require_psd(Q, "Q");
  require_pd(R, "R");
  const auto n = A.rows();
  if (C.cols() != n || Q.rows() != n || R.rows() != C.rows()) {
    throw ValidationError("solve_dare: inconsistent dimensions A " + dims(A) +
                          ", C " + dims(C) + ", Q " + dims(Q) + ", R " +
                          dims(R));
  }

  Matrix P = symmetrized(Q);
  double step = 0.0;
  for (int it = 0; it < kDareMaxIterations; ++it) {
    const Matrix APCt = A * P * C.transpose();
    const Matrix S = C * P * C.transpose() + R;
    Matrix next =
        A * P * A.transpose() + Q - APCt * S.ldlt().solve(APCt.transpose());
    next = symmetrized(next);
    if (!next.allFinite()) {
      throw SolverError("solve_dare: iteration diverged", step);
    }
    step = (next - P).norm();
    P = std::move(next);
    const double scale = P.norm();
    if (!std::isfinite(step) || !std::isfinite(scale)) {
      throw SolverError("solve_dare: iteration diverged", step);
    }
    if (step <= kDareTolerance * (1.0 + scale)) {
      const double residual = riccati_residual(P, A, C, Q, R);
      if (!(residual <= 1e-9 * (1.0 + scale))) {
        throw SolverError("solve_dare: residual bound not met", residual);
      }
      return P;
    }
  }
  throw SolverError("solve_dare: no convergence after " +
                        std::to_string(kDareMaxIterations) + " iterations",
                    step);
}

Matrix solve_dlyap(const Matrix& A, const Matrix& Q) {
  require_square(A, "A");
  require_symmetric(Q, "Q");
  if (Q.rows() != A.rows()) {
    throw ValidationError("solve_dlyap: A " + dims(A) + " and Q " + dims(Q) +
                          " differ in size");
  }
  require_stable(A, "solve_dlyap: A");

  const auto n = A.rows();
  const auto nn = n * n;
  // Column-major vec: vec(A X A') = (A (x) A) vec(X).
  Matrix lhs = Matrix::Identity(nn, nn);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      lhs.block(i * n, j * n, n, n) -= A(i, j) * A;
    }
  }
  const Vector rhs = Eigen::Map<const Vector>(Q.data(), nn);
  Eigen::FullPivLU<Matrix> lu(lhs);
  if (!lu.isInvertible()) {
    throw SolverError("solve_dlyap: singular Kronecker system");
  }
  Vector x = lu.solve(rhs);
  x += lu.solve(rhs - lhs * x);  // one step of iterative refinement

  Matrix X = symmetrized(Eigen::Map<const Matrix>(x.data(), n, n));
  const double residual = (X - A * X * A.transpose() - Q).norm();
  if (!(residual <= 1e-10 * (1.0 + X.norm()))) {
    throw SolverError("solve_dlyap: residual bound not met", residual);
  }
  return X;
}

EigenDecomposition eigen_decompose(const Matrix& M) {
  require_square(M, "M");
  require_finite(M, "M");
  Eigen::EigenSolver<Matrix> es(M, true);
  if (es.info() != Eigen::Success) {
    throw SolverError("eigen_decompose: eigen solver failed");
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

double spectral_radius(const Matrix& M) {
  require_square(M, "M");
  require_finite(M, "M");
  Eigen::EigenSolver<Matrix> es(M, false);
  if (es.info() != Eigen::Success) {
    throw SolverError("spectral_radius: eigen solver failed");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix psd_sqrt(const Matrix& Sigma) {
  require_symmetric(Sigma, "Sigma");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(Sigma));
  if (es.info() != Eigen::Success) {
    throw SolverError("psd_sqrt: eigen solver failed");
  }
  const Vector& lambda = es.eigenvalues();
  const double scale = lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0;
  if (lambda.size() && lambda.minCoeff() < -1e-10 * scale) {
    throw ValidationError("psd_sqrt: matrix is not positive semidefinite (min "
                          "eigenvalue " + std::to_string(lambda.minCoeff()) +
                          ")");
  }
  // Round-off eigenvalues are zeroed so a rank-r input gives a rank-r root.
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  const Vector root =
      lambda.unaryExpr([floor](double l) { return l > floor ? l : 0.0; })
          .cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

GeneralizedEigenPair top_generalized_eigenpair(const Matrix& Hkld,
                                               const Matrix& H) {
  require_symmetric(Hkld, "H_KLD");
  require_pd(H, "H");
  if (Hkld.rows() != H.rows()) {
    throw ValidationError("generalized eigenproblem: size mismatch");
  }
  // Reduce to the standard problem on H^-1/2 Hkld H^-1/2.
  Eigen::SelfAdjointEigenSolver<Matrix> hs(symmetrized(H));
  const Vector inv_root = hs.eigenvalues().cwiseSqrt().cwiseInverse();
  const Matrix H_inv_sqrt =
      hs.eigenvectors() * inv_root.asDiagonal() * hs.eigenvectors().transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(
      symmetrized(H_inv_sqrt * Hkld * H_inv_sqrt));
  if (es.info() != Eigen::Success) {
    throw SolverError("generalized eigenproblem: eigen solver failed");
  }
  const auto top = es.eigenvalues().size() - 1;
  Vector v = H_inv_sqrt * es.eigenvectors().col(top);
  v /= std::sqrt(v.dot(H * v));
  // Fix the sign so the result is reproducible: largest entry positive.
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0) v = -v;
  return {es.eigenvalues()(top), v};
}

GaussianLogDensity::GaussianLogDensity(const Matrix& covariance,
                                       std::string_view name)
    : chol_(symmetrized(covariance)) {
  if (covariance.rows() != covariance.cols() ||
      chol_.info() != Eigen::Success) {
    throw ValidationError(std::string(name) +
                          " must be symmetric positive definite");
  }
  log_det_ = 2.0 * chol_.matrixLLT().diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(covariance.rows()) *
                          std::log(2.0 * std::numbers::pi) +
                      log_det_);
}

double GaussianLogDensity::operator()(const Vector& x) const {
  const Vector w = chol_.matrixL().solve(x);
  return log_norm_ - 0.5 * w.squaredNorm();
}

double GaussianLogDensity::operator()(const Vector& x,
                                      const Vector& mean) const {
  return (*this)(x - mean);
}

}  // namespace linalg
}  // namespace wmqd
