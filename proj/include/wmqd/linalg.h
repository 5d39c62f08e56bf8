#pragma once

#include <Eigen/Dense>
#include <string_view>

namespace wmqd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

/// Eigenvalues and right eigenvectors of a general real square matrix.
struct EigenDecomposition {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;  // column i pairs with values(i)
};

/// Solves P = A P A' + Q - A P C' (C P C' + R)^-1 C P A' by iterating the
/// Riccati recursion from P = Q. The control Riccati equation is obtained by
/// passing (A', B', W, U).
///
/// Throws ValidationError when R is not symmetric positive definite or Q is
/// not symmetric PSD, and SolverError (carrying the last update norm) when the
/// recursion fails to settle within the iteration cap.
Matrix solve_dare(const Matrix& A, const Matrix& C, const Matrix& Q,
                  const Matrix& R);

/// Solves X = A X A' + Q via the vectorized system (I - A (x) A) vec(X) =
/// vec(Q). Requires spectral_radius(A) < 1; throws InstabilityError otherwise.
Matrix solve_dlyap(const Matrix& A, const Matrix& Q);

double spectral_radius(const Matrix& M);

EigenDecomposition eigen_decompose(const Matrix& M);

/// Returns S with S S' = Sigma. Small negative eigenvalues (above
/// -1e-10 * |Sigma|) are clamped to zero, so rank-deficient inputs are fine.
Matrix psd_sqrt(const Matrix& Sigma);

/// Symmetric-definite pencil (Hkld, H): largest generalized eigenvalue and
/// its eigenvector, normalized so that v' H v = 1.
struct GeneralizedEigenPair {
  double value;
  Vector vector;
};
GeneralizedEigenPair top_generalized_eigenpair(const Matrix& Hkld,
                                               const Matrix& H);

bool is_symmetric(const Matrix& M, double rel_tol = 1e-10);
double max_abs(const Matrix& M);

// Validation helpers; `name` is used in the error message.
void require_square(const Matrix& M, std::string_view name);
void require_finite(const Matrix& M, std::string_view name);
void require_symmetric(const Matrix& M, std::string_view name);
void require_psd(const Matrix& M, std::string_view name);
void require_pd(const Matrix& M, std::string_view name);
void require_stable(const Matrix& M, std::string_view name);

/// log|M| for symmetric positive definite M. Throws ValidationError if the
/// Cholesky factorization fails.
double log_det_spd(const Matrix& M, std::string_view name);

Matrix symmetrized(const Matrix& M);

/// Zero-mean multivariate normal log-density with a covariance factored once.
class GaussianLogDensity {
 public:
  explicit GaussianLogDensity(const Matrix& covariance,
                              std::string_view name = "covariance");

  /// ln N(x; mean, covariance)
  double operator()(const Vector& x) const;
  double operator()(const Vector& x, const Vector& mean) const;

  int dim() const { return static_cast<int>(chol_.rows()); }
  double log_det() const { return log_det_; }

 private:
  Eigen::LLT<Matrix> chol_;
  double log_det_;
  double log_norm_;
};

}  // namespace linalg
}  // namespace wmqd
