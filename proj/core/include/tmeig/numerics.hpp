#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <utility>

#include "tmeig/errors.hpp"
#include "tmeig/rng.hpp"

namespace tmeig {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense symmetric matrix; symmetrized on construction so downstream
/// factorizations never see asymmetric round-off.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(const Matrix& a);

  static SymmetricMatrix identity(Eigen::Index n);
  static SymmetricMatrix from_diagonal(const Vector& d);

  Eigen::Index n() const { return m_.rows(); }
  const Matrix& mat() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Eigenvalues sorted descending; columns of `vectors` are the matching
/// eigenvectors, orthonormal in the metric of the pencil's right matrix.
struct EigenPair {
  Vector values;
  Matrix vectors;
};

/// Unbiased covariance (divide by L-1) of row-wise samples. L >= 2 required.
SymmetricMatrix sample_covariance(const Matrix& samples);

/// Standard symmetric eigendecomposition, descending order, deterministic
/// sign convention (first nonzero entry of each eigenvector positive).
EigenPair symmetric_eigendecomposition(const SymmetricMatrix& a);

/// Solve A v = lambda B v for symmetric A and SPD B via Cholesky whitening.
/// Postconditions: descending values, V^T B V = I.
EigenPair generalized_eigendecomposition(const SymmetricMatrix& a, const SymmetricMatrix& b);

/// Gauss-Legendre nodes and weights on [a, b]; exact for polynomials of
/// degree <= 2*order - 1. Weights sum to b - a (negative if b < a is not
/// allowed here; callers needing signed intervals scale the reference rule).
std::pair<Vector, Vector> gauss_legendre(int order, double a, double b);

/// Reference rule on [-1, 1], cached per order.
const std::pair<Vector, Vector>& gauss_legendre_reference(int order);

struct QuadraticFormMoments {
  double mean;
  double variance;
};

/// Moments of (X - mu)^T S2^{-1} (X - mu) for X ~ N(mu, S1): the quadratic
/// form is a weighted sum of chi-square(1) variables with weights given by
/// the generalized eigenvalues of the pencil (S1, S2), so the mean is
/// sum(lambda) and the variance 2*sum(lambda^2).
QuadraticFormMoments quadratic_form_moments(const SymmetricMatrix& s1, const SymmetricMatrix& s2);

/// Multivariate Gaussian with a cached Cholesky factor.
class GaussianDensity {
 public:
  GaussianDensity(Vector mean, const SymmetricMatrix& cov);

  double logpdf(const Vector& z) const;
  double logdet_cov() const { return logdet_; }
  const Vector& mean() const { return mean_; }
  const Matrix& chol_lower() const { return lower_; }

  Vector sample(RngStream& rng) const;
  /// n i.i.d. draws, one per row.
  Matrix sample(RngStream& rng, Eigen::Index n) const;

 private:
  Vector mean_;
  Matrix lower_;
  double logdet_;
};

double gaussian_logpdf(const Vector& z, const Vector& mean, const SymmetricMatrix& cov);
double standard_normal_logpdf(const Vector& z);

/// Cholesky of a + jitter if needed (eps = 1e-12 * trace / n, added once).
/// Throws DecompositionError naming the failing pivot if still not SPD.
Matrix cholesky_lower(const SymmetricMatrix& a);
double cholesky_logdet(const SymmetricMatrix& a);

/// Symmetric PSD square root; small negative eigenvalues are clamped to zero.
Matrix matrix_sqrt(const SymmetricMatrix& a);
/// Inverse square root with a relative eigenvalue floor for near-singular input.
Matrix matrix_inv_sqrt(const SymmetricMatrix& a, double rel_floor = 1e-12);

double log_sum_exp(const Vector& v);

}  // namespace tmeig
