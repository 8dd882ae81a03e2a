#include "tmeig/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

namespace tmeig {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// Plain Cholesky that reports the failing pivot index; used only on the
// error path after Eigen's LLT has already rejected the matrix.
int find_failing_pivot(const Matrix& a) {
  const Eigen::Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) return static_cast<int>(j);
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return -1;
}

void fix_eigenvector_signs(Matrix& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      if (std::abs(v(i, j)) > 1e-12) {
        if (v(i, j) < 0.0) v.col(j) = -v.col(j);
        break;
      }
    }
  }
}

EigenPair sort_descending(const Vector& values, const Matrix& vectors) {
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values[a] > values[b]; });
  EigenPair out;
  out.values.resize(n);
  out.vectors.resize(vectors.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = values[order[i]];
    out.vectors.col(i) = vectors.col(order[i]);
  }
  fix_eigenvector_signs(out.vectors);
  return out;
}

}  // namespace

SymmetricMatrix::SymmetricMatrix(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("SymmetricMatrix: input must be square");
  m_ = 0.5 * (a + a.transpose());
}

SymmetricMatrix SymmetricMatrix::identity(Eigen::Index n) {
  return SymmetricMatrix(Matrix::Identity(n, n));
}

SymmetricMatrix SymmetricMatrix::from_diagonal(const Vector& d) {
  return SymmetricMatrix(Matrix(d.asDiagonal()));
}

SymmetricMatrix sample_covariance(const Matrix& samples) {
  const Eigen::Index l = samples.rows();
  if (l < 2) throw std::invalid_argument("sample_covariance: need at least 2 samples");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Matrix centered = samples.rowwise() - mean;
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(l - 1);
  return SymmetricMatrix(cov);
}

EigenPair symmetric_eigendecomposition(const SymmetricMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat());
  if (es.info() != Eigen::Success)
    throw DecompositionError("symmetric eigendecomposition failed to converge");
  return sort_descending(es.eigenvalues(), es.eigenvectors());
}

Matrix cholesky_lower(const SymmetricMatrix& a) {
  Eigen::LLT<Matrix> llt(a.mat());
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const double eps = 1e-12 * a.mat().trace() / static_cast<double>(a.n());
  Matrix jittered = a.mat() + eps * Matrix::Identity(a.n(), a.n());
  Eigen::LLT<Matrix> llt2(jittered);
  if (llt2.info() == Eigen::Success) return llt2.matrixL();
  throw DecompositionError("Cholesky failed at pivot " +
                           std::to_string(find_failing_pivot(jittered)) +
                           " (matrix not positive definite after jitter)");
}

double cholesky_logdet(const SymmetricMatrix& a) {
  const Matrix l = cholesky_lower(a);
  return 2.0 * l.diagonal().array().log().sum();
}

EigenPair generalized_eigendecomposition(const SymmetricMatrix& a, const SymmetricMatrix& b) {
  if (a.n() != b.n())
    throw std::invalid_argument("generalized_eigendecomposition: dimension mismatch");
  const Matrix l = cholesky_lower(b);
  // Whiten: C = L^{-1} A L^{-T}, then V = L^{-T} W gives V^T B V = I.
  Matrix c = l.triangularView<Eigen::Lower>().solve(a.mat());
  c = l.triangularView<Eigen::Lower>().solve(Matrix(c.transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(SymmetricMatrix(c).mat());
  if (es.info() != Eigen::Success)
    throw DecompositionError("generalized eigendecomposition failed to converge");
  Matrix v = l.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
  return sort_descending(es.eigenvalues(), v);
}

const std::pair<Vector, Vector>& gauss_legendre_reference(int order) {
  static std::mutex mutex;
  static std::map<int, std::pair<Vector, Vector>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;

  if (order < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  Vector nodes(order), weights(order);
  const int n = order;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Chebyshev initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
  auto [pos, ok] = cache.emplace(order, std::make_pair(std::move(nodes), std::move(weights)));
  return pos->second;
}

std::pair<Vector, Vector> gauss_legendre(int order, double a, double b) {
  if (order < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  if (a > b) throw std::invalid_argument("gauss_legendre: interval must satisfy a <= b");
  const auto& [xi, w] = gauss_legendre_reference(order);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  return {mid + half * xi.array(), half * w.array()};
}

QuadraticFormMoments quadratic_form_moments(const SymmetricMatrix& s1, const SymmetricMatrix& s2) {
  if (s1.n() != s2.n())
    throw std::invalid_argument("quadratic_form_moments: dimension mismatch");
  const EigenPair pair = generalized_eigendecomposition(s1, s2);
  const double mean = pair.values.sum();
  const double variance = 2.0 * pair.values.squaredNorm();
  return {mean, variance};
}

GaussianDensity::GaussianDensity(Vector mean, const SymmetricMatrix& cov) : mean_(std::move(mean)) {
  if (mean_.size() != cov.n())
    throw std::invalid_argument("GaussianDensity: mean/covariance dimension mismatch");
  lower_ = cholesky_lower(cov);
  logdet_ = 2.0 * lower_.diagonal().array().log().sum();
}

double GaussianDensity::logpdf(const Vector& z) const {
  if (z.size() != mean_.size())
    throw std::invalid_argument("GaussianDensity::logpdf: dimension mismatch");
  const Vector centered = z - mean_;
  const Vector w = lower_.triangularView<Eigen::Lower>().solve(centered);
  return -0.5 * (mean_.size() * kLog2Pi + logdet_ + w.squaredNorm());
}

Vector GaussianDensity::sample(RngStream& rng) const {
  return mean_ + lower_ * rng.normal_vector(mean_.size());
}

Matrix GaussianDensity::sample(RngStream& rng, Eigen::Index n) const {
  Matrix z = rng.normal_matrix(n, mean_.size());
  Matrix out = z * lower_.transpose();
  out.rowwise() += mean_.transpose();
  return out;
}

double gaussian_logpdf(const Vector& z, const Vector& mean, const SymmetricMatrix& cov) {
  return GaussianDensity(mean, cov).logpdf(z);
}

double standard_normal_logpdf(const Vector& z) {
  return -0.5 * (z.size() * kLog2Pi + z.squaredNorm());
}

Matrix matrix_sqrt(const SymmetricMatrix& a) {
  const EigenPair pair = symmetric_eigendecomposition(a);
  const Vector root = pair.values.array().max(0.0).sqrt();
  return pair.vectors * root.asDiagonal() * pair.vectors.transpose();
}

Matrix matrix_inv_sqrt(const SymmetricMatrix& a, double rel_floor) {
  const EigenPair pair = symmetric_eigendecomposition(a);
  const double floor = rel_floor * std::max(pair.values.maxCoeff(), 0.0);
  if (floor <= 0.0) throw DecompositionError("matrix_inv_sqrt: matrix has no positive eigenvalues");
  const Vector inv_root = pair.values.array().max(floor).rsqrt();
  return pair.vectors * inv_root.asDiagonal() * pair.vectors.transpose();
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace tmeig
