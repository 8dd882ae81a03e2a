#pragma once

// Test-only oracles, independent of the library's evaluation paths: Romberg
// quadrature, finite differences, and brute-force Monte Carlo references.

#include <cmath>
#include <functional>
#include <vector>

#include "tmeig/numerics.hpp"
#include "tmeig/rng.hpp"

namespace tmeig::testing {

/// Richardson-refined trapezoid (Romberg) integration.
inline double romberg(const std::function<double(double)>& f, double a, double b,
                      double tol = 1e-13, int max_level = 22) {
  std::vector<double> row{0.5 * (b - a) * (f(a) + f(b))};
  double h = b - a;
  for (int level = 1; level < max_level; ++level) {
    h *= 0.5;
    const long n = 1L << (level - 1);
    double sum = 0.0;
    for (long i = 0; i < n; ++i) sum += f(a + (2.0 * i + 1.0) * h);
    std::vector<double> next(level + 1);
    next[0] = 0.5 * row[0] + h * sum;
    double pow4 = 1.0;
    for (int k = 1; k <= level; ++k) {
      pow4 *= 4.0;
      next[k] = (pow4 * next[k - 1] - row[k - 1]) / (pow4 - 1.0);
    }
    if (level > 3 && std::abs(next[level] - row[level - 1]) < tol * (1.0 + std::abs(next[level])))
      return next[level];
    row = std::move(next);
  }
  return row.back();
}

/// Central finite-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

/// Central finite-difference Jacobian of a vector-valued function.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double h = 1e-5) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    j.col(i) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return j;
}

struct McMoments {
  double mean;
  double variance;
  double se_mean;
  double se_variance;
};

/// Monte Carlo moments of the quadratic form (X - mu)^T S2^{-1} (X - mu),
/// X ~ N(mu, S1). Brute-force reference for the eigenvalue formula.
inline McMoments mc_quadratic_form(const SymmetricMatrix& s1, const SymmetricMatrix& s2,
                                   long draws, std::uint64_t seed) {
  const Matrix l1 = cholesky_lower(s1);
  const Matrix l2 = cholesky_lower(s2);
  RngStream rng(seed);
  double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
  const Eigen::Index n = s1.n();
  for (long i = 0; i < draws; ++i) {
    const Vector x = l1 * rng.normal_vector(n);
    const Vector w = l2.triangularView<Eigen::Lower>().solve(x);
    const double q = w.squaredNorm();
    m1 += q;
    m2 += q * q;
    m3 += q * q * q;
    m4 += q * q * q * q;
  }
  m1 /= draws;
  m2 /= draws;
  m3 /= draws;
  m4 /= draws;
  McMoments out;
  out.mean = m1;
  out.variance = m2 - m1 * m1;
  out.se_mean = std::sqrt(out.variance / draws);
  // Var of the sample variance ~ (m4' - var^2)/n with central fourth moment.
  const double c4 = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1 * m1 * m1 * m1;
  out.se_variance = std::sqrt(std::max(c4 - out.variance * out.variance, 0.0) / draws);
  return out;
}

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

inline double standard_error(const std::vector<double>& v) {
  return std::sqrt(sample_variance(v) / double(v.size()));
}

inline double sample_skewness(const Vector& v) {
  const double m = v.mean();
  const double n = double(v.size());
  double m2 = 0.0, m3 = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double d = v[i] - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  return m3 / std::pow(m2, 1.5);
}

inline double sample_excess_kurtosis(const Vector& v) {
  const double m = v.mean();
  const double n = double(v.size());
  double m2 = 0.0, m4 = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double d = v[i] - m;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  return m4 / (m2 * m2) - 3.0;
}

}  // namespace tmeig::testing
