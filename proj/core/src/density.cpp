#include "tmeig/density.hpp"

#include <cmath>

namespace tmeig {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Sum of log eta(S_k) + log d_k S_k over components [k_lo, k_hi) of the map,
// evaluated at the rows of z (which must span dimensions 0..k_hi).
Vector block_logpdf(const TriangularMap& map, const Matrix& z, Eigen::Index k_lo,
                    Eigen::Index k_hi) {
  const Eigen::Index n = z.rows();
  Vector out = Vector::Constant(n, -0.5 * double(k_hi - k_lo) * kLog2Pi);
  for (Eigen::Index k = k_lo; k < k_hi; ++k) {
    Vector values, partials;
    component_eval_batch(map.components[k], z.leftCols(k + 1), &values, &partials);
    out -= 0.5 * values.array().square().matrix();
    out += partials.array().log().matrix();
  }
  return out;
}

}  // namespace

Vector pullback_logpdf_batch(const TriangularMap& map, const Matrix& z) {
  if (z.cols() != map.dim()) throw std::invalid_argument("pullback_logpdf: dimension mismatch");
  return block_logpdf(map, z, 0, map.dim());
}

double pullback_logpdf(const TriangularMap& map, const Vector& z) {
  return pullback_logpdf_batch(map, z.transpose())[0];
}

double pullback_logpdf(const BlockTriangularMap& map, const Vector& z) {
  return pullback_logpdf(map.map, z);
}

Vector marginal_logpdf_batch(const BlockTriangularMap& map, const Matrix& leading) {
  if (leading.cols() != map.n_lead)
    throw std::invalid_argument("marginal_logpdf: leading block has dimension " +
                                std::to_string(map.n_lead));
  return block_logpdf(map.map, leading, 0, map.n_lead);
}

double marginal_logpdf(const BlockTriangularMap& map, const Vector& leading) {
  return marginal_logpdf_batch(map, leading.transpose())[0];
}

Vector conditional_logpdf_batch(const BlockTriangularMap& map, const Matrix& trailing,
                                const Matrix& leading) {
  if (leading.cols() != map.n_lead || trailing.cols() != map.n_trail())
    throw std::invalid_argument("conditional_logpdf: dimension mismatch");
  if (leading.rows() != trailing.rows())
    throw std::invalid_argument("conditional_logpdf: row count mismatch");
  Matrix joint(leading.rows(), map.dim());
  joint << leading, trailing;
  return block_logpdf(map.map, joint, map.n_lead, map.dim());
}

double conditional_logpdf(const BlockTriangularMap& map, const Vector& trailing,
                          const Vector& leading) {
  return conditional_logpdf_batch(map, trailing.transpose(), leading.transpose())[0];
}

}  // namespace tmeig
