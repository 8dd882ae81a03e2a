#pragma once

#include "tmeig/transport.hpp"

namespace tmeig {

/// log pi(z) = log eta(S(z)) + log det grad S(z), eta standard normal.
double pullback_logpdf(const TriangularMap& map, const Vector& z);
double pullback_logpdf(const BlockTriangularMap& map, const Vector& z);
Vector pullback_logpdf_batch(const TriangularMap& map, const Matrix& z);

/// Pullback through the leading block only: the marginal of the leading
/// variables under the trained joint map.
double marginal_logpdf(const BlockTriangularMap& map, const Vector& leading);
Vector marginal_logpdf_batch(const BlockTriangularMap& map, const Matrix& leading);

/// Conditional of the trailing variables given the leading ones: trailing
/// components evaluated at the concatenated point, reference and Jacobian
/// restricted to the trailing coordinates.
double conditional_logpdf(const BlockTriangularMap& map, const Vector& trailing,
                          const Vector& leading);
Vector conditional_logpdf_batch(const BlockTriangularMap& map, const Matrix& trailing,
                                const Matrix& leading);

}  // namespace tmeig
