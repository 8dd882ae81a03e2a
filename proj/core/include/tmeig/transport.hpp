#pragma once

#include <string>
#include <vector>

#include "tmeig/numerics.hpp"

namespace tmeig {

/// Set of multi-indices alpha in N^k selecting tensor-product Hermite features.
class MultiIndexSet {
 public:
  MultiIndexSet(Eigen::Index dim, std::vector<std::vector<int>> indices);

  /// All alpha with |alpha| <= degree, graded-lexicographic order.
  static MultiIndexSet total_degree(Eigen::Index dim, int degree);

  Eigen::Index dim() const { return dim_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(indices_.size()); }
  const std::vector<std::vector<int>>& indices() const { return indices_; }
  int max_degree() const;
  /// Largest degree appearing in the last coordinate.
  int max_last_degree() const;

 private:
  Eigen::Index dim_;
  std::vector<std::vector<int>> indices_;
};

/// Probabilists' Hermite polynomials normalized to unit L2(N(0,1)) norm:
/// psi_0 = 1, psi_1 = z, psi_{m+1} = (z psi_m - sqrt(m) psi_{m-1}) / sqrt(m+1).
/// Returns an (n x (max_degree+1)) table of values at the entries of z.
Matrix hermite_table(const Vector& z, int max_degree);

struct HermiteFeatures {
  Vector values;         // psi_alpha(z) per multi-index
  Vector last_partials;  // d/dz_k psi_alpha(z)
};

HermiteFeatures hermite_features(const MultiIndexSet& set, const Vector& z);

enum class Rectifier { Softplus };

double softplus(double x);
double softplus_deriv(double x);   // sigmoid
double softplus_second(double x);  // sigmoid'
double log_softplus(double x);     // overflow-safe log(softplus(x))
double softplus_inverse(double y);

/// One scalar map component S^k(z_{1:k}), monotone increasing in z_k by
/// construction: S = f(z_{1:k-1}, 0) + int_0^{z_k} g(d_k f(z_{1:k-1}, t)) dt
/// with g strictly positive. Inputs are standardized by the stored per-
/// coordinate shift/scale before feature evaluation; the 1/scale factor shows
/// up in the reported partial derivative (and hence map log-determinants).
struct MonotoneComponent {
  MultiIndexSet indices;
  Vector coeffs;
  Rectifier rectifier = Rectifier::Softplus;
  int quad_order = 32;
  Vector shift;  // length k, default zeros
  Vector scale;  // length k, default ones

  Eigen::Index dim() const { return indices.dim(); }
};

MonotoneComponent make_component(MultiIndexSet indices, Vector coeffs, int quad_order = 32);
/// Zero-coefficient component over the given index set.
MonotoneComponent make_component(MultiIndexSet indices, int quad_order = 32);
/// Affine component calibrated so that S(z) = z_k exactly.
MonotoneComponent identity_component(Eigen::Index k);

struct ComponentEval {
  double value;
  double last_partial;  // d S / d z_k > 0
};

ComponentEval rectified_component_eval(const MonotoneComponent& comp, const Vector& z);

/// Vectorized evaluation at the rows of z (n x k). Either output may be null.
void component_eval_batch(const MonotoneComponent& comp, const Matrix& z, Vector* values,
                          Vector* last_partials);

/// Lower-triangular monotone map: component k sees z_{1:k}.
struct TriangularMap {
  std::vector<MonotoneComponent> components;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(components.size()); }
};

TriangularMap identity_map(Eigen::Index n);

enum class BlockOrdering { YThenX, XThenY };

std::string to_string(BlockOrdering ordering);
BlockOrdering block_ordering_from_string(const std::string& s);

/// Two-block triangular map on the concatenated vector (lead, trail): the
/// first n_lead components depend on the leading variables only and transport
/// their marginal; the remaining components transport the conditionals.
struct BlockTriangularMap {
  BlockOrdering ordering = BlockOrdering::YThenX;
  Eigen::Index n_lead = 0;
  TriangularMap map;

  Eigen::Index dim() const { return map.dim(); }
  Eigen::Index n_trail() const { return dim() - n_lead; }
};

struct MapImage {
  Vector image;
  double logdet;
};

MapImage map_forward(const TriangularMap& map, const Vector& z);
MapImage map_forward(const BlockTriangularMap& map, const Vector& z);
void map_forward_batch(const TriangularMap& map, const Matrix& z, Matrix* images, Vector* logdets);

/// Solve S^k(prefix, z_k) = target to 1e-10 by expanding-bracket bisection
/// followed by Newton polish. Throws DivergenceError if no bracket is found
/// within |z_k| <= 1e6.
double component_invert(const MonotoneComponent& comp, const Vector& prefix, double target);

Vector map_invert(const TriangularMap& map, const Vector& w);
Vector map_invert(const BlockTriangularMap& map, const Vector& w);

/// Versioned JSON map file: ordering tag, per-component multi-index lists,
/// coefficients, standardization constants, rectifier tag, quadrature order.
void save_map(const std::string& path, const BlockTriangularMap& map);
BlockTriangularMap load_map(const std::string& path);

}  // namespace tmeig
