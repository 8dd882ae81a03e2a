#pragma once

#include <vector>

#include "tmeig/transport.hpp"

namespace tmeig::detail {

// Evaluation plan for one component: features factored as
// psi_alpha(z_{1:k}) = prefix(alpha)(z_{1:k-1}) * psi_{last(alpha)}(z_k),
// with distinct prefixes shared across indices. Grouping by last degree lets
// both evaluation and training touch each prefix feature exactly once.
struct ComponentPlan {
  Eigen::Index k = 0;
  int n_alpha = 0;
  int n_prefix = 0;
  int last_max = 0;                         // max alpha_k
  std::vector<int> prefix_of;               // per alpha -> prefix row
  std::vector<int> last_of;                 // per alpha -> alpha_k
  std::vector<std::vector<int>> prefixes;   // distinct alpha_{1:k-1}
  std::vector<int> prefix_max_deg;          // per leading dim, for table sizing

  static ComponentPlan build(const MultiIndexSet& set);
};

// Prefix feature matrix: n x n_prefix, entry (i,p) = prod_j psi_{p_j}(w_ij)
// over the leading k-1 standardized coordinates.
Matrix prefix_features(const ComponentPlan& plan, const Matrix& w_leading);

// psi_m(0) for m = 0..max_degree.
Vector hermite_at_zero(int max_degree);

// Elementwise softplus family on vectors (Eigen packet math).
void softplus_inplace(Vector& v);
void sigmoid_inplace(Vector& v);
double sum_log_softplus(const Vector& v);

}  // namespace tmeig::detail
