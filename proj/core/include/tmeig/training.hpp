#pragma once

#include <utility>
#include <vector>

#include "tmeig/transport.hpp"

namespace tmeig {

struct FitOptions {
  double grad_tol = 1e-8;
  int max_iterations = 500;
  int quad_order = 32;
  bool standardize = true;
};

struct FitReport {
  double objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = true;  // false when the iteration cap was hit; flagged, not fatal
  int chosen_degree = -1;
  std::vector<double> cv_scores;
};

/// Empirical KL objective of one component on row-wise samples,
/// (1/N) sum_i [ 1/2 S(z_i)^2 - log d_k S(z_i) ], with its analytic gradient
/// with respect to the coefficients.
std::pair<double, Vector> empirical_objective(const MonotoneComponent& comp, const Matrix& samples);

/// Maximum-likelihood fit of one map component over the given feature set.
/// Requires more samples than coefficients. Standardization constants are
/// estimated from the samples and stored in the returned component.
std::pair<MonotoneComponent, FitReport> fit_component(const MultiIndexSet& set,
                                                      const Matrix& samples,
                                                      const FitOptions& opts = {});

/// Fit all components independently; the concatenation is the maximum
/// likelihood estimate of the triangular map. Component failures are
/// re-thrown with the component index attached.
TriangularMap fit_triangular_map(const Matrix& samples, const std::vector<MultiIndexSet>& sets,
                                 const FitOptions& opts = {},
                                 std::vector<FitReport>* reports = nullptr);
/// Total-degree bases for every component.
TriangularMap fit_triangular_map(const Matrix& samples, int degree, const FitOptions& opts = {},
                                 std::vector<FitReport>* reports = nullptr);

/// Fit a two-block map on the concatenated (lead, trail) samples.
BlockTriangularMap fit_block_map(const Matrix& lead, const Matrix& trail, BlockOrdering ordering,
                                 int degree, const FitOptions& opts = {},
                                 std::vector<FitReport>* reports = nullptr);

struct DegreeSelection {
  int chosen_degree = -1;
  std::vector<int> degrees;
  std::vector<double> mean_scores;  // mean held-out objective per degree (NaN when skipped)
  std::vector<bool> skipped;
};

/// K-fold cross-validation over total-degree bases for a full triangular map;
/// the score is the held-out empirical objective summed over components.
/// Ties break toward the smaller degree; degrees whose basis would be
/// underdetermined on a fold are skipped.
DegreeSelection select_degree_cv(const Matrix& samples, const std::vector<int>& degrees, int folds,
                                 const FitOptions& opts = {});

/// Empirical average of the negative coefficient-Hessian of the per-sample
/// log-pullback contribution of this component (the observed information).
SymmetricMatrix observed_fisher(const MonotoneComponent& comp, const Matrix& samples);

/// Map file with per-component fit reports attached.
void save_map(const std::string& path, const BlockTriangularMap& map,
              const std::vector<FitReport>& reports);
std::vector<FitReport> load_fit_reports(const std::string& path);

}  // namespace tmeig
