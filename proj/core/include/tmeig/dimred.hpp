#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tmeig/estimators.hpp"
#include "tmeig/models.hpp"

namespace tmeig {

/// Whitened diagnostic matrices: prior-averaged outer products of the mixed
/// log-likelihood gradient, preconditioned by the prior and noise covariances.
struct DiagnosticPair {
  SymmetricMatrix h_x;  // n_x x n_x, PSD
  SymmetricMatrix h_y;  // n_y x n_y, PSD
  Eigen::Index n_mc = 0;  // prior samples averaged; 0 for constant-Jacobian models
};

enum class ReductionMethod { CMI, PCA, CCA };

std::string to_string(ReductionMethod method);
ReductionMethod reduction_method_from_string(const std::string& s);

struct JointCovariance {
  SymmetricMatrix xx;
  SymmetricMatrix yy;
  Matrix xy;  // Cov(X, Y), n_x x n_y
};

JointCovariance exact_joint_covariance(const LinearGaussianModel& model);
JointCovariance empirical_joint_covariance(const Matrix& x, const Matrix& y);

/// Full projection bases with descending spectra; reduced bases are the
/// leading-column slices. CMI columns satisfy U^T Sigma_X U = I and
/// V^T Sigma_E V = I; PCA columns are Euclidean-orthonormal; CCA columns are
/// orthonormal in their pencil's right matrix.
struct ProjectionBasis {
  ReductionMethod method = ReductionMethod::CMI;
  Matrix u;  // n_x x n_x
  Matrix v;  // n_y x n_y
  Vector lambda_x;
  Vector lambda_y;
  // Retained directions in the diagnostic matrices' whitened geometry
  // (Sigma_X^{1/2} U and Sigma_E^{1/2} V); filled by reduction_basis and used
  // by truncation_bound for non-CMI bases.
  Matrix whitened_u, whitened_v;

  Matrix u_r(Eigen::Index r) const { return u.leftCols(r); }
  Matrix v_s(Eigen::Index s) const { return v.leftCols(s); }
};

/// Monte Carlo average over n_mc prior draws of the whitened Fisher-type
/// outer products; exact single-term evaluation for constant-Jacobian
/// (linear) models. Requires forward gradients and Gaussian noise.
DiagnosticPair diagnostic_matrices(const ModelBase& model, Eigen::Index n_mc, std::uint64_t seed);

ProjectionBasis reduction_basis_cmi(const DiagnosticPair& pair, const SymmetricMatrix& sigma_x,
                                    const SymmetricMatrix& sigma_e);
ProjectionBasis reduction_basis_pca(const JointCovariance& cov);
ProjectionBasis reduction_basis_cca(const JointCovariance& cov);

/// Method dispatcher: CMI from the model's diagnostic matrices; PCA and CCA
/// from the exact joint covariance when the model is linear-Gaussian, from
/// n_mc empirical joint samples otherwise.
ProjectionBasis reduction_basis(ReductionMethod method, const ModelBase& model, Eigen::Index n_mc,
                                std::uint64_t seed);

/// x_r = U_r^T x, y_s = V_s^T y rowwise; split preserved. 1 <= r, s required.
JointSampleSet project(const JointSampleSet& samples, const ProjectionBasis& basis,
                       Eigen::Index r, Eigen::Index s);

/// Trace of the diagnostic matrices over the discarded whitened directions:
/// the information-loss bound up to the (uncomputed) log-Sobolev constant.
/// Zero iff nothing is truncated; a relative ranking tool only.
double truncation_bound(const DiagnosticPair& pair, const ProjectionBasis& basis, Eigen::Index r,
                        Eigen::Index s);

/// Mutual information of the projected pair as if it were Gaussian:
/// 1/2 log [ det(S_xr) det(S_ys) / det(S_joint) ].
double gaussian_eig(const JointCovariance& cov, const Matrix& u_r, const Matrix& v_s);
double gaussian_eig(const Matrix& x_samples, const Matrix& y_samples, const Matrix& u_r,
                    const Matrix& v_s);

/// Projected posterior-over-prior estimator: project, allocate, train a
/// (Y_s, X_r) block map, and average log pi^(X_r|Y_s)/pi(X_r) over the eval
/// split. The projected prior is exact: closed-form Gaussian marginal for
/// Gaussian priors, change of variables for full-rank projections.
EigEstimate projected_eig_pos(const ModelBase& model, const ProjectionBasis& basis,
                              Eigen::Index r, Eigen::Index s, Eigen::Index total, double p,
                              int degree, const FitOptions& fit, std::uint64_t seed);

/// Gaussian log-det estimator of the projected pair from L fresh samples.
EigEstimate projected_eig_gaussian(const ModelBase& model, const ProjectionBasis& basis,
                                   Eigen::Index r, Eigen::Index s, Eigen::Index total,
                                   std::uint64_t seed);

struct DimredRow {
  ReductionMethod method = ReductionMethod::CMI;
  EigKind kind = EigKind::Pos;
  Eigen::Index r = 0, s = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::optional<double> value;
  std::optional<double> exact_projected;
  double bound = 0.0;
  std::string error;
};

/// CSV with header method,r,s,replicate,seed,value,exact_projected,bound.
std::string dimred_csv_string(const std::vector<DimredRow>& rows);
void write_dimred_csv(const std::string& path, const std::vector<DimredRow>& rows);

}  // namespace tmeig
