#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "tmeig/numerics.hpp"

namespace tmeig {

/// L paired draws from the joint distribution of (X, Y), with seed provenance
/// and a train/eval partition (first n_train rows train, remainder evaluate).
struct JointSampleSet {
  Matrix x;  // L x n_x
  Matrix y;  // L x n_y
  std::uint64_t seed = 0;
  Eigen::Index n_train = 0;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index n_eval() const { return size() - n_train; }

  void set_split(Eigen::Index train_count);

  auto train_x() const { return x.topRows(n_train); }
  auto train_y() const { return y.topRows(n_train); }
  auto eval_x() const { return x.bottomRows(n_eval()); }
  auto eval_y() const { return y.bottomRows(n_eval()); }
};

/// A problem definition: joint sampler plus whatever exact densities and
/// derivatives the setting provides. Capabilities not supported by a given
/// model throw CapabilityError; this is what distinguishes the standard,
/// likelihood-free, and prior-free settings.
class ModelBase {
 public:
  virtual ~ModelBase() = default;

  virtual Eigen::Index dim_x() const = 0;
  virtual Eigen::Index dim_y() const = 0;
  virtual std::string name() const = 0;

  virtual JointSampleSet sample_joint(Eigen::Index count, std::uint64_t seed) const = 0;
  virtual Matrix sample_prior(RngStream& rng, Eigen::Index count) const = 0;

  virtual double log_likelihood(const Vector& y, const Vector& x) const;
  virtual double log_prior(const Vector& x) const;
  virtual Matrix forward_jacobian(const Vector& x) const;

  virtual Vector prior_mean() const;
  virtual SymmetricMatrix prior_covariance() const;
  virtual SymmetricMatrix noise_covariance() const;
};

/// Y = G X + E with X ~ N(0, Sigma_X), E ~ N(0, Sigma_E) independent.
class LinearGaussianModel : public ModelBase {
 public:
  LinearGaussianModel(Matrix g, const SymmetricMatrix& sigma_x, const SymmetricMatrix& sigma_e);

  Eigen::Index dim_x() const override { return g_.cols(); }
  Eigen::Index dim_y() const override { return g_.rows(); }
  std::string name() const override { return "linear-gaussian"; }

  JointSampleSet sample_joint(Eigen::Index count, std::uint64_t seed) const override;
  Matrix sample_prior(RngStream& rng, Eigen::Index count) const override;

  double log_likelihood(const Vector& y, const Vector& x) const override;
  double log_prior(const Vector& x) const override;
  Matrix forward_jacobian(const Vector& x) const override;

  Vector prior_mean() const override { return Vector::Zero(dim_x()); }
  SymmetricMatrix prior_covariance() const override { return sigma_x_; }
  SymmetricMatrix noise_covariance() const override { return sigma_e_; }

  const Matrix& g() const { return g_; }
  SymmetricMatrix marginal_y_covariance() const;
  /// Cov(X, Y) = Sigma_X G^T.
  Matrix cross_covariance() const { return sigma_x_.mat() * g_.transpose(); }

 private:
  Matrix g_;
  SymmetricMatrix sigma_x_, sigma_e_;
  std::shared_ptr<const GaussianDensity> prior_, noise_;
};

/// K_ij = sigma * exp(-||z_i - z_j||^2 / l^2) on 1-D locations.
SymmetricMatrix squared_exp_covariance(const Vector& points, double sigma, double ell);

/// Random linear forward map with prescribed singular values 1, decay,
/// decay^2, ...; orthonormal factors drawn by QR of seeded Gaussian matrices.
/// Prior covariance is a squared-exponential kernel (sigma = l = 0.1) on n_x
/// equispaced points in [0, 1]; noise covariance 0.01 * I.
LinearGaussianModel make_linear_gaussian(int n_x, int n_y, double decay, std::uint64_t seed);

/// 1-D pair Y = g X + E for closed-form sanity studies.
LinearGaussianModel make_scalar_gaussian(double g = 1.0, double var_x = 1.0, double var_e = 1.0);

/// Exact EIG of the linear-Gaussian pair, 1/2 log det(G Sx G^T + Se)/det(Se).
double closed_form_eig(const LinearGaussianModel& model);
/// EIG of the projected pair (U_r^T X, V_s^T Y), from the exact joint covariance.
double closed_form_eig(const LinearGaussianModel& model, const Matrix& u_r, const Matrix& v_s);

/// Moessbauer spectroscopy: detector counts at fixed velocities follow a
/// Lorentzian absorption profile with parameters (center, width, height,
/// offset); width, height, offset have lognormal priors.
class MoessbauerModel : public ModelBase {
 public:
  explicit MoessbauerModel(Vector velocities = default_velocities(), double noise_sd = 0.1);

  static Vector default_velocities();

  Eigen::Index dim_x() const override { return 4; }
  Eigen::Index dim_y() const override { return velocities_.size(); }
  std::string name() const override { return "moessbauer"; }

  JointSampleSet sample_joint(Eigen::Index count, std::uint64_t seed) const override;
  Matrix sample_prior(RngStream& rng, Eigen::Index count) const override;

  double log_likelihood(const Vector& y, const Vector& x) const override;
  double log_prior(const Vector& x) const override;
  Matrix forward_jacobian(const Vector& x) const override;

  Vector prior_mean() const override;
  SymmetricMatrix prior_covariance() const override;
  SymmetricMatrix noise_covariance() const override;

  /// Noise-free signal at the model's velocities.
  Vector forward(const Vector& x) const;
  double noise_sd() const { return noise_sd_; }
  const Vector& velocities() const { return velocities_; }

 private:
  Vector velocities_;
  double noise_sd_;
};

/// Restriction of a Moessbauer problem to its first parameter (the line
/// center): the focused quantity of interest. The center's prior is exactly
/// standard normal; the likelihood of Y given the center alone would require
/// marginalizing the nuisance parameters and is therefore unavailable.
class FocusedCenterModel : public ModelBase {
 public:
  explicit FocusedCenterModel(MoessbauerModel base) : base_(std::move(base)) {}

  Eigen::Index dim_x() const override { return 1; }
  Eigen::Index dim_y() const override { return base_.dim_y(); }
  std::string name() const override { return "moessbauer-focused"; }

  JointSampleSet sample_joint(Eigen::Index count, std::uint64_t seed) const override;
  Matrix sample_prior(RngStream& rng, Eigen::Index count) const override;
  double log_prior(const Vector& x) const override;

 private:
  MoessbauerModel base_;
};

/// Convenience wrapper matching the operation signature used elsewhere.
inline JointSampleSet sample_joint(const ModelBase& model, Eigen::Index count, std::uint64_t seed) {
  return model.sample_joint(count, seed);
}

}  // namespace tmeig
