#include "tmeig/models.hpp"

#include <Eigen/QR>
#include <cmath>

namespace tmeig {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Lognormal hyperparameters of the Moessbauer prior: log(width), log(height),
// log(offset) are normal with these means and standard deviations.
constexpr double kLogWidthMean = 0.0, kLogWidthSd = 0.3;
constexpr double kLogHeightMean = 0.0, kLogHeightSd = 0.3;
constexpr double kLogOffsetMean = 1.0, kLogOffsetSd = 0.2;

double lognormal_logpdf(double v, double mu, double sd) {
  if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
  const double t = (std::log(v) - mu) / sd;
  return -0.5 * (kLog2Pi + t * t) - std::log(sd) - std::log(v);
}

double lognormal_mean(double mu, double sd) { return std::exp(mu + 0.5 * sd * sd); }

double lognormal_var(double mu, double sd) {
  return (std::exp(sd * sd) - 1.0) * std::exp(2.0 * mu + sd * sd);
}

// Q factor of a seeded Gaussian matrix, with the sign convention that makes
// the factorization unique (positive diagonal of R).
Matrix random_orthonormal(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
  const Matrix a = rng.normal_matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = Matrix(qr.householderQ()).leftCols(cols);
  const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < cols; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

void JointSampleSet::set_split(Eigen::Index train_count) {
  if (train_count < 0 || train_count > size())
    throw std::invalid_argument("JointSampleSet::set_split: train count out of range");
  n_train = train_count;
}

double ModelBase::log_likelihood(const Vector&, const Vector&) const {
  throw CapabilityError(name() + ": likelihood evaluation not available");
}

double ModelBase::log_prior(const Vector&) const {
  throw CapabilityError(name() + ": prior density not available");
}

Matrix ModelBase::forward_jacobian(const Vector&) const {
  throw CapabilityError(name() + ": forward gradients not available");
}

Vector ModelBase::prior_mean() const {
  throw CapabilityError(name() + ": prior mean not available");
}

SymmetricMatrix ModelBase::prior_covariance() const {
  throw CapabilityError(name() + ": prior covariance not available");
}

SymmetricMatrix ModelBase::noise_covariance() const {
  throw CapabilityError(name() + ": noise covariance not available");
}

LinearGaussianModel::LinearGaussianModel(Matrix g, const SymmetricMatrix& sigma_x,
                                         const SymmetricMatrix& sigma_e)
    : g_(std::move(g)), sigma_x_(sigma_x), sigma_e_(sigma_e) {
  if (sigma_x_.n() != g_.cols() || sigma_e_.n() != g_.rows())
    throw std::invalid_argument("LinearGaussianModel: covariance dimensions do not match G");
  prior_ = std::make_shared<GaussianDensity>(Vector::Zero(g_.cols()), sigma_x_);
  noise_ = std::make_shared<GaussianDensity>(Vector::Zero(g_.rows()), sigma_e_);
}

JointSampleSet LinearGaussianModel::sample_joint(Eigen::Index count, std::uint64_t seed) const {
  if (count < 1) throw std::invalid_argument("sample_joint: need at least one sample");
  RngStream xs(derive_seed(seed, "joint.x"));
  RngStream es(derive_seed(seed, "joint.noise"));
  JointSampleSet s;
  s.seed = seed;
  s.x = prior_->sample(xs, count);
  s.y = s.x * g_.transpose() + noise_->sample(es, count);
  return s;
}

Matrix LinearGaussianModel::sample_prior(RngStream& rng, Eigen::Index count) const {
  return prior_->sample(rng, count);
}

double LinearGaussianModel::log_likelihood(const Vector& y, const Vector& x) const {
  if (y.size() != dim_y() || x.size() != dim_x())
    throw std::invalid_argument("log_likelihood: dimension mismatch");
  return noise_->logpdf(y - g_ * x);
}

double LinearGaussianModel::log_prior(const Vector& x) const { return prior_->logpdf(x); }

Matrix LinearGaussianModel::forward_jacobian(const Vector& x) const {
  if (x.size() != dim_x()) throw std::invalid_argument("forward_jacobian: dimension mismatch");
  return g_;
}

SymmetricMatrix LinearGaussianModel::marginal_y_covariance() const {
  return SymmetricMatrix(g_ * sigma_x_.mat() * g_.transpose() + sigma_e_.mat());
}

SymmetricMatrix squared_exp_covariance(const Vector& points, double sigma, double ell) {
  if (!(sigma > 0.0) || !(ell > 0.0))
    throw std::invalid_argument("squared_exp_covariance: sigma and l must be positive");
  const Eigen::Index n = points.size();
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = points[i] - points[j];
      k(i, j) = sigma * std::exp(-d * d / (ell * ell));
    }
  return SymmetricMatrix(k);
}

LinearGaussianModel make_linear_gaussian(int n_x, int n_y, double decay, std::uint64_t seed) {
  if (n_y > n_x) throw std::invalid_argument("make_linear_gaussian: requires n_y <= n_x");
  if (!(decay > 0.0) || decay > 1.0)
    throw std::invalid_argument("make_linear_gaussian: decay must lie in (0, 1]");
  RngStream ra(derive_seed(seed, "lg.left"));
  RngStream rb(derive_seed(seed, "lg.right"));
  const Matrix a = random_orthonormal(n_y, n_y, ra);
  const Matrix b = random_orthonormal(n_x, n_y, rb);
  Vector lambda(n_y);
  lambda[0] = 1.0;
  for (int i = 1; i < n_y; ++i) lambda[i] = decay * lambda[i - 1];
  const Matrix g = a * lambda.asDiagonal() * b.transpose();

  Vector points = Vector::Zero(n_x);
  if (n_x > 1) points = Vector::LinSpaced(n_x, 0.0, 1.0);
  const SymmetricMatrix sigma_x = squared_exp_covariance(points, 0.1, 0.1);
  const SymmetricMatrix sigma_e(0.01 * Matrix::Identity(n_y, n_y));
  return LinearGaussianModel(g, sigma_x, sigma_e);
}

LinearGaussianModel make_scalar_gaussian(double g, double var_x, double var_e) {
  Matrix gm(1, 1);
  gm(0, 0) = g;
  return LinearGaussianModel(gm, SymmetricMatrix(Matrix::Constant(1, 1, var_x)),
                             SymmetricMatrix(Matrix::Constant(1, 1, var_e)));
}

double closed_form_eig(const LinearGaussianModel& model) {
  return 0.5 * (cholesky_logdet(model.marginal_y_covariance()) -
                cholesky_logdet(model.noise_covariance()));
}

double closed_form_eig(const LinearGaussianModel& model, const Matrix& u_r, const Matrix& v_s) {
  if (u_r.rows() != model.dim_x() || v_s.rows() != model.dim_y())
    throw std::invalid_argument("closed_form_eig: projection dimensions do not match model");
  const Eigen::Index r = u_r.cols(), s = v_s.cols();
  const Matrix sxx = u_r.transpose() * model.prior_covariance().mat() * u_r;
  const Matrix syy = v_s.transpose() * model.marginal_y_covariance().mat() * v_s;
  const Matrix sxy = u_r.transpose() * model.cross_covariance() * v_s;
  Matrix joint(r + s, r + s);
  joint.topLeftCorner(r, r) = sxx;
  joint.topRightCorner(r, s) = sxy;
  joint.bottomLeftCorner(s, r) = sxy.transpose();
  joint.bottomRightCorner(s, s) = syy;
  return 0.5 * (cholesky_logdet(SymmetricMatrix(sxx)) + cholesky_logdet(SymmetricMatrix(syy)) -
                cholesky_logdet(SymmetricMatrix(joint)));
}

Vector MoessbauerModel::default_velocities() {
  Vector d(3);
  d << -1.3, 0.0, 1.3;
  return d;
}

MoessbauerModel::MoessbauerModel(Vector velocities, double noise_sd)
    : velocities_(std::move(velocities)), noise_sd_(noise_sd) {
  if (velocities_.size() < 1) throw std::invalid_argument("MoessbauerModel: need >= 1 velocity");
  if (!(noise_sd_ > 0.0)) throw std::invalid_argument("MoessbauerModel: noise sd must be positive");
}

Vector MoessbauerModel::forward(const Vector& x) const {
  if (x.size() != 4) throw std::invalid_argument("MoessbauerModel::forward: expected 4 parameters");
  const double center = x[0], width = x[1], height = x[2], offset = x[3];
  const double w2 = width * width;
  Vector out(dim_y());
  for (Eigen::Index i = 0; i < dim_y(); ++i) {
    const double u = center - velocities_[i];
    out[i] = offset - height * w2 / (w2 + u * u);
  }
  return out;
}

JointSampleSet MoessbauerModel::sample_joint(Eigen::Index count, std::uint64_t seed) const {
  if (count < 1) throw std::invalid_argument("sample_joint: need at least one sample");
  RngStream xs(derive_seed(seed, "joint.x"));
  RngStream es(derive_seed(seed, "joint.noise"));
  JointSampleSet s;
  s.seed = seed;
  s.x = sample_prior(xs, count);
  s.y.resize(count, dim_y());
  for (Eigen::Index i = 0; i < count; ++i)
    s.y.row(i) = forward(s.x.row(i).transpose()).transpose() +
                 noise_sd_ * es.normal_vector(dim_y()).transpose();
  return s;
}

Matrix MoessbauerModel::sample_prior(RngStream& rng, Eigen::Index count) const {
  Matrix x(count, 4);
  for (Eigen::Index i = 0; i < count; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = std::exp(kLogWidthMean + kLogWidthSd * rng.normal());
    x(i, 2) = std::exp(kLogHeightMean + kLogHeightSd * rng.normal());
    x(i, 3) = std::exp(kLogOffsetMean + kLogOffsetSd * rng.normal());
  }
  return x;
}

double MoessbauerModel::log_likelihood(const Vector& y, const Vector& x) const {
  if (y.size() != dim_y() || x.size() != 4)
    throw std::invalid_argument("log_likelihood: dimension mismatch");
  const Vector r = y - forward(x);
  const double var = noise_sd_ * noise_sd_;
  return -0.5 * (dim_y() * (kLog2Pi + std::log(var)) + r.squaredNorm() / var);
}

double MoessbauerModel::log_prior(const Vector& x) const {
  if (x.size() != 4) throw std::invalid_argument("log_prior: expected 4 parameters");
  const double c = x[0];
  return -0.5 * (kLog2Pi + c * c) + lognormal_logpdf(x[1], kLogWidthMean, kLogWidthSd) +
         lognormal_logpdf(x[2], kLogHeightMean, kLogHeightSd) +
         lognormal_logpdf(x[3], kLogOffsetMean, kLogOffsetSd);
}

Matrix MoessbauerModel::forward_jacobian(const Vector& x) const {
  if (x.size() != 4) throw std::invalid_argument("forward_jacobian: expected 4 parameters");
  const double center = x[0], width = x[1], height = x[2];
  const double w2 = width * width;
  Matrix j(dim_y(), 4);
  for (Eigen::Index i = 0; i < dim_y(); ++i) {
    const double u = center - velocities_[i];
    const double q = w2 + u * u;
    j(i, 0) = 2.0 * height * w2 * u / (q * q);
    j(i, 1) = -2.0 * height * width * u * u / (q * q);
    j(i, 2) = -w2 / q;
    j(i, 3) = 1.0;
  }
  return j;
}

Vector MoessbauerModel::prior_mean() const {
  Vector m(4);
  m << 0.0, lognormal_mean(kLogWidthMean, kLogWidthSd), lognormal_mean(kLogHeightMean, kLogHeightSd),
      lognormal_mean(kLogOffsetMean, kLogOffsetSd);
  return m;
}

SymmetricMatrix MoessbauerModel::prior_covariance() const {
  Vector v(4);
  v << 1.0, lognormal_var(kLogWidthMean, kLogWidthSd), lognormal_var(kLogHeightMean, kLogHeightSd),
      lognormal_var(kLogOffsetMean, kLogOffsetSd);
  return SymmetricMatrix::from_diagonal(v);
}

SymmetricMatrix MoessbauerModel::noise_covariance() const {
  return SymmetricMatrix(noise_sd_ * noise_sd_ * Matrix::Identity(dim_y(), dim_y()));
}

JointSampleSet FocusedCenterModel::sample_joint(Eigen::Index count, std::uint64_t seed) const {
  JointSampleSet full = base_.sample_joint(count, seed);
  JointSampleSet s;
  s.seed = seed;
  s.x = full.x.col(0);
  s.y = std::move(full.y);
  return s;
}

Matrix FocusedCenterModel::sample_prior(RngStream& rng, Eigen::Index count) const {
  return rng.normal_matrix(count, 1);
}

double FocusedCenterModel::log_prior(const Vector& x) const {
  if (x.size() != 1) throw std::invalid_argument("log_prior: focused parameter is scalar");
  return standard_normal_logpdf(x);
}

}  // namespace tmeig
