#include "tmeig/dimred.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tmeig/density.hpp"

namespace tmeig {

std::string to_string(ReductionMethod method) {
  switch (method) {
    case ReductionMethod::CMI: return "CMI";
    case ReductionMethod::PCA: return "PCA";
    case ReductionMethod::CCA: return "CCA";
  }
  return "?";
}

ReductionMethod reduction_method_from_string(const std::string& s) {
  if (s == "CMI" || s == "cmi") return ReductionMethod::CMI;
  if (s == "PCA" || s == "pca") return ReductionMethod::PCA;
  if (s == "CCA" || s == "cca") return ReductionMethod::CCA;
  throw std::invalid_argument("unknown reduction method: " + s);
}

JointCovariance exact_joint_covariance(const LinearGaussianModel& model) {
  return {model.prior_covariance(), model.marginal_y_covariance(), model.cross_covariance()};
}

JointCovariance empirical_joint_covariance(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows())
    throw std::invalid_argument("empirical_joint_covariance: sample counts differ");
  Matrix joint(x.rows(), x.cols() + y.cols());
  joint << x, y;
  const SymmetricMatrix full = sample_covariance(joint);
  const Eigen::Index nx = x.cols(), ny = y.cols();
  return {SymmetricMatrix(full.mat().topLeftCorner(nx, nx)),
          SymmetricMatrix(full.mat().bottomRightCorner(ny, ny)),
          full.mat().topRightCorner(nx, ny)};
}

DiagnosticPair diagnosticpair_from_moments(const Matrix& grad_sq_x, const Matrix& grad_sq_y,
                                           const SymmetricMatrix& sigma_x,
                                           const SymmetricMatrix& sigma_e, Eigen::Index n_mc) {
  const Matrix sx_half = matrix_sqrt(sigma_x);
  const Matrix se_inv_half = matrix_inv_sqrt(sigma_e);
  DiagnosticPair pair;
  pair.h_x = SymmetricMatrix(sx_half * grad_sq_x * sx_half);
  pair.h_y = SymmetricMatrix(se_inv_half * grad_sq_y * se_inv_half);
  pair.n_mc = n_mc;
  return pair;
}

DiagnosticPair diagnostic_matrices(const ModelBase& model, Eigen::Index n_mc,
                                   std::uint64_t seed) {
  const SymmetricMatrix sigma_x = model.prior_covariance();
  const SymmetricMatrix sigma_e = model.noise_covariance();
  const Matrix se_lower = cholesky_lower(sigma_e);

  const auto weighted_products = [&](const Matrix& jac, Matrix& acc_x, Matrix& acc_y) {
    // J^T Se^{-1} J via triangular solves, and J Sx J^T.
    const Matrix w = se_lower.triangularView<Eigen::Lower>().solve(jac);
    acc_x += w.transpose() * w;
    acc_y += jac * sigma_x.mat() * jac.transpose();
  };

  Matrix acc_x = Matrix::Zero(model.dim_x(), model.dim_x());
  Matrix acc_y = Matrix::Zero(model.dim_y(), model.dim_y());

  if (dynamic_cast<const LinearGaussianModel*>(&model) != nullptr) {
    weighted_products(model.forward_jacobian(Vector::Zero(model.dim_x())), acc_x, acc_y);
    return diagnosticpair_from_moments(acc_x, acc_y, sigma_x, sigma_e, 0);
  }

  if (n_mc < 1) throw std::invalid_argument("diagnostic_matrices: need n_mc >= 1");
  RngStream rng(derive_seed(seed, "dimred.mc"));
  const Matrix draws = model.sample_prior(rng, n_mc);
  for (Eigen::Index i = 0; i < n_mc; ++i)
    weighted_products(model.forward_jacobian(draws.row(i).transpose()), acc_x, acc_y);
  acc_x /= double(n_mc);
  acc_y /= double(n_mc);
  return diagnosticpair_from_moments(acc_x, acc_y, sigma_x, sigma_e, n_mc);
}

ProjectionBasis reduction_basis_cmi(const DiagnosticPair& pair, const SymmetricMatrix& sigma_x,
                                    const SymmetricMatrix& sigma_e) {
  const EigenPair ex = symmetric_eigendecomposition(pair.h_x);
  const EigenPair ey = symmetric_eigendecomposition(pair.h_y);
  ProjectionBasis basis;
  basis.method = ReductionMethod::CMI;
  basis.u = matrix_inv_sqrt(sigma_x) * ex.vectors;
  basis.v = matrix_inv_sqrt(sigma_e) * ey.vectors;
  basis.lambda_x = ex.values;
  basis.lambda_y = ey.values;
  basis.whitened_u = ex.vectors;
  basis.whitened_v = ey.vectors;
  return basis;
}

ProjectionBasis reduction_basis_pca(const JointCovariance& cov) {
  const EigenPair ex = symmetric_eigendecomposition(cov.xx);
  const EigenPair ey = symmetric_eigendecomposition(cov.yy);
  return {ReductionMethod::PCA, ex.vectors, ey.vectors, ex.values, ey.values};
}

ProjectionBasis reduction_basis_cca(const JointCovariance& cov) {
  // Sxy Syy^{-1} Syx u = rho Sxx u, and the same with the roles swapped.
  const Matrix syy_inv_syx = cholesky_lower(cov.yy).triangularView<Eigen::Lower>().solve(
      Matrix(cov.xy.transpose()));
  const Matrix mx = syy_inv_syx.transpose() * syy_inv_syx;
  const Matrix sxx_inv_sxy =
      cholesky_lower(cov.xx).triangularView<Eigen::Lower>().solve(cov.xy);
  const Matrix my = sxx_inv_sxy.transpose() * sxx_inv_sxy;
  const EigenPair ex = generalized_eigendecomposition(SymmetricMatrix(mx), cov.xx);
  const EigenPair ey = generalized_eigendecomposition(SymmetricMatrix(my), cov.yy);
  return {ReductionMethod::CCA, ex.vectors, ey.vectors, ex.values, ey.values};
}

ProjectionBasis reduction_basis(ReductionMethod method, const ModelBase& model,
                                Eigen::Index n_mc, std::uint64_t seed) {
  if (method == ReductionMethod::CMI) {
    const DiagnosticPair pair = diagnostic_matrices(model, n_mc, seed);
    return reduction_basis_cmi(pair, model.prior_covariance(), model.noise_covariance());
  }
  const auto* linear = dynamic_cast<const LinearGaussianModel*>(&model);
  JointCovariance cov;
  if (linear != nullptr) {
    cov = exact_joint_covariance(*linear);
  } else {
    if (n_mc < 2) throw std::invalid_argument("reduction_basis: need n_mc >= 2 samples");
    const JointSampleSet js = model.sample_joint(n_mc, derive_seed(seed, "dimred.cov"));
    cov = empirical_joint_covariance(js.x, js.y);
  }
  ProjectionBasis basis =
      method == ReductionMethod::PCA ? reduction_basis_pca(cov) : reduction_basis_cca(cov);
  basis.whitened_u = matrix_sqrt(model.prior_covariance()) * basis.u;
  basis.whitened_v = matrix_sqrt(model.noise_covariance()) * basis.v;
  return basis;
}

JointSampleSet project(const JointSampleSet& samples, const ProjectionBasis& basis,
                       Eigen::Index r, Eigen::Index s) {
  if (r < 1 || r > basis.u.cols() || s < 1 || s > basis.v.cols())
    throw std::invalid_argument("project: (r, s) out of range");
  if (samples.x.cols() != basis.u.rows() || samples.y.cols() != basis.v.rows())
    throw std::invalid_argument("project: basis does not match sample dimensions");
  JointSampleSet out;
  out.seed = samples.seed;
  out.n_train = samples.n_train;
  out.x = samples.x * basis.u_r(r);
  out.y = samples.y * basis.v_s(s);
  return out;
}

namespace {

// Diagnostic information not captured by the retained whitened directions:
// Tr(H) - Tr(P H P) with P the projector onto the retained span. For CMI
// bases this equals the trailing eigenvalue sum of H.
double complement_trace(const SymmetricMatrix& h, const Matrix& whitened_retained) {
  if (whitened_retained.cols() == 0) return h.mat().trace();
  Eigen::HouseholderQR<Matrix> qr(whitened_retained);
  const Matrix q = Matrix(qr.householderQ()).leftCols(whitened_retained.cols());
  return h.mat().trace() - (q.transpose() * h.mat() * q).trace();
}

}  // namespace

double truncation_bound(const DiagnosticPair& pair, const ProjectionBasis& basis, Eigen::Index r,
                        Eigen::Index s) {
  if (r < 0 || r > basis.u.cols() || s < 0 || s > basis.v.cols())
    throw std::invalid_argument("truncation_bound: (r, s) out of range");
  if (basis.method == ReductionMethod::CMI) {
    double out = 0.0;
    for (Eigen::Index i = r; i < basis.lambda_x.size(); ++i) out += basis.lambda_x[i];
    for (Eigen::Index i = s; i < basis.lambda_y.size(); ++i) out += basis.lambda_y[i];
    return out;
  }
  if (basis.whitened_u.cols() == 0 || basis.whitened_v.cols() == 0)
    throw std::invalid_argument(
        "truncation_bound: basis lacks whitened directions (build it via reduction_basis)");
  return complement_trace(pair.h_x, basis.whitened_u.leftCols(r)) +
         complement_trace(pair.h_y, basis.whitened_v.leftCols(s));
}

double gaussian_eig(const JointCovariance& cov, const Matrix& u_r, const Matrix& v_s) {
  const Eigen::Index r = u_r.cols(), s = v_s.cols();
  const Matrix sxx = u_r.transpose() * cov.xx.mat() * u_r;
  const Matrix syy = v_s.transpose() * cov.yy.mat() * v_s;
  const Matrix sxy = u_r.transpose() * cov.xy * v_s;
  Matrix joint(r + s, r + s);
  joint.topLeftCorner(r, r) = sxx;
  joint.topRightCorner(r, s) = sxy;
  joint.bottomLeftCorner(s, r) = sxy.transpose();
  joint.bottomRightCorner(s, s) = syy;
  return 0.5 * (cholesky_logdet(SymmetricMatrix(sxx)) + cholesky_logdet(SymmetricMatrix(syy)) -
                cholesky_logdet(SymmetricMatrix(joint)));
}

double gaussian_eig(const Matrix& x_samples, const Matrix& y_samples, const Matrix& u_r,
                    const Matrix& v_s) {
  if (x_samples.rows() < u_r.cols() + v_s.cols() + 2)
    throw std::invalid_argument("gaussian_eig: need at least r + s + 2 samples");
  return gaussian_eig(empirical_joint_covariance(x_samples, y_samples), u_r, v_s);
}

namespace {

// Exact log-density of X_r = U_r^T X. Closed-form Gaussian marginal when the
// prior is Gaussian; change of variables through the square U_r otherwise.
std::function<double(const Vector&)> projected_prior_logpdf(const ModelBase& model,
                                                            const Matrix& u_r) {
  if (dynamic_cast<const LinearGaussianModel*>(&model) != nullptr) {
    auto density = std::make_shared<GaussianDensity>(
        u_r.transpose() * model.prior_mean(),
        SymmetricMatrix(u_r.transpose() * model.prior_covariance().mat() * u_r));
    return [density](const Vector& xr) { return density->logpdf(xr); };
  }
  if (u_r.rows() == u_r.cols()) {
    Eigen::PartialPivLU<Matrix> lu(u_r.transpose());
    const double log_abs_det = std::log(std::abs(lu.determinant()));
    auto solver = std::make_shared<Eigen::PartialPivLU<Matrix>>(lu);
    const ModelBase* m = &model;
    return [solver, log_abs_det, m](const Vector& xr) {
      return m->log_prior(solver->solve(xr)) - log_abs_det;
    };
  }
  throw CapabilityError(
      "projected_eig_pos: projected prior density requires a Gaussian prior or a full-rank "
      "projection");
}

}  // namespace

EigEstimate projected_eig_pos(const ModelBase& model, const ProjectionBasis& basis,
                              Eigen::Index r, Eigen::Index s, Eigen::Index total, double p,
                              int degree, const FitOptions& fit, std::uint64_t seed) {
  const auto prior_r = projected_prior_logpdf(model, basis.u_r(r));

  JointSampleSet joint = model.sample_joint(total, derive_seed(seed, "cell.joint"));
  JointSampleSet proj = project(joint, basis, r, s);
  const Eigen::Index min_train = MultiIndexSet::total_degree(r + s, degree).size() + 1;
  const auto [m_eval, n_train] = allocate(total, p, min_train);
  proj.set_split(n_train);

  const BlockTriangularMap yx =
      fit_block_map(proj.train_y(), proj.train_x(), BlockOrdering::YThenX, degree, fit);

  const Matrix eval_x = proj.eval_x();
  const Matrix eval_y = proj.eval_y();
  const Vector cond = conditional_logpdf_batch(yx, eval_x, eval_y);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eval_x.rows(); ++i)
    acc += cond[i] - prior_r(eval_x.row(i).transpose());

  EigEstimate est;
  est.kind = EigKind::Pos;
  est.value = acc / double(eval_x.rows());
  est.L = total;
  est.M = m_eval;
  est.N = n_train;
  est.seed = seed;
  if (!std::isfinite(est.value)) throw std::runtime_error("projected_eig_pos: non-finite estimate");
  return est;
}

EigEstimate projected_eig_gaussian(const ModelBase& model, const ProjectionBasis& basis,
                                   Eigen::Index r, Eigen::Index s, Eigen::Index total,
                                   std::uint64_t seed) {
  const JointSampleSet joint = model.sample_joint(total, derive_seed(seed, "cell.joint"));
  EigEstimate est;
  est.kind = EigKind::Gaussian;
  est.value = gaussian_eig(joint.x, joint.y, basis.u_r(r), basis.v_s(s));
  est.L = total;
  est.M = total;
  est.N = 0;
  est.seed = seed;
  return est;
}

std::string dimred_csv_string(const std::vector<DimredRow>& rows) {
  std::ostringstream out;
  out << "method,r,s,replicate,seed,value,exact_projected,bound\n";
  char buf[40];
  for (const auto& row : rows) {
    out << to_string(row.method) << ',' << row.r << ',' << row.s << ',' << row.replicate << ','
        << row.seed << ',';
    if (row.value.has_value()) {
      std::snprintf(buf, sizeof(buf), "%.17g", *row.value);
      out << buf;
    }
    out << ',';
    if (row.exact_projected.has_value()) {
      std::snprintf(buf, sizeof(buf), "%.17g", *row.exact_projected);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", row.bound);
    out << ',' << buf << '\n';
  }
  return out.str();
}

void write_dimred_csv(const std::string& path, const std::vector<DimredRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dimred_csv: cannot open " + path);
  out << dimred_csv_string(rows);
}

}  // namespace tmeig
