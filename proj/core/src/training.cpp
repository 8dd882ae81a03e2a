#include "tmeig/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "component_plan.hpp"
#include "map_json.hpp"
#include "tmeig/optim.hpp"

namespace tmeig {

using detail::ComponentPlan;

namespace {

// Objective evaluator over a fixed standardized sample set. Hermite tables at
// the sample points and at all quadrature nodes are precomputed once; each
// evaluation then reduces to a handful of N x (D+1) passes and two small
// matrix products.
class ComponentObjective {
 public:
  ComponentObjective(const MultiIndexSet& set, const Matrix& w, int quad_order, double scale_k)
      : plan_(ComponentPlan::build(set)),
        n_(w.rows()),
        quad_order_(quad_order),
        log_scale_k_(std::log(scale_k)) {
    f_ = detail::prefix_features(plan_, w.leftCols(plan_.k - 1));
    wk_ = w.col(plan_.k - 1);
    const int d = plan_.last_max;
    if (d > 1) {
      psi_zero_ = detail::hermite_at_zero(d);
      psi_wk_ = hermite_table(wk_, d - 1);
      const auto& [xi, omega] = gauss_legendre_reference(quad_order_);
      xi_ = xi;
      omega_ = omega;
      psi_tq_.reserve(quad_order_);
      for (int q = 0; q < quad_order_; ++q) {
        const Vector tq = 0.5 * (xi_[q] + 1.0) * wk_.array();
        psi_tq_.push_back(hermite_table(tq, d - 1));
      }
    }
  }

  ObjectiveResult operator()(const Vector& c) const {
    const int d = plan_.last_max;
    u_.setZero(n_, d + 1);
    for (int a = 0; a < plan_.n_alpha; ++a)
      u_.col(plan_.last_of[a]) += c[a] * f_.col(plan_.prefix_of[a]);

    double value = 0.0;
    a_.resize(n_, d + 1);

    if (d <= 1) {
      // d_k f is constant in z_k: S = f(w, 0) + w_k g(d_k f), no quadrature.
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double slope = d == 1 ? u_(i, 1) : 0.0;
        const double g = softplus(slope);
        const double s = u_(i, 0) + wk_[i] * g;
        value += 0.5 * s * s - log_softplus(slope);
        a_(i, 0) = s;
        if (d == 1) a_(i, 1) = s * wk_[i] * softplus_deriv(slope) - softplus_deriv(slope) / g;
      }
    } else {
      // S_i = f(prefix, 0) + (wk/2) sum_q omega_q g(d_iq).
      s_ = u_ * psi_zero_;
      gp_.resize(n_, quad_order_);
      for (int q = 0; q < quad_order_; ++q) {
        dq_ = Vector::Zero(n_);
        for (int m = 1; m <= d; ++m)
          dq_ += std::sqrt(double(m)) * psi_tq_[q].col(m - 1).cwiseProduct(u_.col(m));
        sg_ = dq_;
        detail::softplus_inplace(sg_);
        s_ += (0.5 * omega_[q]) * wk_.cwiseProduct(sg_);
        detail::sigmoid_inplace(dq_);
        gp_.col(q) = dq_;
      }

      // d_k f at the sample points, for the log-derivative term.
      dk_ = Vector::Zero(n_);
      for (int m = 1; m <= d; ++m)
        dk_ += std::sqrt(double(m)) * psi_wk_.col(m - 1).cwiseProduct(u_.col(m));

      value = 0.5 * s_.squaredNorm() - detail::sum_log_softplus(dk_);

      ratio_ = dk_;
      detail::sigmoid_inplace(ratio_);
      sg_ = dk_;
      detail::softplus_inplace(sg_);
      ratio_ = ratio_.cwiseQuotient(sg_);

      // A(:, m) collects per-sample weights of the m-th last-degree group;
      // grad_alpha = (F^T A)(prefix(alpha), last(alpha)) / N.
      for (int m = 0; m <= d; ++m) a_.col(m) = psi_zero_[m] * s_;
      for (int q = 0; q < quad_order_; ++q) {
        dq_ = 0.5 * omega_[q] * wk_.cwiseProduct(gp_.col(q)).cwiseProduct(s_);
        for (int m = 1; m <= d; ++m)
          a_.col(m) += std::sqrt(double(m)) * psi_tq_[q].col(m - 1).cwiseProduct(dq_);
      }
      for (int m = 1; m <= d; ++m)
        a_.col(m) -= std::sqrt(double(m)) * psi_wk_.col(m - 1).cwiseProduct(ratio_);
    }

    value = value / double(n_) + log_scale_k_;
    const Matrix b = f_.transpose() * a_;
    Vector grad(plan_.n_alpha);
    for (int i = 0; i < plan_.n_alpha; ++i)
      grad[i] = b(plan_.prefix_of[i], plan_.last_of[i]) / double(n_);

    return {value, std::move(grad)};
  }

  // Analytic coefficient Hessian, using the cached feature tables.
  Matrix hessian(const Vector& c) const {
    const int d = plan_.last_max;
    const int p = plan_.n_alpha;
    u_.setZero(n_, d + 1);
    for (int a = 0; a < p; ++a) u_.col(plan_.last_of[a]) += c[a] * f_.col(plan_.prefix_of[a]);

    Matrix h = Matrix::Zero(p, p);
    Vector feat0(p), dfeat(p), sgrad(p), equad(p);
    Matrix squad(p, p);

    for (Eigen::Index i = 0; i < n_; ++i) {
      double s, dk;
      if (d <= 1) {
        dk = d == 1 ? u_(i, 1) : 0.0;
        const double g = softplus(dk);
        s = u_(i, 0) + wk_[i] * g;
        for (int a = 0; a < p; ++a) {
          feat0[a] = plan_.last_of[a] == 0 ? f_(i, plan_.prefix_of[a]) : 0.0;
          dfeat[a] = plan_.last_of[a] == 1 ? f_(i, plan_.prefix_of[a]) : 0.0;
        }
        sgrad = feat0 + wk_[i] * softplus_deriv(dk) * dfeat;
        squad = wk_[i] * softplus_second(dk) * (dfeat * dfeat.transpose());
      } else {
        for (int a = 0; a < p; ++a) {
          const int m = plan_.last_of[a];
          feat0[a] = psi_zero_[m] * f_(i, plan_.prefix_of[a]);
          dfeat[a] =
              m == 0 ? 0.0 : std::sqrt(double(m)) * psi_wk_(i, m - 1) * f_(i, plan_.prefix_of[a]);
        }
        s = 0.0;
        for (int m = 0; m <= d; ++m) s += psi_zero_[m] * u_(i, m);
        sgrad = feat0;
        squad.setZero();
        for (int q = 0; q < quad_order_; ++q) {
          double dq = 0.0;
          for (int a = 0; a < p; ++a) {
            const int m = plan_.last_of[a];
            equad[a] = m == 0 ? 0.0
                              : std::sqrt(double(m)) * psi_tq_[q](i, m - 1) *
                                    f_(i, plan_.prefix_of[a]);
          }
          for (int m = 1; m <= d; ++m)
            dq += std::sqrt(double(m)) * psi_tq_[q](i, m - 1) * u_(i, m);
          const double wq = 0.5 * wk_[i] * omega_[q];
          s += wq * softplus(dq);
          sgrad += wq * softplus_deriv(dq) * equad;
          squad += wq * softplus_second(dq) * (equad * equad.transpose());
        }
        dk = 0.0;
        for (int m = 1; m <= d; ++m)
          dk += std::sqrt(double(m)) * psi_wk_(i, m - 1) * u_(i, m);
      }
      const double g = softplus(dk), gprime = softplus_deriv(dk), gsec = softplus_second(dk);
      const double phi = (gsec * g - gprime * gprime) / (g * g);
      h += sgrad * sgrad.transpose() + s * squad - phi * (dfeat * dfeat.transpose());
    }
    return h / double(n_);
  }

 private:
  ComponentPlan plan_;
  Eigen::Index n_;
  int quad_order_;
  double log_scale_k_;
  Matrix f_;
  Vector wk_;
  Matrix psi_wk_;
  Vector psi_zero_;
  std::vector<Matrix> psi_tq_;
  Vector xi_, omega_;
  // Per-evaluation scratch, reused across optimizer iterations.
  mutable Matrix u_, a_, gp_;
  mutable Vector s_, dq_, dk_, ratio_, sg_;
};

Matrix standardize(const Matrix& samples, const Vector& shift, const Vector& scale) {
  return (samples.rowwise() - shift.transpose()).array().rowwise() / scale.transpose().array();
}

void standardization_from_samples(const Matrix& samples, Vector* shift, Vector* scale) {
  const Eigen::Index n = samples.rows();
  *shift = samples.colwise().mean();
  if (n < 2) {
    *scale = Vector::Ones(samples.cols());
    return;
  }
  const Matrix centered = samples.rowwise() - shift->transpose();
  *scale = (centered.array().square().colwise().sum() / double(n - 1)).sqrt();
  for (Eigen::Index j = 0; j < scale->size(); ++j)
    if (!((*scale)[j] > 1e-12)) (*scale)[j] = 1.0;
}

}  // namespace

std::pair<double, Vector> empirical_objective(const MonotoneComponent& comp,
                                              const Matrix& samples) {
  if (samples.cols() != comp.dim())
    throw std::invalid_argument("empirical_objective: sample dimension mismatch");
  if (samples.rows() < 1) throw std::invalid_argument("empirical_objective: need samples");
  const Matrix w = standardize(samples, comp.shift, comp.scale);
  ComponentObjective objective(comp.indices, w, comp.quad_order, comp.scale[comp.dim() - 1]);
  auto [value, grad] = objective(comp.coeffs);
  if (!std::isfinite(value))
    throw std::runtime_error("empirical_objective: non-finite objective value");
  return {value, std::move(grad)};
}

std::pair<MonotoneComponent, FitReport> fit_component(const MultiIndexSet& set,
                                                      const Matrix& samples,
                                                      const FitOptions& opts) {
  if (samples.cols() != set.dim())
    throw std::invalid_argument("fit_component: sample dimension mismatch");
  if (samples.rows() <= set.size())
    throw std::invalid_argument("fit_component: underdetermined (need N > basis size " +
                                std::to_string(set.size()) + ", got N = " +
                                std::to_string(samples.rows()) + ")");

  MonotoneComponent comp = make_component(set, opts.quad_order);
  if (opts.standardize) standardization_from_samples(samples, &comp.shift, &comp.scale);

  const Matrix w = standardize(samples, comp.shift, comp.scale);
  ComponentObjective objective(set, w, opts.quad_order, comp.scale[set.dim() - 1]);

  LbfgsOptions lopts;
  lopts.grad_tol = opts.grad_tol;
  lopts.max_iterations = opts.max_iterations;
  const LbfgsResult res = minimize_lbfgs([&](const Vector& c) { return objective(c); },
                                         Vector::Zero(set.size()), lopts);
  comp.coeffs = res.x;

  FitReport report;
  report.objective = res.value;
  report.grad_norm = res.grad_norm;
  report.iterations = res.iterations;
  report.converged = res.converged;

  // Newton polish with the analytic Hessian where it is cheap: quasi-Newton
  // exits leave a ~grad_tol coefficient residual that the exact curvature
  // squares away, which the affine-Gaussian estimator identities rely on.
  const double polish_cost = double(samples.rows()) * opts.quad_order *
                             double(set.size()) * double(set.size());
  if (polish_cost < 5e8) {
    for (int step = 0; step < 3; ++step) {
      auto [value, grad] = objective(comp.coeffs);
      if (grad.norm() < 1e-13 || grad.norm() > std::max(1e-4, opts.grad_tol * 100)) break;
      Eigen::LDLT<Matrix> ldlt(objective.hessian(comp.coeffs));
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
      const Vector direction = ldlt.solve(grad);
      MonotoneComponent trial = comp;
      double scale = 1.0;
      bool improved = false;
      for (int halving = 0; halving < 5 && !improved; ++halving) {
        trial.coeffs = comp.coeffs - scale * direction;
        improved = objective(trial.coeffs).gradient.norm() < grad.norm();
        scale *= 0.5;
      }
      if (!improved) break;
      comp.coeffs = trial.coeffs;
    }
    const auto [value, grad] = objective(comp.coeffs);
    report.objective = value;
    report.grad_norm = grad.norm();
    if (report.grad_norm <= opts.grad_tol) report.converged = true;
  }
  return {std::move(comp), report};
}

TriangularMap fit_triangular_map(const Matrix& samples, const std::vector<MultiIndexSet>& sets,
                                 const FitOptions& opts, std::vector<FitReport>* reports) {
  const Eigen::Index n = samples.cols();
  if (static_cast<Eigen::Index>(sets.size()) != n)
    throw std::invalid_argument("fit_triangular_map: need one index set per coordinate");
  TriangularMap map;
  if (reports != nullptr) reports->clear();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (sets[k].dim() != k + 1)
      throw std::invalid_argument("fit_triangular_map: index set " + std::to_string(k) +
                                  " has wrong dimension");
    try {
      auto [comp, report] = fit_component(sets[k], samples.leftCols(k + 1), opts);
      map.components.push_back(std::move(comp));
      if (reports != nullptr) reports->push_back(report);
    } catch (const std::exception& e) {
      throw std::runtime_error("component " + std::to_string(k) + ": " + e.what());
    }
  }
  return map;
}

TriangularMap fit_triangular_map(const Matrix& samples, int degree, const FitOptions& opts,
                                 std::vector<FitReport>* reports) {
  std::vector<MultiIndexSet> sets;
  for (Eigen::Index k = 1; k <= samples.cols(); ++k)
    sets.push_back(MultiIndexSet::total_degree(k, degree));
  return fit_triangular_map(samples, sets, opts, reports);
}

BlockTriangularMap fit_block_map(const Matrix& lead, const Matrix& trail, BlockOrdering ordering,
                                 int degree, const FitOptions& opts,
                                 std::vector<FitReport>* reports) {
  if (lead.rows() != trail.rows())
    throw std::invalid_argument("fit_block_map: lead/trail sample counts differ");
  Matrix joint(lead.rows(), lead.cols() + trail.cols());
  joint.leftCols(lead.cols()) = lead;
  if (trail.cols() > 0) joint.rightCols(trail.cols()) = trail;
  BlockTriangularMap map;
  map.ordering = ordering;
  map.n_lead = lead.cols();
  map.map = fit_triangular_map(joint, degree, opts, reports);
  return map;
}

DegreeSelection select_degree_cv(const Matrix& samples, const std::vector<int>& degrees,
                                 int folds, const FitOptions& opts) {
  if (folds < 2) throw std::invalid_argument("select_degree_cv: need at least 2 folds");
  if (degrees.empty()) throw std::invalid_argument("select_degree_cv: no candidate degrees");
  const Eigen::Index n = samples.rows();
  const Eigen::Index dim = samples.cols();
  if (n < folds) throw std::invalid_argument("select_degree_cv: fewer samples than folds");

  DegreeSelection sel;
  sel.degrees = degrees;
  sel.mean_scores.assign(degrees.size(), std::numeric_limits<double>::quiet_NaN());
  sel.skipped.assign(degrees.size(), false);

  // Contiguous folds; deterministic.
  std::vector<Eigen::Index> bounds(folds + 1);
  for (int f = 0; f <= folds; ++f) bounds[f] = n * f / folds;

  Eigen::Index max_held = 0;
  for (int f = 0; f < folds; ++f) max_held = std::max(max_held, bounds[f + 1] - bounds[f]);

  for (std::size_t di = 0; di < degrees.size(); ++di) {
    const Eigen::Index max_basis = MultiIndexSet::total_degree(dim, degrees[di]).size();
    if (n - max_held <= max_basis) {
      sel.skipped[di] = true;
      continue;
    }
    double score = 0.0;
    bool ok = true;
    for (int f = 0; f < folds && ok; ++f) {
      const Eigen::Index held_lo = bounds[f], held_hi = bounds[f + 1];
      const Eigen::Index held = held_hi - held_lo;
      Matrix train(n - held, dim);
      train.topRows(held_lo) = samples.topRows(held_lo);
      train.bottomRows(n - held_hi) = samples.bottomRows(n - held_hi);
      const Matrix valid = samples.middleRows(held_lo, held);
      try {
        TriangularMap map = fit_triangular_map(train, degrees[di], opts);
        for (Eigen::Index k = 0; k < dim; ++k)
          score += empirical_objective(map.components[k], valid.leftCols(k + 1)).first;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      sel.skipped[di] = true;
      continue;
    }
    sel.mean_scores[di] = score / folds;
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t di = 0; di < degrees.size(); ++di) {
    if (sel.skipped[di]) continue;
    if (sel.mean_scores[di] < best) {
      best = sel.mean_scores[di];
      sel.chosen_degree = degrees[di];
    }
  }
  if (sel.chosen_degree < 0)
    throw std::runtime_error("select_degree_cv: every candidate degree was skipped");
  return sel;
}

SymmetricMatrix observed_fisher(const MonotoneComponent& comp, const Matrix& samples) {
  const Eigen::Index k = comp.dim();
  if (samples.cols() != k) throw std::invalid_argument("observed_fisher: dimension mismatch");
  const Eigen::Index n = samples.rows();
  const Matrix w = standardize(samples, comp.shift, comp.scale);

  const ComponentPlan plan = ComponentPlan::build(comp.indices);
  const Matrix f = detail::prefix_features(plan, w.leftCols(k - 1));
  const int d = plan.last_max;
  const Vector psi0 = detail::hermite_at_zero(d);
  const Vector wk = w.col(k - 1);
  const Matrix psi_wk = hermite_table(wk, std::max(d - 1, 0));
  const auto& [xi, omega] = gauss_legendre_reference(comp.quad_order);

  const int p = plan.n_alpha;
  Matrix h = Matrix::Zero(p, p);
  Vector feat0(p), dfeat(p), sgrad(p), equad(p);

  for (Eigen::Index i = 0; i < n; ++i) {
    // Value features at (prefix, 0) and derivative features at the point.
    for (int a = 0; a < p; ++a) {
      const int m = plan.last_of[a];
      feat0[a] = psi0[m] * f(i, plan.prefix_of[a]);
      dfeat[a] = (m == 0) ? 0.0
                          : std::sqrt(double(m)) * psi_wk(i, m - 1) * f(i, plan.prefix_of[a]);
    }
    // S_i, dS/dc, and the quadrature part of d2S/dc2.
    double u0 = 0.0;
    for (int a = 0; a < p; ++a) u0 += comp.coeffs[a] * feat0[a];
    double s = u0;
    sgrad = feat0;
    Matrix squad = Matrix::Zero(p, p);
    for (int q = 0; q < comp.quad_order; ++q) {
      const double t = 0.5 * (xi[q] + 1.0) * wk[i];
      Vector tv = Vector::Constant(1, t);
      const Matrix pt = hermite_table(tv, std::max(d - 1, 0));
      double dq = 0.0;
      for (int a = 0; a < p; ++a) {
        const int m = plan.last_of[a];
        equad[a] = (m == 0) ? 0.0
                            : std::sqrt(double(m)) * pt(0, m - 1) * f(i, plan.prefix_of[a]);
        dq += comp.coeffs[a] * equad[a];
      }
      const double wq = 0.5 * wk[i] * omega[q];
      s += wq * softplus(dq);
      sgrad += wq * softplus_deriv(dq) * equad;
      squad += wq * softplus_second(dq) * (equad * equad.transpose());
    }
    double dk = 0.0;
    for (int a = 0; a < p; ++a) dk += comp.coeffs[a] * dfeat[a];
    const double g = softplus(dk), gp = softplus_deriv(dk), gpp = softplus_second(dk);
    const double phi = (gpp * g - gp * gp) / (g * g);  // d^2/dd^2 log g
    h += sgrad * sgrad.transpose() + s * squad - phi * (dfeat * dfeat.transpose());
  }
  return SymmetricMatrix(h / double(n));
}

void save_map(const std::string& path, const BlockTriangularMap& map,
              const std::vector<FitReport>& reports) {
  nlohmann::json j = detail::map_to_json(map);
  j["fit_reports"] = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json rj;
    rj["objective"] = r.objective;
    rj["grad_norm"] = r.grad_norm;
    rj["iterations"] = r.iterations;
    rj["converged"] = r.converged;
    rj["chosen_degree"] = r.chosen_degree;
    rj["cv_scores"] = r.cv_scores;
    j["fit_reports"].push_back(rj);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_map: cannot open " + path);
  out << j.dump(2) << "\n";
}

std::vector<FitReport> load_fit_reports(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_fit_reports: cannot open " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  std::vector<FitReport> reports;
  if (!j.contains("fit_reports")) return reports;
  for (const auto& rj : j.at("fit_reports")) {
    FitReport r;
    r.objective = rj.at("objective").get<double>();
    r.grad_norm = rj.at("grad_norm").get<double>();
    r.iterations = rj.at("iterations").get<int>();
    r.converged = rj.at("converged").get<bool>();
    r.chosen_degree = rj.at("chosen_degree").get<int>();
    r.cv_scores = rj.at("cv_scores").get<std::vector<double>>();
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace tmeig
