#include "tmeig/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "parallel.hpp"

namespace tmeig {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sanitize_csv(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

Vector rowwise_log_likelihood(const ModelBase& model, const Matrix& y, const Matrix& x) {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out[i] = model.log_likelihood(y.row(i).transpose(), x.row(i).transpose());
  return out;
}

Vector rowwise_log_prior(const ModelBase& model, const Matrix& x) {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = model.log_prior(x.row(i).transpose());
  return out;
}

}  // namespace

std::string to_string(EigKind kind) {
  switch (kind) {
    case EigKind::M: return "m";
    case EigKind::Pos: return "pos";
    case EigKind::Lik: return "lik";
    case EigKind::Pr: return "pr";
    case EigKind::Nmc: return "nmc";
    case EigKind::Gaussian: return "gaussian";
  }
  return "?";
}

EigKind eig_kind_from_string(const std::string& s) {
  if (s == "m") return EigKind::M;
  if (s == "pos") return EigKind::Pos;
  if (s == "lik") return EigKind::Lik;
  if (s == "pr") return EigKind::Pr;
  if (s == "nmc") return EigKind::Nmc;
  if (s == "gaussian") return EigKind::Gaussian;
  throw std::invalid_argument("unknown estimator kind: " + s);
}

std::pair<Eigen::Index, Eigen::Index> allocate(Eigen::Index total, double p,
                                               Eigen::Index min_train) {
  if (min_train < 1) throw std::invalid_argument("allocate: min_train must be >= 1");
  if (total < min_train + 1)
    throw std::invalid_argument("allocate: need L >= min_train + 1 (L = " +
                                std::to_string(total) +
                                ", min_train = " + std::to_string(min_train) + ")");
  if (!(p > 0.0) || !(p < 1.0)) throw std::invalid_argument("allocate: p must lie in (0, 1)");
  auto m = static_cast<Eigen::Index>(
      std::llround(double(total) / (std::pow(double(total), -p) + 1.0)));
  m = std::min(m, total - min_train);
  m = std::max<Eigen::Index>(m, 1);
  return {m, total - m};
}

DensityEstimate DensityEstimate::from_map(DensityRole role,
                                          std::shared_ptr<const BlockTriangularMap> map) {
  if (!map) throw std::invalid_argument("DensityEstimate: null map");
  const bool wants_y_first =
      role == DensityRole::MarginalY || role == DensityRole::ConditionalXGivenY;
  const bool is_y_first = map->ordering == BlockOrdering::YThenX;
  if (wants_y_first != is_y_first)
    throw std::invalid_argument("DensityEstimate: role inconsistent with map ordering " +
                                to_string(map->ordering));
  const bool conditional =
      role == DensityRole::ConditionalXGivenY || role == DensityRole::ConditionalYGivenX;
  if (conditional && map->n_trail() < 1)
    throw std::invalid_argument("DensityEstimate: conditional role needs a trailing block");
  return {role, std::move(map)};
}

Vector DensityEstimate::log_marginal(const Matrix& target) const {
  if (role != DensityRole::MarginalY && role != DensityRole::MarginalX)
    throw std::invalid_argument("DensityEstimate: not a marginal");
  return marginal_logpdf_batch(*map, target);
}

Vector DensityEstimate::log_conditional(const Matrix& target, const Matrix& given) const {
  if (role != DensityRole::ConditionalXGivenY && role != DensityRole::ConditionalYGivenX)
    throw std::invalid_argument("DensityEstimate: not a conditional");
  return conditional_logpdf_batch(*map, target, given);
}

Vector DensitySet::log_marg_y(const Matrix& y) const {
  if (exact_marg_y) return exact_marg_y(y);
  if (marg_y) return marg_y->log_marginal(y);
  throw CapabilityError("density set: marginal of Y not available");
}

Vector DensitySet::log_marg_x(const Matrix& x) const {
  if (exact_marg_x) return exact_marg_x(x);
  if (marg_x) return marg_x->log_marginal(x);
  throw CapabilityError("density set: marginal of X not available");
}

Vector DensitySet::log_cond_x_given_y(const Matrix& x, const Matrix& y) const {
  if (exact_cond_x_given_y) return exact_cond_x_given_y(x, y);
  if (cond_x_given_y) return cond_x_given_y->log_conditional(x, y);
  throw CapabilityError("density set: conditional of X given Y not available");
}

Vector DensitySet::log_cond_y_given_x(const Matrix& y, const Matrix& x) const {
  if (exact_cond_y_given_x) return exact_cond_y_given_x(y, x);
  if (cond_y_given_x) return cond_y_given_x->log_conditional(y, x);
  throw CapabilityError("density set: conditional of Y given X not available");
}

DensitySet DensitySet::exact_linear_gaussian(const LinearGaussianModel& model) {
  const auto g = std::make_shared<Matrix>(model.g());
  const auto marg_y = std::make_shared<GaussianDensity>(Vector::Zero(model.dim_y()),
                                                        model.marginal_y_covariance());
  const auto marg_x =
      std::make_shared<GaussianDensity>(Vector::Zero(model.dim_x()), model.prior_covariance());
  const auto noise =
      std::make_shared<GaussianDensity>(Vector::Zero(model.dim_y()), model.noise_covariance());

  // Posterior X | Y = y is N(A y, Sx - A Syx) with A = Sxy Sy^{-1}.
  const Matrix syy = model.marginal_y_covariance().mat();
  const Matrix sxy = model.cross_covariance();
  const Matrix a = syy.ldlt().solve(sxy.transpose()).transpose();
  const auto post_gain = std::make_shared<Matrix>(a);
  const auto posterior = std::make_shared<GaussianDensity>(
      Vector::Zero(model.dim_x()),
      SymmetricMatrix(model.prior_covariance().mat() - a * sxy.transpose()));

  DensitySet ds;
  ds.exact_marg_y = [marg_y](const Matrix& y) {
    Vector out(y.rows());
    for (Eigen::Index i = 0; i < y.rows(); ++i) out[i] = marg_y->logpdf(y.row(i).transpose());
    return out;
  };
  ds.exact_marg_x = [marg_x](const Matrix& x) {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = marg_x->logpdf(x.row(i).transpose());
    return out;
  };
  ds.exact_cond_x_given_y = [posterior, post_gain](const Matrix& x, const Matrix& y) {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out[i] = posterior->logpdf(x.row(i).transpose() - (*post_gain) * y.row(i).transpose());
    return out;
  };
  ds.exact_cond_y_given_x = [noise, g](const Matrix& y, const Matrix& x) {
    Vector out(y.rows());
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      out[i] = noise->logpdf(y.row(i).transpose() - (*g) * x.row(i).transpose());
    return out;
  };
  return ds;
}

EigEstimate estimate_eig(EigKind kind, const DensitySet& densities, const ModelBase& model,
                         const Matrix& eval_x, const Matrix& eval_y) {
  if (eval_x.rows() != eval_y.rows())
    throw std::invalid_argument("estimate_eig: eval sample counts differ");
  if (eval_x.rows() < 1) throw std::invalid_argument("estimate_eig: need evaluation samples");

  Vector num, den;
  switch (kind) {
    case EigKind::M:
      num = rowwise_log_likelihood(model, eval_y, eval_x);
      den = densities.log_marg_y(eval_y);
      break;
    case EigKind::Pos:
      num = densities.log_cond_x_given_y(eval_x, eval_y);
      den = rowwise_log_prior(model, eval_x);
      break;
    case EigKind::Lik:
      num = densities.log_cond_y_given_x(eval_y, eval_x);
      den = densities.log_marg_y(eval_y);
      break;
    case EigKind::Pr:
      num = densities.log_cond_x_given_y(eval_x, eval_y);
      den = densities.log_marg_x(eval_x);
      break;
    default:
      throw std::invalid_argument("estimate_eig: kind " + to_string(kind) +
                                  " is not a density-ratio estimator");
  }

  EigEstimate est;
  est.kind = kind;
  est.value = (num - den).mean();
  est.M = eval_x.rows();
  if (!std::isfinite(est.value))
    throw std::runtime_error("estimate_eig: non-finite estimate for kind " + to_string(kind));
  return est;
}

EigEstimate nmc_eig(const ModelBase& model, Eigen::Index total, std::uint64_t seed) {
  if (total < 4) throw std::invalid_argument("nmc_eig: budget too small");
  const auto n_in =
      std::max<Eigen::Index>(2, std::llround(std::cbrt(double(total))));
  const auto n_out = std::max<Eigen::Index>(1, total / n_in);

  const JointSampleSet outer = model.sample_joint(n_out, derive_seed(seed, "nmc.outer"));
  RngStream inner(derive_seed(seed, "nmc.inner"));

  double acc = 0.0;
  Vector inner_loglik(n_in);
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const Vector yi = outer.y.row(i).transpose();
    const Matrix xs = model.sample_prior(inner, n_in);
    for (Eigen::Index j = 0; j < n_in; ++j)
      inner_loglik[j] = model.log_likelihood(yi, xs.row(j).transpose());
    const double log_evidence = log_sum_exp(inner_loglik) - std::log(double(n_in));
    acc += model.log_likelihood(yi, outer.x.row(i).transpose()) - log_evidence;
  }

  EigEstimate est;
  est.kind = EigKind::Nmc;
  est.value = acc / double(n_out);
  est.L = total;
  est.M = n_out;
  est.N = n_in;
  est.seed = seed;
  if (!std::isfinite(est.value)) throw std::runtime_error("nmc_eig: non-finite estimate");
  return est;
}

EigEstimate transport_eig(const ModelBase& model, EigKind kind, Eigen::Index total, double p,
                          int degree, const FitOptions& fit, std::uint64_t seed) {
  if (kind == EigKind::Nmc) return nmc_eig(model, total, seed);
  if (kind == EigKind::Gaussian)
    throw std::invalid_argument("transport_eig: gaussian estimator lives in the dimred module");

  JointSampleSet joint = model.sample_joint(total, derive_seed(seed, "cell.joint"));
  const Eigen::Index n_joint = model.dim_x() + model.dim_y();
  const Eigen::Index map_dim = (kind == EigKind::M) ? model.dim_y() : n_joint;
  const Eigen::Index min_train = MultiIndexSet::total_degree(map_dim, degree).size() + 1;
  const auto [m_eval, n_train] = allocate(total, p, min_train);
  joint.set_split(n_train);

  const Matrix train_x = joint.train_x();
  const Matrix train_y = joint.train_y();
  const Matrix empty_x(n_train, 0);

  DensitySet ds;
  switch (kind) {
    case EigKind::M: {
      auto y_marg = std::make_shared<BlockTriangularMap>(
          fit_block_map(train_y, empty_x, BlockOrdering::YThenX, degree, fit));
      ds.marg_y = DensityEstimate::from_map(DensityRole::MarginalY, y_marg);
      break;
    }
    case EigKind::Pos: {
      auto yx = std::make_shared<BlockTriangularMap>(
          fit_block_map(train_y, train_x, BlockOrdering::YThenX, degree, fit));
      ds.cond_x_given_y = DensityEstimate::from_map(DensityRole::ConditionalXGivenY, yx);
      break;
    }
    case EigKind::Lik: {
      auto xy = std::make_shared<BlockTriangularMap>(
          fit_block_map(train_x, train_y, BlockOrdering::XThenY, degree, fit));
      auto y_marg = std::make_shared<BlockTriangularMap>(
          fit_block_map(train_y, empty_x, BlockOrdering::YThenX, degree, fit));
      ds.cond_y_given_x = DensityEstimate::from_map(DensityRole::ConditionalYGivenX, xy);
      ds.marg_y = DensityEstimate::from_map(DensityRole::MarginalY, y_marg);
      break;
    }
    case EigKind::Pr: {
      auto yx = std::make_shared<BlockTriangularMap>(
          fit_block_map(train_y, train_x, BlockOrdering::YThenX, degree, fit));
      auto x_marg = std::make_shared<BlockTriangularMap>(
          fit_block_map(train_x, Matrix(n_train, 0), BlockOrdering::XThenY, degree, fit));
      ds.cond_x_given_y = DensityEstimate::from_map(DensityRole::ConditionalXGivenY, yx);
      ds.marg_x = DensityEstimate::from_map(DensityRole::MarginalX, x_marg);
      break;
    }
    default:
      break;
  }

  EigEstimate est = estimate_eig(kind, ds, model, joint.eval_x(), joint.eval_y());
  est.L = total;
  est.N = n_train;
  est.seed = seed;
  return est;
}

std::uint64_t cell_seed(std::uint64_t base, EigKind kind, double p, Eigen::Index total,
                        int replicate) {
  char tag[96];
  std::snprintf(tag, sizeof(tag), "cell|%s|%.17g|%lld", to_string(kind).c_str(), p,
                static_cast<long long>(total));
  return derive_seed(base, tag, static_cast<std::uint64_t>(replicate));
}

SweepTable convergence_sweep(const ModelBase& model, const SweepSpec& spec,
                             std::optional<double> exact_reference) {
  SweepTable table;
  for (EigKind kind : spec.kinds)
    for (double p : spec.exponents)
      for (Eigen::Index l : spec.l_grid)
        for (int rep = 0; rep < spec.replicates; ++rep) {
          SweepRow row;
          row.kind = kind;
          row.p = p;
          row.L = l;
          row.replicate = rep;
          row.seed = cell_seed(spec.base_seed, kind, p, l, rep);
          row.exact = exact_reference;
          table.rows.push_back(row);
        }

  detail::parallel_for(table.rows.size(), spec.workers, [&](std::size_t i) {
    SweepRow& row = table.rows[i];
    try {
      const EigEstimate est =
          transport_eig(model, row.kind, row.L, row.p, spec.degree, spec.fit, row.seed);
      row.value = est.value;
      row.M = est.M;
      row.N = est.N;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return table;
}

std::map<SweepKey, SweepAggregate> SweepTable::aggregates() const {
  std::map<SweepKey, std::vector<const SweepRow*>> groups;
  for (const auto& row : rows) groups[{row.kind, row.p, row.L}].push_back(&row);

  std::map<SweepKey, SweepAggregate> out;
  for (const auto& [key, members] : groups) {
    SweepAggregate agg;
    std::vector<double> values;
    std::optional<double> exact;
    for (const SweepRow* row : members) {
      if (row->value.has_value()) {
        values.push_back(*row->value);
        if (row->exact.has_value()) exact = row->exact;
      } else {
        ++agg.n_failed;
      }
    }
    agg.n_ok = static_cast<int>(values.size());
    if (!values.empty()) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= values.size();
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= values.size();  // population variance: mse = bias^2 + variance exactly
      agg.variance = var;
      if (exact.has_value()) {
        agg.bias = mean - *exact;
        double mse = 0.0;
        for (double v : values) mse += (v - *exact) * (v - *exact);
        agg.mse = mse / values.size();
      } else {
        agg.bias = std::numeric_limits<double>::quiet_NaN();
        agg.mse = std::numeric_limits<double>::quiet_NaN();
      }
    } else {
      agg.bias = agg.variance = agg.mse = std::numeric_limits<double>::quiet_NaN();
    }
    out.emplace(key, agg);
  }
  return out;
}

SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& l_and_mse) {
  std::vector<double> xs, ys;
  std::vector<double> distinct;
  for (const auto& [l, mse] : l_and_mse) {
    if (!(mse > 0.0)) continue;
    xs.push_back(std::log(l));
    ys.push_back(std::log(mse));
    bool seen = false;
    for (double d : distinct) seen = seen || d == l;
    if (!seen) distinct.push_back(l);
  }
  if (distinct.size() < 3)
    throw std::invalid_argument("fit_loglog_slope: need >= 3 distinct L with positive MSE");

  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  const double intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + fit.slope * xs[i]);
    rss += r * r;
  }
  fit.std_error = (xs.size() > 2) ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  return fit;
}

std::string sweep_csv_string(const SweepTable& table) {
  std::ostringstream out;
  out << "kind,p,L,M,N,replicate,seed,value,exact,error\n";
  for (const auto& row : table.rows) {
    out << to_string(row.kind) << ',' << format_double(row.p) << ',' << row.L << ',' << row.M
        << ',' << row.N << ',' << row.replicate << ',' << row.seed << ',';
    if (row.value.has_value()) out << format_double(*row.value);
    out << ',';
    if (row.exact.has_value()) out << format_double(*row.exact);
    out << ',' << sanitize_csv(row.error) << '\n';
  }
  return out.str();
}

void write_sweep_csv(const std::string& path, const SweepTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_sweep_csv: cannot open " + path);
  out << sweep_csv_string(table);
}

std::string sweep_aggregates_json_string(const SweepTable& table) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, agg] : table.aggregates()) {
    char name[80];
    std::snprintf(name, sizeof(name), "%s|%.9g|%lld", to_string(key.kind).c_str(), key.p,
                  static_cast<long long>(key.L));
    nlohmann::json entry;
    entry["bias"] = std::isfinite(agg.bias) ? nlohmann::json(agg.bias) : nlohmann::json();
    entry["variance"] =
        std::isfinite(agg.variance) ? nlohmann::json(agg.variance) : nlohmann::json();
    entry["mse"] = std::isfinite(agg.mse) ? nlohmann::json(agg.mse) : nlohmann::json();
    entry["n_ok"] = agg.n_ok;
    entry["n_failed"] = agg.n_failed;
    j[name] = entry;
  }
  return j.dump(2) + "\n";
}

void write_sweep_aggregates_json(const std::string& path, const SweepTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_sweep_aggregates_json: cannot open " + path);
  out << sweep_aggregates_json_string(table);
}

}  // namespace tmeig
