#include "tmeig/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "component_plan.hpp"
#include "map_json.hpp"

namespace tmeig {

namespace detail {

ComponentPlan ComponentPlan::build(const MultiIndexSet& set) {
  ComponentPlan plan;
  plan.k = set.dim();
  plan.n_alpha = static_cast<int>(set.size());
  plan.prefix_max_deg.assign(std::max<Eigen::Index>(plan.k - 1, 0), 0);
  std::map<std::vector<int>, int> seen;
  for (const auto& alpha : set.indices()) {
    std::vector<int> prefix(alpha.begin(), alpha.end() - 1);
    auto [it, inserted] = seen.emplace(prefix, static_cast<int>(plan.prefixes.size()));
    if (inserted) plan.prefixes.push_back(prefix);
    plan.prefix_of.push_back(it->second);
    plan.last_of.push_back(alpha.back());
    plan.last_max = std::max(plan.last_max, alpha.back());
    for (std::size_t j = 0; j < prefix.size(); ++j)
      plan.prefix_max_deg[j] = std::max(plan.prefix_max_deg[j], prefix[j]);
  }
  plan.n_prefix = static_cast<int>(plan.prefixes.size());
  return plan;
}

Matrix prefix_features(const ComponentPlan& plan, const Matrix& w_leading) {
  const Eigen::Index n = w_leading.rows();
  Matrix f = Matrix::Ones(n, plan.n_prefix);
  if (plan.k == 1) return f;
  std::vector<Matrix> tables(plan.k - 1);
  for (Eigen::Index j = 0; j < plan.k - 1; ++j)
    tables[j] = hermite_table(w_leading.col(j), plan.prefix_max_deg[j]);
  for (int p = 0; p < plan.n_prefix; ++p)
    for (Eigen::Index j = 0; j < plan.k - 1; ++j) {
      const int deg = plan.prefixes[p][j];
      if (deg > 0) f.col(p).array() *= tables[j].col(deg).array();
    }
  return f;
}

Vector hermite_at_zero(int max_degree) {
  Vector z = Vector::Zero(1);
  return hermite_table(z, max_degree).row(0).transpose();
}

}  // namespace detail

using detail::ComponentPlan;

MultiIndexSet::MultiIndexSet(Eigen::Index dim, std::vector<std::vector<int>> indices)
    : dim_(dim), indices_(std::move(indices)) {
  if (dim_ < 1) throw std::invalid_argument("MultiIndexSet: dimension must be >= 1");
  if (indices_.empty()) throw std::invalid_argument("MultiIndexSet: empty index set");
  std::map<std::vector<int>, int> seen;
  for (const auto& alpha : indices_) {
    if (static_cast<Eigen::Index>(alpha.size()) != dim_)
      throw std::invalid_argument("MultiIndexSet: index length does not match dimension");
    for (int d : alpha)
      if (d < 0) throw std::invalid_argument("MultiIndexSet: degrees must be nonnegative");
    if (!seen.emplace(alpha, 0).second)
      throw std::invalid_argument("MultiIndexSet: duplicate multi-index");
  }
}

MultiIndexSet MultiIndexSet::total_degree(Eigen::Index dim, int degree) {
  if (degree < 0) throw std::invalid_argument("total_degree: degree must be >= 0");
  std::vector<std::vector<int>> out;
  std::vector<int> alpha(dim, 0);
  // Graded lexicographic enumeration of all |alpha| <= degree.
  for (int total = 0; total <= degree; ++total) {
    std::fill(alpha.begin(), alpha.end(), 0);
    alpha[0] = total;
    while (true) {
      out.push_back(alpha);
      // Next composition of `total` into dim parts, lexicographic descent.
      Eigen::Index i = dim - 2;
      while (i >= 0 && alpha[i] == 0) --i;
      if (i < 0) break;
      --alpha[i];
      int rest = total;
      for (Eigen::Index j = 0; j <= i; ++j) rest -= alpha[j];
      alpha[i + 1] = rest;
      for (Eigen::Index j = i + 2; j < dim; ++j) alpha[j] = 0;
    }
    if (dim == 1 && total == degree) break;
  }
  return MultiIndexSet(dim, std::move(out));
}

int MultiIndexSet::max_degree() const {
  int best = 0;
  for (const auto& alpha : indices_) {
    int total = 0;
    for (int d : alpha) total += d;
    best = std::max(best, total);
  }
  return best;
}

int MultiIndexSet::max_last_degree() const {
  int best = 0;
  for (const auto& alpha : indices_) best = std::max(best, alpha.back());
  return best;
}

Matrix hermite_table(const Vector& z, int max_degree) {
  const Eigen::Index n = z.size();
  Matrix t(n, max_degree + 1);
  t.col(0).setOnes();
  if (max_degree >= 1) t.col(1) = z;
  for (int m = 1; m < max_degree; ++m) {
    t.col(m + 1) =
        (z.array() * t.col(m).array() - std::sqrt(double(m)) * t.col(m - 1).array()) /
        std::sqrt(double(m + 1));
  }
  return t;
}

HermiteFeatures hermite_features(const MultiIndexSet& set, const Vector& z) {
  if (z.size() != set.dim())
    throw std::invalid_argument("hermite_features: point dimension does not match index set");
  const Eigen::Index k = set.dim();
  int max_deg = 0;
  for (const auto& alpha : set.indices())
    for (int d : alpha) max_deg = std::max(max_deg, d);
  const Matrix table = hermite_table(z, max_deg);  // row j = values at z_j

  HermiteFeatures out;
  out.values.resize(set.size());
  out.last_partials.resize(set.size());
  Eigen::Index a = 0;
  for (const auto& alpha : set.indices()) {
    double value = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) value *= table(j, alpha[j]);
    double prefix = 1.0;
    for (Eigen::Index j = 0; j + 1 < k; ++j) prefix *= table(j, alpha[j]);
    const int m = alpha[k - 1];
    const double dpsi = (m == 0) ? 0.0 : std::sqrt(double(m)) * table(k - 1, m - 1);
    out.values[a] = value;
    out.last_partials[a] = prefix * dpsi;
    ++a;
  }
  return out;
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

namespace detail {

// Vectorized counterparts; exp/log1p go through Eigen's packet math.
void softplus_inplace(Vector& v) {
  const auto x = v.array();
  v = (x > 30.0).select(x, x.min(30.0).exp().log1p());
}

void sigmoid_inplace(Vector& v) {
  const auto x = v.array();
  v = 1.0 / (1.0 + (-x).min(30.0).max(-30.0).exp());
}

double sum_log_softplus(const Vector& v) {
  const auto x = v.array();
  const auto mid = x.min(30.0).max(-30.0).exp().log1p().log();
  return (x < -30.0).select(x, (x > 30.0).select(x.abs().log(), mid)).sum();
}

}  // namespace detail

double softplus_deriv(double x) {
  if (x > 30.0) return 1.0;
  if (x < -30.0) return std::exp(x);
  return 1.0 / (1.0 + std::exp(-x));
}

double softplus_second(double x) {
  const double s = softplus_deriv(x);
  return s * (1.0 - s);
}

double log_softplus(double x) {
  if (x < -30.0) return x;  // softplus(x) ~ e^x
  return std::log(softplus(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("softplus_inverse: argument must be positive");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

MonotoneComponent make_component(MultiIndexSet indices, Vector coeffs, int quad_order) {
  if (coeffs.size() != indices.size())
    throw std::invalid_argument("make_component: coefficient count must equal index-set size");
  if (quad_order < 1) throw std::invalid_argument("make_component: quadrature order must be >= 1");
  MonotoneComponent c{std::move(indices), std::move(coeffs), Rectifier::Softplus, quad_order,
                      Vector(), Vector()};
  c.shift = Vector::Zero(c.indices.dim());
  c.scale = Vector::Ones(c.indices.dim());
  return c;
}

MonotoneComponent make_component(MultiIndexSet indices, int quad_order) {
  Vector zero = Vector::Zero(indices.size());
  return make_component(std::move(indices), std::move(zero), quad_order);
}

MonotoneComponent identity_component(Eigen::Index k) {
  MultiIndexSet set = MultiIndexSet::total_degree(k, 1);
  Vector coeffs = Vector::Zero(set.size());
  Eigen::Index a = 0;
  for (const auto& alpha : set.indices()) {
    if (alpha.back() == 1) coeffs[a] = softplus_inverse(1.0);
    ++a;
  }
  return make_component(std::move(set), std::move(coeffs));
}

void component_eval_batch(const MonotoneComponent& comp, const Matrix& z, Vector* values,
                          Vector* last_partials) {
  const Eigen::Index k = comp.dim();
  if (z.cols() != k) throw std::invalid_argument("component_eval_batch: dimension mismatch");
  if (!z.allFinite()) throw std::invalid_argument("component_eval_batch: non-finite input");
  const Eigen::Index n = z.rows();

  Matrix w = (z.rowwise() - comp.shift.transpose()).array().rowwise() /
             comp.scale.transpose().array();
  const ComponentPlan plan = ComponentPlan::build(comp.indices);
  const Matrix f = detail::prefix_features(plan, w.leftCols(k - 1));
  const int dk = plan.last_max;

  // u(:, m) = sum of c_alpha * prefix features over indices with alpha_k = m.
  Matrix u = Matrix::Zero(n, dk + 1);
  for (int a = 0; a < plan.n_alpha; ++a)
    u.col(plan.last_of[a]) += comp.coeffs[a] * f.col(plan.prefix_of[a]);

  const Vector wk = w.col(k - 1);

  if (dk <= 1) {
    // d_k f does not depend on z_k: the rectifier integral is exact,
    // S = f(w, 0) + w_k g(d_k f).
    const Vector slope = dk == 1 ? Vector(u.col(1)) : Vector(Vector::Zero(n));
    if (last_partials != nullptr) {
      last_partials->resize(n);
      for (Eigen::Index i = 0; i < n; ++i)
        (*last_partials)[i] = softplus(slope[i]) / comp.scale[k - 1];
    }
    if (values != nullptr) {
      values->resize(n);
      for (Eigen::Index i = 0; i < n; ++i)
        (*values)[i] = u(i, 0) + wk[i] * softplus(slope[i]);
    }
    return;
  }

  if (last_partials != nullptr) {
    const Matrix tk = hermite_table(wk, dk - 1);
    Vector d = Vector::Zero(n);
    for (int m = 1; m <= dk; ++m) d += std::sqrt(double(m)) * tk.col(m - 1).cwiseProduct(u.col(m));
    detail::softplus_inplace(d);
    *last_partials = d / comp.scale[k - 1];
  }

  if (values != nullptr) {
    const Vector psi0 = detail::hermite_at_zero(dk);
    Vector value = u * psi0;  // f(w_{1:k-1}, 0)
    const auto& [xi, omega] = gauss_legendre_reference(comp.quad_order);
    Vector d(n);
    for (int q = 0; q < comp.quad_order; ++q) {
      const Vector tq = 0.5 * (xi[q] + 1.0) * wk;
      const Matrix tt = hermite_table(tq, dk - 1);
      d.setZero();
      for (int m = 1; m <= dk; ++m) d += std::sqrt(double(m)) * tt.col(m - 1).cwiseProduct(u.col(m));
      detail::softplus_inplace(d);
      value += (0.5 * omega[q]) * wk.cwiseProduct(d);
    }
    *values = std::move(value);
  }
}

ComponentEval rectified_component_eval(const MonotoneComponent& comp, const Vector& z) {
  if (z.size() != comp.dim())
    throw std::invalid_argument("rectified_component_eval: dimension mismatch");
  Vector values, partials;
  component_eval_batch(comp, z.transpose(), &values, &partials);
  return {values[0], partials[0]};
}

TriangularMap identity_map(Eigen::Index n) {
  TriangularMap map;
  for (Eigen::Index k = 1; k <= n; ++k) map.components.push_back(identity_component(k));
  return map;
}

std::string to_string(BlockOrdering ordering) {
  return ordering == BlockOrdering::YThenX ? "y_then_x" : "x_then_y";
}

BlockOrdering block_ordering_from_string(const std::string& s) {
  if (s == "y_then_x") return BlockOrdering::YThenX;
  if (s == "x_then_y") return BlockOrdering::XThenY;
  throw std::invalid_argument("unknown block ordering: " + s);
}

MapImage map_forward(const TriangularMap& map, const Vector& z) {
  if (z.size() != map.dim()) throw std::invalid_argument("map_forward: dimension mismatch");
  if (!z.allFinite()) throw std::invalid_argument("map_forward: non-finite input");
  MapImage out;
  out.image.resize(map.dim());
  out.logdet = 0.0;
  for (Eigen::Index k = 0; k < map.dim(); ++k) {
    const auto eval = rectified_component_eval(map.components[k], z.head(k + 1));
    out.image[k] = eval.value;
    out.logdet += std::log(eval.last_partial);
  }
  return out;
}

MapImage map_forward(const BlockTriangularMap& map, const Vector& z) {
  return map_forward(map.map, z);
}

void map_forward_batch(const TriangularMap& map, const Matrix& z, Matrix* images, Vector* logdets) {
  if (z.cols() != map.dim()) throw std::invalid_argument("map_forward_batch: dimension mismatch");
  const Eigen::Index n = z.rows();
  if (images != nullptr) images->resize(n, map.dim());
  if (logdets != nullptr) logdets->setZero(n);
  for (Eigen::Index k = 0; k < map.dim(); ++k) {
    Vector values, partials;
    component_eval_batch(map.components[k], z.leftCols(k + 1), images ? &values : nullptr,
                         logdets ? &partials : nullptr);
    if (images != nullptr) images->col(k) = values;
    if (logdets != nullptr) *logdets += partials.array().log().matrix();
  }
}

double component_invert(const MonotoneComponent& comp, const Vector& prefix, double target) {
  if (!std::isfinite(target)) throw std::invalid_argument("component_invert: non-finite target");
  const Eigen::Index k = comp.dim();
  if (prefix.size() != k - 1) throw std::invalid_argument("component_invert: bad prefix length");
  Vector z(k);
  z.head(k - 1) = prefix;

  const auto eval_at = [&](double zk) {
    z[k - 1] = zk;
    return rectified_component_eval(comp, z);
  };

  double lo = -1.0, hi = 1.0;
  while (eval_at(hi).value < target) {
    hi *= 2.0;
    if (hi > 1e6) throw DivergenceError("component_invert: no upper bracket within 1e6");
  }
  while (eval_at(lo).value > target) {
    lo *= 2.0;
    if (lo < -1e6) throw DivergenceError("component_invert: no lower bracket within 1e6");
  }

  double zk = 0.5 * (lo + hi);
  for (int iter = 0; iter < 100; ++iter) {
    const auto eval = eval_at(zk);
    const double err = eval.value - target;
    if (std::abs(err) < 1e-10) return zk;
    if (err > 0.0) hi = zk; else lo = zk;
    double next = zk - err / eval.last_partial;  // Newton, bisection fallback
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    zk = next;
  }
  return zk;
}

Vector map_invert(const TriangularMap& map, const Vector& w) {
  if (w.size() != map.dim()) throw std::invalid_argument("map_invert: dimension mismatch");
  if (!w.allFinite()) throw std::invalid_argument("map_invert: non-finite input");
  Vector z(map.dim());
  for (Eigen::Index k = 0; k < map.dim(); ++k)
    z[k] = component_invert(map.components[k], z.head(k), w[k]);
  return z;
}

Vector map_invert(const BlockTriangularMap& map, const Vector& w) { return map_invert(map.map, w); }

namespace detail {

using nlohmann::json;

namespace {

json component_to_json(const MonotoneComponent& c) {
  json j;
  j["dim"] = c.dim();
  j["indices"] = c.indices.indices();
  j["coeffs"] = std::vector<double>(c.coeffs.data(), c.coeffs.data() + c.coeffs.size());
  j["shift"] = std::vector<double>(c.shift.data(), c.shift.data() + c.shift.size());
  j["scale"] = std::vector<double>(c.scale.data(), c.scale.data() + c.scale.size());
  j["rectifier"] = "softplus";
  j["quad_order"] = c.quad_order;
  return j;
}

MonotoneComponent component_from_json(const json& j) {
  const Eigen::Index dim = j.at("dim").get<Eigen::Index>();
  MultiIndexSet set(dim, j.at("indices").get<std::vector<std::vector<int>>>());
  const auto coeffs = j.at("coeffs").get<std::vector<double>>();
  const auto shift = j.at("shift").get<std::vector<double>>();
  const auto scale = j.at("scale").get<std::vector<double>>();
  if (j.at("rectifier").get<std::string>() != "softplus")
    throw std::invalid_argument("map file: unknown rectifier");
  MonotoneComponent c = make_component(std::move(set),
                                       Eigen::Map<const Vector>(coeffs.data(), coeffs.size()),
                                       j.at("quad_order").get<int>());
  c.shift = Eigen::Map<const Vector>(shift.data(), shift.size());
  c.scale = Eigen::Map<const Vector>(scale.data(), scale.size());
  return c;
}

}  // namespace

json map_to_json(const BlockTriangularMap& map) {
  json j;
  j["format_version"] = 1;
  j["ordering"] = to_string(map.ordering);
  j["n_lead"] = map.n_lead;
  j["components"] = json::array();
  for (const auto& c : map.map.components) j["components"].push_back(component_to_json(c));
  return j;
}

BlockTriangularMap map_from_json(const json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error("map file: unsupported format version");
  BlockTriangularMap map;
  map.ordering = block_ordering_from_string(j.at("ordering").get<std::string>());
  map.n_lead = j.at("n_lead").get<Eigen::Index>();
  for (const auto& cj : j.at("components")) map.map.components.push_back(component_from_json(cj));
  return map;
}

}  // namespace detail

void save_map(const std::string& path, const BlockTriangularMap& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_map: cannot open " + path);
  out << detail::map_to_json(map).dump(2) << "\n";
}

BlockTriangularMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_map: cannot open " + path);
  return detail::map_from_json(nlohmann::json::parse(in));
}

}  // namespace tmeig
