#include "tmeig/experiment.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "tmeig/version.hpp"

namespace tmeig {

namespace {

using nlohmann::json;

// -------- schema validation helpers --------

class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (v == nullptr) throw ConfigError(path_ + "." + key, "missing required field");
    return *v;
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (seen_.count(it.key()) == 0)
        throw ConfigError(path_ + "." + it.key(), "unknown field");
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

std::int64_t as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  return v.get<std::int64_t>();
}

std::uint64_t as_seed(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError(path, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

int positive_int(const json& v, const std::string& path) {
  const auto i = as_integer(v, path);
  if (i < 1) throw ConfigError(path, "expected a positive integer");
  return static_cast<int>(i);
}

std::vector<Eigen::Index> index_list(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a nonempty array");
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(positive_int(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<double> number_list(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a nonempty array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<EigKind> kind_list(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a nonempty array");
  std::vector<EigKind> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string item_path = path + "[" + std::to_string(i) + "]";
    try {
      out.push_back(eig_kind_from_string(as_string(v[i], item_path)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(item_path, e.what());
    }
  }
  return out;
}

double exponent_in_range(double p, const std::string& path) {
  if (!(p > 0.0) || !(p < 1.0)) throw ConfigError(path, "allocation exponent must lie in (0, 1)");
  return p;
}

ModelConfig parse_model(const json& j, const std::string& path) {
  Fields f(j, path);
  ModelConfig m;
  m.type = as_string(f.require("type"), f.path("type"));
  if (m.type == "linear-gaussian") {
    m.n_x = positive_int(f.require("n_x"), f.path("n_x"));
    m.n_y = positive_int(f.require("n_y"), f.path("n_y"));
    if (m.n_y > m.n_x) throw ConfigError(f.path("n_y"), "requires n_y <= n_x");
    m.decay = as_number(f.require("decay"), f.path("decay"));
    if (!(m.decay > 0.0) || m.decay > 1.0)
      throw ConfigError(f.path("decay"), "decay must lie in (0, 1]");
    m.model_seed = as_seed(f.require("model_seed"), f.path("model_seed"));
  } else if (m.type == "scalar-gaussian") {
    if (const json* v = f.find("g")) m.g = as_number(*v, f.path("g"));
    if (const json* v = f.find("var_x")) m.var_x = as_number(*v, f.path("var_x"));
    if (const json* v = f.find("var_e")) m.var_e = as_number(*v, f.path("var_e"));
    if (!(m.var_x > 0.0) || !(m.var_e > 0.0))
      throw ConfigError(path, "variances must be positive");
  } else if (m.type == "moessbauer") {
    m.velocities = {-1.3, 0.0, 1.3};
    if (const json* v = f.find("velocities"))
      m.velocities = number_list(*v, f.path("velocities"));
    if (const json* v = f.find("noise_sd")) {
      m.noise_sd = as_number(*v, f.path("noise_sd"));
      if (!(m.noise_sd > 0.0)) throw ConfigError(f.path("noise_sd"), "must be positive");
    }
    if (const json* v = f.find("focus")) {
      m.focus = as_string(*v, f.path("focus"));
      if (m.focus != "full" && m.focus != "center")
        throw ConfigError(f.path("focus"), "expected \"full\" or \"center\"");
    }
  } else {
    throw ConfigError(f.path("type"), "unknown model type \"" + m.type + "\"");
  }
  f.reject_unknown();
  return m;
}

ExperimentConfig parse_config(const json& j) {
  Fields f(j, "config");
  ExperimentConfig c;
  c.experiment = as_string(f.require("experiment"), f.path("experiment"));
  c.model = parse_model(f.require("model"), f.path("model"));
  c.seed = as_seed(f.require("seed"), f.path("seed"));
  if (const json* v = f.find("out")) c.out = as_string(*v, f.path("out"));
  if (const json* v = f.find("workers")) c.workers = positive_int(*v, f.path("workers"));
  if (const json* v = f.find("degree")) c.degree = positive_int(*v, f.path("degree"));
  if (const json* v = f.find("grad_tol")) {
    c.grad_tol = as_number(*v, f.path("grad_tol"));
    if (!(c.grad_tol > 0.0)) throw ConfigError(f.path("grad_tol"), "must be positive");
  }

  const bool is_sweep = c.experiment == "allocation-sweep";
  const bool is_compare = c.experiment == "estimator-compare";
  const bool is_moessbauer = c.experiment == "moessbauer";
  const bool is_dimred = c.experiment == "dimred-grid";
  if (!is_sweep && !is_compare && !is_moessbauer && !is_dimred)
    throw ConfigError(f.path("experiment"), "unknown experiment \"" + c.experiment + "\"");

  if (is_moessbauer && c.model.type != "moessbauer")
    throw ConfigError(f.path("model"), "moessbauer experiment requires the moessbauer model");

  c.replicates = positive_int(f.require("replicates"), f.path("replicates"));

  if (is_dimred) {
    const json& methods = f.require("methods");
    if (!methods.is_array() || methods.empty())
      throw ConfigError(f.path("methods"), "expected a nonempty array");
    for (std::size_t i = 0; i < methods.size(); ++i) {
      const std::string mp = f.path("methods") + "[" + std::to_string(i) + "]";
      try {
        c.methods.push_back(reduction_method_from_string(as_string(methods[i], mp)));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(mp, e.what());
      }
    }
    c.dimred_estimators = kind_list(f.require("estimators"), f.path("estimators"));
    for (EigKind k : c.dimred_estimators)
      if (k != EigKind::Pos && k != EigKind::Gaussian)
        throw ConfigError(f.path("estimators"),
                          "dimred grids support \"pos\" and \"gaussian\" estimators");
    c.r_list = index_list(f.require("r"), f.path("r"));
    c.s_list = index_list(f.require("s"), f.path("s"));
    c.l_grid = {positive_int(f.require("L"), f.path("L"))};
    c.exponents = {exponent_in_range(as_number(f.require("p"), f.path("p")), f.path("p"))};
    if (const json* v = f.find("n_mc")) c.n_mc = positive_int(*v, f.path("n_mc"));
  } else {
    c.kinds = kind_list(f.require("kinds"), f.path("kinds"));
    const json& l = f.require("L");
    if (is_compare) {
      c.l_grid = {positive_int(l, f.path("L"))};
    } else {
      c.l_grid = index_list(l, f.path("L"));
    }
    const json& p = f.require("p");
    if (is_sweep) {
      c.exponents = number_list(p, f.path("p"));
      for (double e : c.exponents) exponent_in_range(e, f.path("p"));
    } else {
      c.exponents = {exponent_in_range(as_number(p, f.path("p")), f.path("p"))};
    }
  }

  f.reject_unknown();
  return c;
}

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& path, const std::string& sha, std::uint64_t seed,
                    const std::string& started_at, double elapsed_s, int n_cells, int n_failed) {
  json j;
  j["config_sha256"] = sha;
  j["seed"] = seed;
  j["version"] = kVersion;
  j["started_at"] = started_at;
  j["elapsed_s"] = elapsed_s;
  j["n_cells"] = n_cells;
  j["n_failed"] = n_failed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

void write_error_log(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& line : lines) out << line << "\n";
}

// -------- pipelines --------

struct PipelineOutput {
  int n_cells = 0;
  int n_failed = 0;
  std::vector<std::string> errors;
};

PipelineOutput run_sweep_like(const ExperimentConfig& config, const ModelBase& model,
                              const std::string& out_dir) {
  SweepSpec spec;
  spec.kinds = config.kinds;
  spec.exponents = config.exponents;
  spec.l_grid = config.l_grid;
  spec.replicates = config.replicates;
  spec.degree = config.degree;
  spec.fit.grad_tol = config.grad_tol;
  spec.base_seed = config.seed;
  spec.workers = config.workers;

  std::optional<double> exact;
  if (const auto* linear = dynamic_cast<const LinearGaussianModel*>(&model))
    exact = closed_form_eig(*linear);

  const SweepTable table = convergence_sweep(model, spec, exact);
  write_sweep_csv(out_dir + "/sweep.csv", table);
  write_sweep_aggregates_json(out_dir + "/aggregates.json", table);

  PipelineOutput out;
  out.n_cells = static_cast<int>(table.rows.size());
  for (const auto& row : table.rows)
    if (!row.error.empty()) {
      ++out.n_failed;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s|p=%.9g|L=%lld|rep=%d: ", to_string(row.kind).c_str(),
                    row.p, static_cast<long long>(row.L), row.replicate);
      out.errors.push_back(buf + row.error);
    }
  return out;
}

PipelineOutput run_dimred_grid(const ExperimentConfig& config, const ModelBase& model,
                               const std::string& out_dir) {
  const DiagnosticPair pair = diagnostic_matrices(
      model, config.n_mc, derive_seed(config.seed, "dimred.diagnostics"));

  std::vector<std::pair<ReductionMethod, ProjectionBasis>> bases;
  for (ReductionMethod method : config.methods)
    bases.emplace_back(method, reduction_basis(method, model, config.n_mc,
                                               derive_seed(config.seed, to_string(method))));

  const auto* linear = dynamic_cast<const LinearGaussianModel*>(&model);

  FitOptions fit;
  fit.grad_tol = config.grad_tol;

  std::vector<DimredRow> rows;
  std::vector<const ProjectionBasis*> row_basis;
  for (const auto& [method, basis] : bases)
    for (EigKind kind : config.dimred_estimators)
      for (Eigen::Index r : config.r_list)
        for (Eigen::Index s : config.s_list)
          for (int rep = 0; rep < config.replicates; ++rep) {
            DimredRow row;
            row.method = method;
            row.kind = kind;
            row.r = std::min<Eigen::Index>(r, model.dim_x());
            row.s = std::min<Eigen::Index>(s, model.dim_y());
            row.replicate = rep;
            char tag[96];
            std::snprintf(tag, sizeof(tag), "dimred|%s|%s|%lld|%lld",
                          to_string(method).c_str(), to_string(kind).c_str(),
                          static_cast<long long>(row.r), static_cast<long long>(row.s));
            row.seed = derive_seed(config.seed, tag, static_cast<std::uint64_t>(rep));
            row.bound = truncation_bound(pair, basis, row.r, row.s);
            if (linear != nullptr)
              row.exact_projected =
                  closed_form_eig(*linear, basis.u_r(row.r), basis.v_s(row.s));
            rows.push_back(row);
            row_basis.push_back(&basis);
          }

  detail::parallel_for(rows.size(), config.workers, [&](std::size_t i) {
    DimredRow& row = rows[i];
    try {
      const EigEstimate est =
          row.kind == EigKind::Gaussian
              ? projected_eig_gaussian(model, *row_basis[i], row.r, row.s, config.l_grid[0],
                                       row.seed)
              : projected_eig_pos(model, *row_basis[i], row.r, row.s, config.l_grid[0],
                                  config.exponents[0], config.degree, fit, row.seed);
      row.value = est.value;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  PipelineOutput out;
  out.n_cells = static_cast<int>(rows.size());
  for (EigKind kind : config.dimred_estimators) {
    std::vector<DimredRow> subset;
    for (const auto& row : rows)
      if (row.kind == kind) subset.push_back(row);
    write_dimred_csv(out_dir + "/dimred_" + to_string(kind) + ".csv", subset);
  }
  for (const auto& row : rows)
    if (!row.error.empty()) {
      ++out.n_failed;
      out.errors.push_back(to_string(row.method) + "|" + to_string(row.kind) + "|r=" +
                           std::to_string(row.r) + "|s=" + std::to_string(row.s) + "|rep=" +
                           std::to_string(row.replicate) + ": " + row.error);
    }
  return out;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

std::shared_ptr<const ModelBase> make_model(const ModelConfig& config) {
  if (config.type == "linear-gaussian")
    return std::make_shared<LinearGaussianModel>(
        make_linear_gaussian(config.n_x, config.n_y, config.decay, config.model_seed));
  if (config.type == "scalar-gaussian")
    return std::make_shared<LinearGaussianModel>(
        make_scalar_gaussian(config.g, config.var_x, config.var_e));
  if (config.type == "moessbauer") {
    MoessbauerModel base(
        Eigen::Map<const Vector>(config.velocities.data(), config.velocities.size()),
        config.noise_sd);
    if (config.focus == "center")
      return std::make_shared<FocusedCenterModel>(std::move(base));
    return std::make_shared<MoessbauerModel>(std::move(base));
  }
  throw std::invalid_argument("make_model: unknown model type " + config.type);
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_sha256: cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    char b[3];
    std::snprintf(b, sizeof(b), "%02x", digest[i]);
    hex << b;
  }
  return hex.str();
}

RunResult run_config(const ExperimentConfig& config_in, const std::string& config_sha256,
                     const RunOptions& options) {
  ExperimentConfig config = config_in;
  if (options.seed.has_value()) config.seed = *options.seed;
  if (options.workers.has_value()) config.workers = *options.workers;
  if (options.out.has_value()) config.out = *options.out;

  std::filesystem::create_directories(config.out);
  const std::string started_at = iso8601_utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  const auto model = make_model(config.model);

  PipelineOutput pipeline;
  if (config.experiment == "dimred-grid") {
    pipeline = run_dimred_grid(config, *model, config.out);
  } else {
    pipeline = run_sweep_like(config, *model, config.out);
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(config.out + "/manifest.json", config_sha256, config.seed, started_at, elapsed,
                 pipeline.n_cells, pipeline.n_failed);
  if (pipeline.n_failed > 0) write_error_log(config.out + "/errors.log", pipeline.errors);

  RunResult result;
  result.n_cells = pipeline.n_cells;
  result.n_failed = pipeline.n_failed;
  result.out_dir = config.out;
  return result;
}

RunResult run_config_file(const std::string& path, const RunOptions& options) {
  const ExperimentConfig config = load_config(path);
  return run_config(config, file_sha256(path), options);
}

}  // namespace tmeig
