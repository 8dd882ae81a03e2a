#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tmeig/dimred.hpp"
#include "tmeig/estimators.hpp"

namespace tmeig {

struct ModelConfig {
  std::string type;  // linear-gaussian | scalar-gaussian | moessbauer
  // linear-gaussian
  int n_x = 0, n_y = 0;
  double decay = 0.8;
  std::uint64_t model_seed = 0;
  // scalar-gaussian
  double g = 1.0, var_x = 1.0, var_e = 1.0;
  // moessbauer
  std::vector<double> velocities;
  double noise_sd = 0.1;
  std::string focus = "full";  // full | center
};

struct ExperimentConfig {
  std::string experiment;  // estimator-compare | allocation-sweep | moessbauer | dimred-grid
  ModelConfig model;
  std::uint64_t seed = 0;
  std::string out = "results";
  int workers = 1;

  std::vector<EigKind> kinds;
  std::vector<double> exponents;
  std::vector<Eigen::Index> l_grid;
  int replicates = 1;
  int degree = 1;
  double grad_tol = 1e-8;

  // dimred-grid only
  std::vector<ReductionMethod> methods;
  std::vector<EigKind> dimred_estimators;  // pos and/or gaussian
  std::vector<Eigen::Index> r_list, s_list;
  Eigen::Index n_mc = 500;
};

/// Parse and schema-validate a config file. Unknown keys, missing required
/// fields, and out-of-range values raise ConfigError with the field path.
ExperimentConfig load_config(const std::string& path);

std::shared_ptr<const ModelBase> make_model(const ModelConfig& config);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
};

struct RunResult {
  int n_cells = 0;
  int n_failed = 0;
  std::string out_dir;
};

/// Execute the configured experiment: write result CSVs, aggregate JSON, and
/// a manifest into the output directory. Given an identical config and seed
/// the CSVs are bitwise identical across reruns.
RunResult run_config(const ExperimentConfig& config, const std::string& config_sha256,
                     const RunOptions& options = {});
RunResult run_config_file(const std::string& path, const RunOptions& options = {});

/// Hex SHA-256 of a file's bytes (manifest provenance).
std::string file_sha256(const std::string& path);

}  // namespace tmeig
