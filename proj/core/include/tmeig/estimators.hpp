#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tmeig/density.hpp"
#include "tmeig/models.hpp"
#include "tmeig/training.hpp"

namespace tmeig {

enum class EigKind { M, Pos, Lik, Pr, Nmc, Gaussian };

std::string to_string(EigKind kind);
EigKind eig_kind_from_string(const std::string& s);

/// Split a budget of L joint samples into M evaluation and N training
/// samples with M/N ~ L^p: M = round(L / (L^-p + 1)), N = L - M, then N is
/// raised to min_train (and M reduced) if needed.
std::pair<Eigen::Index, Eigen::Index> allocate(Eigen::Index total, double p,
                                               Eigen::Index min_train);

struct AllocationPolicy {
  double p = 1.0 / 3.0;
  Eigen::Index min_train = 2;

  std::pair<Eigen::Index, Eigen::Index> operator()(Eigen::Index total) const {
    return allocate(total, p, min_train);
  }
};

struct EigEstimate {
  EigKind kind = EigKind::M;
  double value = 0.0;  // nats
  Eigen::Index L = 0, M = 0, N = 0;
  std::uint64_t seed = 0;
  std::optional<double> exact;
};

enum class DensityRole { MarginalY, ConditionalXGivenY, MarginalX, ConditionalYGivenX };

/// One plug-in density backed by a trained block map; the role must be
/// consistent with the map's ordering and block sizes.
struct DensityEstimate {
  DensityRole role;
  std::shared_ptr<const BlockTriangularMap> map;

  static DensityEstimate from_map(DensityRole role, std::shared_ptr<const BlockTriangularMap> map);

  Vector log_marginal(const Matrix& target) const;
  Vector log_conditional(const Matrix& target, const Matrix& given) const;
};

/// The density estimates available to an estimator. Exact closed forms (when
/// a test or oracle substitutes them) take precedence over trained maps.
struct DensitySet {
  std::optional<DensityEstimate> marg_y, cond_x_given_y, marg_x, cond_y_given_x;

  std::function<Vector(const Matrix&)> exact_marg_y, exact_marg_x;
  std::function<Vector(const Matrix&, const Matrix&)> exact_cond_x_given_y,
      exact_cond_y_given_x;  // (target, given)

  Vector log_marg_y(const Matrix& y) const;
  Vector log_marg_x(const Matrix& x) const;
  Vector log_cond_x_given_y(const Matrix& x, const Matrix& y) const;
  Vector log_cond_y_given_x(const Matrix& y, const Matrix& x) const;

  /// All four densities of a linear-Gaussian pair in closed form.
  static DensitySet exact_linear_gaussian(const LinearGaussianModel& model);
};

/// Monte Carlo average of the kind's log-ratio over the eval pairs:
///   m   -> exact likelihood over estimated evidence,
///   pos -> estimated posterior over exact prior,
///   lik -> estimated likelihood over estimated evidence,
///   pr  -> estimated posterior over estimated prior.
/// Missing densities or model capabilities raise CapabilityError.
EigEstimate estimate_eig(EigKind kind, const DensitySet& densities, const ModelBase& model,
                         const Matrix& eval_x, const Matrix& eval_y);

/// Nested Monte Carlo baseline with inner size ~ L^{1/3} and fresh inner
/// prior draws per outer sample. Requires exact likelihood evaluations.
EigEstimate nmc_eig(const ModelBase& model, Eigen::Index total, std::uint64_t seed);

/// One full transport-estimator cell: draw L joint samples from the given
/// seed, allocate with exponent p, train the maps the kind requires on the
/// training split, and average the log-ratio over the evaluation split.
EigEstimate transport_eig(const ModelBase& model, EigKind kind, Eigen::Index total, double p,
                          int degree, const FitOptions& fit, std::uint64_t seed);

struct SweepRow {
  EigKind kind = EigKind::M;
  double p = 0.0;
  Eigen::Index L = 0, M = 0, N = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::optional<double> value;
  std::optional<double> exact;
  std::string error;  // empty on success
};

struct SweepAggregate {
  double bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  int n_ok = 0;
  int n_failed = 0;
};

struct SweepKey {
  EigKind kind;
  double p;
  Eigen::Index L;
  auto operator<=>(const SweepKey&) const = default;
};

struct SweepTable {
  std::vector<SweepRow> rows;

  /// Per-(kind, p, L) bias/variance/MSE against the rows' exact reference;
  /// failed rows are skipped and counted. Population variance, so that
  /// mse = bias^2 + variance holds exactly within each group.
  std::map<SweepKey, SweepAggregate> aggregates() const;
};

struct SweepSpec {
  std::vector<EigKind> kinds;
  std::vector<double> exponents;
  std::vector<Eigen::Index> l_grid;
  int replicates = 1;
  int degree = 1;
  FitOptions fit;
  std::uint64_t base_seed = 0;
  int workers = 1;
};

/// Deterministic per-cell seed, hash(base, kind, p, L, replicate).
std::uint64_t cell_seed(std::uint64_t base, EigKind kind, double p, Eigen::Index total,
                        int replicate);

/// Run every (kind, p, L, replicate) cell with a fresh joint sample set and
/// record values against the exact reference. Failures are recorded per row,
/// never fatal.
SweepTable convergence_sweep(const ModelBase& model, const SweepSpec& spec,
                             std::optional<double> exact_reference);

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
};

/// OLS slope of log MSE against log L; needs >= 3 distinct L with positive MSE.
SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& l_and_mse);

/// CSV with header kind,p,L,M,N,replicate,seed,value,exact,error.
void write_sweep_csv(const std::string& path, const SweepTable& table);
std::string sweep_csv_string(const SweepTable& table);
/// JSON object keyed by "kind|p|L" with bias, variance, mse, n_ok, n_failed.
void write_sweep_aggregates_json(const std::string& path, const SweepTable& table);
std::string sweep_aggregates_json_string(const SweepTable& table);

}  // namespace tmeig
