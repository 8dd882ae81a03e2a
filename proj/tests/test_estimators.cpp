#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support/oracles.hpp"
#include "tmeig/estimators.hpp"

using namespace tmeig;

TEST_SUITE("estimators") {

TEST_CASE("allocation follows the optimal-split formula") {
  const auto [m, n] = allocate(1000, 1.0 / 3.0, 2);
  CHECK(m == 909);
  CHECK(n == 91);
}

TEST_CASE("allocation approaches an even split as p vanishes") {
  const auto [m, n] = allocate(1000, 1e-9, 2);
  CHECK(std::abs(double(m) - 500.0) <= 1.0);
  CHECK(m + n == 1000);
}

TEST_CASE("allocation clamps to the training floor") {
  const auto [m, n] = allocate(10, 1.0 / 3.0, 8);
  CHECK(n == 8);
  CHECK(m == 2);
}

TEST_CASE("allocation argument errors") {
  CHECK_THROWS_AS(allocate(5, 1.0 / 3.0, 8), std::invalid_argument);
  CHECK_THROWS_AS(allocate(100, 0.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(allocate(100, 1.0, 2), std::invalid_argument);
}

TEST_CASE("allocated evaluation count is monotone in the budget") {
  Eigen::Index prev = 0;
  for (Eigen::Index total : {100, 200, 500, 1000, 5000, 20000}) {
    const auto [m, n] = allocate(total, 1.0 / 3.0, 2);
    CHECK(m >= prev);
    CHECK(m + n == total);
    prev = m;
  }
}

TEST_CASE("exact densities drive every estimator to the closed form") {
  const LinearGaussianModel model = make_scalar_gaussian();
  const double exact = closed_form_eig(model);
  const DensitySet ds = DensitySet::exact_linear_gaussian(model);
  const JointSampleSet js = model.sample_joint(100000, 5);

  for (EigKind kind : {EigKind::M, EigKind::Pos, EigKind::Lik, EigKind::Pr}) {
    const EigEstimate est = estimate_eig(kind, ds, model, js.x, js.y);
    // Per-sample variance of the log-ratio bounds the Monte Carlo error.
    Vector num(js.size()), den(js.size());
    switch (kind) {
      case EigKind::M:
      case EigKind::Lik:
        num = ds.log_cond_y_given_x(js.y, js.x);
        den = ds.log_marg_y(js.y);
        break;
      default:
        num = ds.log_cond_x_given_y(js.x, js.y);
        den = ds.log_marg_x(js.x);
        break;
    }
    const Vector ratio = num - den;
    const double se = std::sqrt((ratio.array() - ratio.mean()).square().sum() /
                                double(js.size() - 1) / double(js.size()));
    CHECK(std::abs(est.value - exact) < 3.0 * se);
  }
}

TEST_CASE("exact-density estimator identities") {
  const LinearGaussianModel model = make_scalar_gaussian();
  const DensitySet ds = DensitySet::exact_linear_gaussian(model);
  const JointSampleSet js = model.sample_joint(2000, 7);
  // With exact densities m == lik and pos == pr pointwise.
  CHECK(estimate_eig(EigKind::M, ds, model, js.x, js.y).value ==
        doctest::Approx(estimate_eig(EigKind::Lik, ds, model, js.x, js.y).value)
            .epsilon(1e-12));
  CHECK(estimate_eig(EigKind::Pos, ds, model, js.x, js.y).value ==
        doctest::Approx(estimate_eig(EigKind::Pr, ds, model, js.x, js.y).value)
            .epsilon(1e-12));
}

TEST_CASE("missing densities raise capability errors") {
  const LinearGaussianModel model = make_scalar_gaussian();
  const JointSampleSet js = model.sample_joint(50, 9);
  DensitySet empty;
  CHECK_THROWS_AS(estimate_eig(EigKind::M, empty, model, js.x, js.y), CapabilityError);
  CHECK_THROWS_AS(estimate_eig(EigKind::Pr, empty, model, js.x, js.y), CapabilityError);
}

TEST_CASE("density estimate roles must match map orderings") {
  auto map = std::make_shared<BlockTriangularMap>();
  map->ordering = BlockOrdering::XThenY;
  map->n_lead = 1;
  map->map = identity_map(2);
  CHECK_THROWS_AS(DensityEstimate::from_map(DensityRole::MarginalY, map),
                  std::invalid_argument);
  CHECK_NOTHROW(DensityEstimate::from_map(DensityRole::MarginalX, map));
  CHECK_NOTHROW(DensityEstimate::from_map(DensityRole::ConditionalYGivenX, map));
}

TEST_CASE("trained likelihood-free estimators agree in the affine-Gaussian regime") {
  const LinearGaussianModel model = make_linear_gaussian(2, 1, 0.8, 3);
  const JointSampleSet joint = model.sample_joint(4000, 21);
  FitOptions fit;
  fit.grad_tol = 1e-12;

  const auto [m_eval, n_train] = allocate(4000, 1.0 / 3.0, 5);
  JointSampleSet js = joint;
  js.set_split(n_train);

  const auto yx = std::make_shared<BlockTriangularMap>(
      fit_block_map(js.train_y(), js.train_x(), BlockOrdering::YThenX, 1, fit));
  const auto xy = std::make_shared<BlockTriangularMap>(
      fit_block_map(js.train_x(), js.train_y(), BlockOrdering::XThenY, 1, fit));
  const auto y_marg = std::make_shared<BlockTriangularMap>(
      fit_block_map(js.train_y(), Matrix(n_train, 0), BlockOrdering::YThenX, 1, fit));
  const auto x_marg = std::make_shared<BlockTriangularMap>(
      fit_block_map(js.train_x(), Matrix(n_train, 0), BlockOrdering::XThenY, 1, fit));

  DensitySet ds;
  ds.cond_x_given_y = DensityEstimate::from_map(DensityRole::ConditionalXGivenY, yx);
  ds.cond_y_given_x = DensityEstimate::from_map(DensityRole::ConditionalYGivenX, xy);
  ds.marg_y = DensityEstimate::from_map(DensityRole::MarginalY, y_marg);
  ds.marg_x = DensityEstimate::from_map(DensityRole::MarginalX, x_marg);

  const double lik = estimate_eig(EigKind::Lik, ds, model, js.eval_x(), js.eval_y()).value;
  const double pr = estimate_eig(EigKind::Pr, ds, model, js.eval_x(), js.eval_y()).value;
  CHECK(std::abs(lik - pr) < 1e-8);
}

TEST_CASE("nested Monte Carlo tracks the scalar closed form with positive bias") {
  const LinearGaussianModel model = make_scalar_gaussian();
  const double exact = closed_form_eig(model);
  std::vector<double> values;
  for (int rep = 0; rep < 30; ++rep)
    values.push_back(nmc_eig(model, 100000, 1000 + rep).value);
  const double mean = testing::sample_mean(values);
  const double se = testing::standard_error(values);
  CHECK(std::abs(mean - exact) < 3.0 * se + 0.01);
  CHECK(mean > exact);  // nested MC is positively biased
}

TEST_CASE("nested Monte Carlo shrinks toward zero on a zero-information model") {
  const LinearGaussianModel model = make_scalar_gaussian(0.0);
  std::vector<double> small, large;
  for (int rep = 0; rep < 8; ++rep) {
    small.push_back(nmc_eig(model, 1000, 50 + rep).value);
    large.push_back(nmc_eig(model, 64000, 150 + rep).value);
  }
  const double mean_small = testing::sample_mean(small);
  const double mean_large = testing::sample_mean(large);
  CHECK(mean_small > 0.0);
  CHECK(mean_large > 0.0);
  CHECK(mean_large < mean_small);
}

TEST_CASE("nested Monte Carlo is deterministic in the seed") {
  const LinearGaussianModel model = make_scalar_gaussian();
  CHECK(nmc_eig(model, 5000, 77).value == nmc_eig(model, 5000, 77).value);
  CHECK(nmc_eig(model, 5000, 77).value != nmc_eig(model, 5000, 78).value);
}

TEST_CASE("transport cells are deterministic functions of the seed") {
  const LinearGaussianModel model = make_scalar_gaussian();
  const EigEstimate a = transport_eig(model, EigKind::Pos, 2000, 1.0 / 3.0, 1, {}, 13);
  const EigEstimate b = transport_eig(model, EigKind::Pos, 2000, 1.0 / 3.0, 1, {}, 13);
  CHECK(a.value == b.value);
  CHECK(a.M == b.M);
  CHECK(a.N == b.N);
}

TEST_CASE("a small sweep produces consistent aggregates") {
  const LinearGaussianModel model = make_scalar_gaussian();
  SweepSpec spec;
  spec.kinds = {EigKind::M, EigKind::Nmc};
  spec.exponents = {1.0 / 3.0};
  spec.l_grid = {500, 1000};
  spec.replicates = 3;
  spec.base_seed = 99;
  const SweepTable table = convergence_sweep(model, spec, closed_form_eig(model));
  CHECK(table.rows.size() == 2 * 2 * 3);
  for (const auto& row : table.rows) CHECK(row.error.empty());

  for (const auto& [key, agg] : table.aggregates()) {
    CHECK(agg.n_ok == 3);
    CHECK(agg.n_failed == 0);
    CHECK(std::abs(agg.mse - (agg.bias * agg.bias + agg.variance)) < 1e-12);
  }
}

TEST_CASE("single-replicate groups have zero variance") {
  const LinearGaussianModel model = make_scalar_gaussian();
  SweepSpec spec;
  spec.kinds = {EigKind::M};
  spec.exponents = {1.0 / 3.0};
  spec.l_grid = {400};
  spec.replicates = 1;
  const SweepTable table = convergence_sweep(model, spec, closed_form_eig(model));
  const auto aggs = table.aggregates();
  CHECK(aggs.begin()->second.variance == 0.0);
}

TEST_CASE("failures are recorded per row, not thrown") {
  // The focused model cannot evaluate likelihoods, so kind m fails per cell.
  const FocusedCenterModel model{MoessbauerModel()};
  SweepSpec spec;
  spec.kinds = {EigKind::M};
  spec.exponents = {1.0 / 3.0};
  spec.l_grid = {300};
  spec.replicates = 2;
  const SweepTable table = convergence_sweep(model, spec, std::nullopt);
  CHECK(table.rows.size() == 2);
  for (const auto& row : table.rows) {
    CHECK(!row.value.has_value());
    CHECK(row.error.find("likelihood") != std::string::npos);
  }
  CHECK(table.aggregates().begin()->second.n_failed == 2);
}

TEST_CASE("log-log slope recovery") {
  std::vector<std::pair<double, double>> exact_inverse;
  for (double l : {500.0, 1000.0, 2000.0, 4000.0}) exact_inverse.push_back({l, 3.7 / l});
  const SlopeFit unit = fit_loglog_slope(exact_inverse);
  CHECK(unit.slope == doctest::Approx(-1.0).epsilon(1e-12));

  std::vector<std::pair<double, double>> two_thirds;
  for (double l : {500.0, 1000.0, 2000.0, 4000.0})
    two_thirds.push_back({l, 0.8 * std::pow(l, -2.0 / 3.0)});
  CHECK(fit_loglog_slope(two_thirds).slope == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));

  RngStream rng(123);
  std::vector<std::pair<double, double>> noisy;
  const double truth = -0.9;
  for (double l : {500.0, 1000.0, 2000.0, 4000.0, 8000.0, 16000.0})
    noisy.push_back({l, 2.0 * std::pow(l, truth) * std::exp(0.05 * rng.normal())});
  const SlopeFit fit = fit_loglog_slope(noisy);
  CHECK(std::abs(fit.slope - truth) < 2.0 * fit.std_error + 1e-9);

  CHECK_THROWS_AS(fit_loglog_slope({{100.0, 1.0}, {200.0, 0.5}}), std::invalid_argument);
}

TEST_CASE("sweep CSV format and determinism") {
  const LinearGaussianModel model = make_scalar_gaussian();
  SweepSpec spec;
  spec.kinds = {EigKind::M};
  spec.exponents = {0.25};
  spec.l_grid = {300};
  spec.replicates = 2;
  spec.base_seed = 7;
  const SweepTable a = convergence_sweep(model, spec, closed_form_eig(model));
  const SweepTable b = convergence_sweep(model, spec, closed_form_eig(model));
  const std::string csv = sweep_csv_string(a);
  CHECK(csv.rfind("kind,p,L,M,N,replicate,seed,value,exact,error\n", 0) == 0);
  CHECK(csv == sweep_csv_string(b));
  CHECK(sweep_aggregates_json_string(a) == sweep_aggregates_json_string(b));
}

TEST_CASE("estimator kind names round trip") {
  for (EigKind kind : {EigKind::M, EigKind::Pos, EigKind::Lik, EigKind::Pr, EigKind::Nmc,
                       EigKind::Gaussian})
    CHECK(eig_kind_from_string(to_string(kind)) == kind);
  CHECK_THROWS_AS(eig_kind_from_string("bogus"), std::invalid_argument);
}

}  // TEST_SUITE
