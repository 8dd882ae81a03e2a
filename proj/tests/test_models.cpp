#include <doctest.h>

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "support/oracles.hpp"
#include "tmeig/models.hpp"

using namespace tmeig;

TEST_SUITE("models") {

TEST_CASE("squared exponential kernel basics") {
  Vector one(1);
  one << 0.3;
  CHECK(squared_exp_covariance(one, 0.7, 0.2)(0, 0) == doctest::Approx(0.7));

  Vector coincident = Vector::Constant(3, 1.0);
  const SymmetricMatrix k = squared_exp_covariance(coincident, 0.5, 0.1);
  CHECK((k.mat().array() - 0.5).abs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(squared_exp_covariance(one, -1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(squared_exp_covariance(one, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("squared exponential kernel on the 20-point grid") {
  const Vector points = Vector::LinSpaced(20, 0.0, 1.0);
  const SymmetricMatrix k = squared_exp_covariance(points, 0.1, 0.1);
  CHECK(k(0, 0) == doctest::Approx(0.1).epsilon(1e-14));
  const double spacing = 1.0 / 19.0;
  CHECK(k(0, 1) == doctest::Approx(0.1 * std::exp(-spacing * spacing / 0.01)).epsilon(1e-14));
}

TEST_CASE("random linear forward map has prescribed singular values") {
  const LinearGaussianModel model = make_linear_gaussian(20, 10, 0.8, 7);
  Eigen::JacobiSVD<Matrix> svd(model.g());
  for (int i = 0; i < 10; ++i)
    CHECK(std::abs(svd.singularValues()[i] - std::pow(0.8, i)) < 1e-10);
}

TEST_CASE("linear model construction is deterministic in the seed") {
  const LinearGaussianModel a = make_linear_gaussian(6, 3, 0.8, 42);
  const LinearGaussianModel b = make_linear_gaussian(6, 3, 0.8, 42);
  CHECK((a.g() - b.g()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decay one keeps all singular values at one") {
  const LinearGaussianModel model = make_linear_gaussian(5, 3, 1.0, 1);
  Eigen::JacobiSVD<Matrix> svd(model.g());
  for (int i = 0; i < 3; ++i) CHECK(svd.singularValues()[i] == doctest::Approx(1.0));
  CHECK_THROWS_AS(make_linear_gaussian(3, 5, 0.8, 1), std::invalid_argument);
}

TEST_CASE("joint samples reproduce the prior covariance") {
  const LinearGaussianModel model = make_linear_gaussian(4, 2, 0.8, 3);
  const Eigen::Index l = 100000;
  const JointSampleSet js = model.sample_joint(l, 17);
  const Matrix cov = sample_covariance(js.x).mat();
  const Matrix sx = model.prior_covariance().mat();
  const double bound = 5.0 * std::sqrt(2.0 / double(l));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(cov(i, j) - sx(i, j)) < bound * std::sqrt(sx(i, i) * sx(j, j)));
}

TEST_CASE("joint sampling is deterministic in the seed") {
  const LinearGaussianModel model = make_linear_gaussian(3, 2, 0.8, 5);
  const JointSampleSet a = model.sample_joint(100, 9);
  const JointSampleSet b = model.sample_joint(100, 9);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("moessbauer sampled width has median near one") {
  const MoessbauerModel model;
  const JointSampleSet js = model.sample_joint(100000, 23);
  std::vector<double> widths(js.x.col(1).data(), js.x.col(1).data() + js.size());
  std::nth_element(widths.begin(), widths.begin() + widths.size() / 2, widths.end());
  CHECK(std::abs(widths[widths.size() / 2] - 1.0) < 0.01);
}

TEST_CASE("linear log likelihood peaks at y = Gx") {
  const LinearGaussianModel model = make_linear_gaussian(4, 2, 0.8, 11);
  RngStream rng(2);
  const Vector x = rng.normal_vector(4);
  const Vector y0 = model.g() * x;
  const double peak = model.log_likelihood(y0, x);
  const double expected =
      -0.5 * (2.0 * std::log(2.0 * M_PI) + cholesky_logdet(model.noise_covariance()));
  CHECK(peak == doctest::Approx(expected).epsilon(1e-12));
  Vector y1 = y0;
  y1[0] += 0.05;
  CHECK(model.log_likelihood(y1, x) < peak);
}

TEST_CASE("linear log likelihood translation identity") {
  const LinearGaussianModel model = make_linear_gaussian(3, 3, 0.9, 13);
  RngStream rng(3);
  const Vector x = rng.normal_vector(3), y = rng.normal_vector(3), delta = rng.normal_vector(3);
  CHECK(model.log_likelihood(y + model.g() * delta, x + delta) ==
        doctest::Approx(model.log_likelihood(y, x)).epsilon(1e-12));
}

TEST_CASE("moessbauer offset-only signal leaves the Lorentzian residual") {
  const MoessbauerModel model;
  Vector x(4);
  x << 0.0, 1.0, 1e-9, 2.5;
  Vector y = Vector::Constant(3, 2.5);
  // Residual is height * w^2/(w^2+u^2) per channel; direct formula.
  double ss = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double u = 0.0 - model.velocities()[i];
    const double r = 1e-9 * 1.0 / (1.0 + u * u);
    ss += r * r;
  }
  const double expected = -0.5 * (3.0 * std::log(2.0 * M_PI * 0.01) + ss / 0.01);
  CHECK(model.log_likelihood(y, x) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("forward jacobians") {
  const LinearGaussianModel linear = make_linear_gaussian(4, 2, 0.8, 19);
  RngStream rng(5);
  CHECK((linear.forward_jacobian(rng.normal_vector(4)) - linear.g()).cwiseAbs().maxCoeff() ==
        0.0);

  const MoessbauerModel moessbauer;
  Vector at_peak(4);
  at_peak << moessbauer.velocities()[0], 1.1, 0.9, 2.7;
  CHECK(std::abs(moessbauer.forward_jacobian(at_peak)(0, 0)) < 1e-14);

  const Matrix x_draws = moessbauer.sample_prior(rng, 5);
  for (int i = 0; i < 5; ++i) {
    const Vector x = x_draws.row(i).transpose();
    const Matrix fd = testing::fd_jacobian(
        [&](const Vector& v) { return moessbauer.forward(v); }, x, 1e-5);
    const Matrix an = moessbauer.forward_jacobian(x);
    CHECK((fd - an).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, an.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("closed-form EIG, scalar and degenerate cases") {
  CHECK(closed_form_eig(make_scalar_gaussian()) == doctest::Approx(0.5 * std::log(2.0)));
  CHECK(closed_form_eig(make_scalar_gaussian(0.0)) == doctest::Approx(0.0));
}

TEST_CASE("full projection preserves the closed-form EIG") {
  const LinearGaussianModel model = make_linear_gaussian(5, 3, 0.8, 29);
  const double full = closed_form_eig(model);
  const double projected =
      closed_form_eig(model, Matrix::Identity(5, 5), Matrix::Identity(3, 3));
  CHECK(std::abs(full - projected) < 1e-12);
}

TEST_CASE("closed-form EIG decreases as noise grows") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const LinearGaussianModel base = make_linear_gaussian(5, 3, 0.8, seed);
    double prev = closed_form_eig(base);
    for (double scale : {2.0, 4.0}) {
      const LinearGaussianModel scaled(base.g(), base.prior_covariance(),
                                       SymmetricMatrix(scale * base.noise_covariance().mat()));
      const double value = closed_form_eig(scaled);
      CHECK(value <= prev + 1e-12);
      prev = value;
    }
  }
}

TEST_CASE("projection never increases the closed-form EIG") {
  const LinearGaussianModel model = make_linear_gaussian(6, 4, 0.8, 31);
  const double full = closed_form_eig(model);
  RngStream rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index r = 1 + trial % 5, s = 1 + trial % 3;
    Eigen::HouseholderQR<Matrix> qx(rng.normal_matrix(6, r));
    Eigen::HouseholderQR<Matrix> qy(rng.normal_matrix(4, s));
    const Matrix u = Matrix(qx.householderQ()).leftCols(r);
    const Matrix v = Matrix(qy.householderQ()).leftCols(s);
    CHECK(closed_form_eig(model, u, v) <= full + 1e-12);
  }
}

TEST_CASE("focused model exposes the center with a standard normal prior") {
  const MoessbauerModel base;
  const FocusedCenterModel focused(base);
  CHECK(focused.dim_x() == 1);
  const JointSampleSet full = base.sample_joint(50, 77);
  const JointSampleSet slim = focused.sample_joint(50, 77);
  CHECK((slim.x.col(0) - full.x.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((slim.y - full.y).cwiseAbs().maxCoeff() == 0.0);
  Vector c(1);
  c << 0.4;
  CHECK(focused.log_prior(c) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 0.5 * 0.16).epsilon(1e-12));
  CHECK_THROWS_AS(focused.log_likelihood(slim.y.row(0).transpose(), c), CapabilityError);
}

TEST_CASE("moessbauer prior covariance matches lognormal moments empirically") {
  const MoessbauerModel model;
  RngStream rng(55);
  const Matrix draws = model.sample_prior(rng, 200000);
  const Matrix cov = sample_covariance(draws).mat();
  const Matrix exact = model.prior_covariance().mat();
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(cov(i, i) - exact(i, i)) < 0.05 * std::max(0.05, exact(i, i)));
  const Vector mean_draws = draws.colwise().mean();
  CHECK((mean_draws - model.prior_mean()).cwiseAbs().maxCoeff() < 0.02);
}

}  // TEST_SUITE
