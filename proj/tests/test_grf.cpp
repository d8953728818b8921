#include <doctest.h>

#include "dsi/error.hpp"
#include "dsi/grf.hpp"
#include "dsi/stats.hpp"
#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace dsi;

TEST_CASE("grid geometry") {
  const Grid g(4, 2, 1000.0, 500.0);
  CHECK(g.cells() == 8);
  CHECK(g.cell_area() == doctest::Approx(250.0 * 250.0));
  const auto [x, y] = g.centre(g.index(3, 1));
  CHECK(x == doctest::Approx(875.0));
  CHECK(y == doctest::Approx(375.0));
  CHECK(g.containing_cell(0.0, 0.0) == 0);
  CHECK(g.containing_cell(1000.0, 500.0) == g.index(3, 1));
  CHECK(g.containing_cell(250.0, 10.0) == g.index(1, 0));
  CHECK_THROWS_AS(g.containing_cell(1000.1, 0.0), ConfigError);
  CHECK_THROWS_AS(Grid(0, 2, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(Grid(2, 2, -1.0, 1.0), ConfigError);
}

TEST_CASE("squared-exponential covariance entries") {
  const CovarianceModel model{0.75, 250.0, -31.0};
  SUBCASE("zero distance gives sigma^2") {
    const Matrix c = build_covariance_matrix(Grid(3, 3, 1000.0, 1000.0), model);
    for (Eigen::Index i = 0; i < c.rows(); ++i) CHECK(c(i, i) == doctest::Approx(0.5625));
  }
  SUBCASE("distance equal to the lengthscale") {
    // Centres at 125 and 375 m.
    const Matrix c = build_covariance_matrix(Grid(2, 1, 500.0, 250.0), model);
    CHECK(c(0, 1) == doctest::Approx(0.5625 * std::exp(-0.5)).epsilon(1e-14));
  }
  SUBCASE("2x2 grid against per-pair evaluation") {
    const Matrix c = build_covariance_matrix(Grid(2, 2, 1000.0, 1000.0), model);
    const double xs[4] = {250.0, 750.0, 250.0, 750.0};
    const double ys[4] = {250.0, 250.0, 750.0, 750.0};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double r2 = (xs[i] - xs[j]) * (xs[i] - xs[j]) + (ys[i] - ys[j]) * (ys[i] - ys[j]);
        CHECK(c(i, j) == doctest::Approx(0.5625 * std::exp(-r2 / (2.0 * 250.0 * 250.0))).epsilon(1e-14));
      }
    CHECK((c - c.transpose()).norm() == 0.0);
  }
  CHECK_THROWS_AS(build_covariance_matrix(Grid(2, 2, 1.0, 1.0), CovarianceModel{0.0, 1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(build_covariance_matrix(Grid(2, 2, 1.0, 1.0), CovarianceModel{1.0, -1.0, 0.0}), ConfigError);
}

TEST_CASE("truncated_kl") {
  SUBCASE("scaled identity") {
    const EigenPairs e = truncated_kl(0.5625 * Matrix::Identity(5, 5), 5);
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(e.eigenvalues(i) == doctest::Approx(0.5625));
    CHECK((e.modes.transpose() * e.modes - Matrix::Identity(5, 5)).norm() < 1e-12);
  }
  SUBCASE("diagonal, two modes") {
    Matrix c = Vector(Eigen::Vector3d(3.0, 1.0, 2.0)).asDiagonal();
    const EigenPairs e = truncated_kl(c, 2);
    CHECK(e.eigenvalues(0) == doctest::Approx(3.0));
    CHECK(e.eigenvalues(1) == doctest::Approx(2.0));
    CHECK(std::abs(e.modes(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(e.modes(2, 1)) == doctest::Approx(1.0));
    CHECK(e.total_variance == doctest::Approx(6.0));
  }
  SUBCASE("2x2 squared-exponential grid against a Jacobi oracle") {
    const Matrix c = build_covariance_matrix(Grid(2, 2, 1000.0, 1000.0), CovarianceModel{0.75, 250.0, -31.0});
    const EigenPairs e = truncated_kl(c, 4);
    const auto [lambda, vecs] = oracle::jacobi_eigen(c);
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(std::abs(e.eigenvalues(i) - lambda(i)) < 1e-10);
      // Residual check; degenerate eigenspaces make a direct vector comparison ill-posed.
      CHECK((c * e.modes.col(i) - e.eigenvalues(i) * e.modes.col(i)).norm() < 1e-10);
    }
  }
  SUBCASE("errors and clamping") {
    Matrix asym = Matrix::Identity(3, 3);
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(truncated_kl(asym, 2), ConfigError);
    Matrix indefinite = Vector(Eigen::Vector2d(1.0, -1.0)).asDiagonal();
    CHECK_THROWS_AS(truncated_kl(indefinite, 1), NumericalError);
    Matrix tiny = Vector(Eigen::Vector3d(1.0, 1.0, -1e-10)).asDiagonal();
    const EigenPairs e = truncated_kl(tiny, 3);
    CHECK(e.eigenvalues(2) == 0.0);
    CHECK_THROWS_AS(truncated_kl(Matrix::Identity(3, 3), 4), ConfigError);
  }
}

TEST_CASE("sample_field") {
  const Grid g(5, 5, 1000.0, 1000.0);
  const KLBasis basis = build_kl_basis(g, CovarianceModel{0.75, 250.0, -31.0}, 10);
  basis.check_invariants();

  CHECK((sample_field(basis, Vector::Zero(10)).values.array() == -31.0).all());

  Vector e1 = Vector::Zero(10);
  e1(0) = 1.0;
  const Vector expected = basis.mean + std::sqrt(basis.spectrum.eigenvalues(0)) * basis.spectrum.modes.col(0);
  CHECK((sample_field(basis, e1).values - expected).norm() < 1e-12);

  CHECK_THROWS_AS(sample_field(basis, Vector::Zero(9)), ConfigError);

  SUBCASE("Monte Carlo covariance matches the truncated covariance") {
    Rng rng = make_rng(7, 0);
    const int n = 10000;
    Matrix draws(n, g.cells());
    for (int s = 0; s < n; ++s) draws.row(s) = sample_field(basis, standard_normal(rng, 10)).values.transpose();
    const Matrix sample_cov = stats::covariance_rows(draws);
    const Matrix truncated = basis.spectrum.modes * basis.spectrum.eigenvalues.asDiagonal() *
                             basis.spectrum.modes.transpose();
    CHECK(relative_frobenius(sample_cov, truncated) < 0.1);
  }
}

TEST_CASE("exp_field") {
  const Grid g(3, 2, 1.0, 1.0);
  const Field k = exp_field(Field::constant(g, -31.0));
  for (Eigen::Index c = 0; c < g.cells(); ++c) CHECK(k.values(c) == doctest::Approx(std::exp(-31.0)));
  CHECK((exp_field(Field::constant(g, 0.0)).values.array() == 1.0).all());
  Rng rng = make_rng(1, 1);
  const Field u(g, 3.0 * standard_normal(rng, g.cells()));
  const Vector back = exp_field(u).values.array().log();
  CHECK((back - u.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("property: KL invariants on random grids") {
  Rng rng = make_rng(2024, 0);
  std::uniform_int_distribution<int> cells(1, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 120; ++trial) {
    const Grid g(cells(rng), cells(rng), 100.0 + 900.0 * unit(rng), 100.0 + 900.0 * unit(rng));
    const CovarianceModel model{0.1 + 2.0 * unit(rng), 20.0 + 500.0 * unit(rng), -30.0 * unit(rng)};
    std::uniform_int_distribution<Eigen::Index> modes(1, g.cells());
    const Eigen::Index n = modes(rng);
    const KLBasis basis = build_kl_basis(g, model, n);
    CAPTURE(trial);
    CHECK_NOTHROW(basis.check_invariants(1e-8));

    // Retained energy never exceeds the trace (nx*ny*sigma^2).
    const double trace = static_cast<double>(g.cells()) * model.sigma * model.sigma;
    CHECK(basis.spectrum.eigenvalues.sum() <= trace * (1.0 + 1e-12));
    CHECK(basis.retained_fraction() <= 1.0 + 1e-12);

    // Linearity of the expansion about the mean.
    const Vector x1 = standard_normal(rng, n), x2 = standard_normal(rng, n);
    const double a = 2.0 * unit(rng) - 1.0, b = 2.0 * unit(rng) - 1.0;
    const Vector lhs = sample_field(basis, a * x1 + b * x2).values - basis.mean;
    const Vector rhs = a * (sample_field(basis, x1).values - basis.mean) + b * (sample_field(basis, x2).values - basis.mean);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("property: iterative KL path against a dense solve") {
  // Grids above the dense limit take the subspace-iteration path; the dense
  // tridiagonal solver is an unrelated algorithm and serves as the oracle.
  Rng rng = make_rng(77, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int nx = 32 + trial % 5, ny = 32 + (trial / 5) % 4;
    const Grid g(nx, ny, 500.0 + 1000.0 * unit(rng), 500.0 + 1000.0 * unit(rng));
    const CovarianceModel model{0.2 + 1.5 * unit(rng), 80.0 + 400.0 * unit(rng), -31.0};
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(unit(rng) * 60.0);
    REQUIRE(g.cells() > kDenseEigenLimit);
    CAPTURE(trial);
    const Matrix c = build_covariance_matrix(g, model);
    const EigenPairs e = truncated_kl(c, k);
    const double top = e.eigenvalues(0);

    const Matrix gram = e.modes.transpose() * e.modes;
    CHECK((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
    const Matrix residual = c * e.modes - e.modes * e.eigenvalues.asDiagonal();
    CHECK(residual.colwise().norm().maxCoeff() < 1e-9 * top);

    if (trial % 10 == 0) {  // the dense oracle costs a few seconds per case
      Eigen::SelfAdjointEigenSolver<Matrix> dense(c);
      const Vector ref = dense.eigenvalues().reverse().head(k);
      CHECK((e.eigenvalues - ref).cwiseAbs().maxCoeff() < 1e-9 * top);
    }
  }
}
