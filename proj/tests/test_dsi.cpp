#include <doctest.h>

#include "dsi/ensemble.hpp"
#include "dsi/error.hpp"
#include "dsi/transform.hpp"
#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dsi;

namespace {

struct LinearProblem {
  Matrix a;  // data map
  Matrix b;  // prediction map
  Matrix gamma_e;
  Vector d_obs;

  Ensemble ensemble(Eigen::Index count, std::uint64_t seed) const {
    const auto n = a.cols();
    return build_ensemble([n](Rng& r) { return standard_normal(r, n); },
                          [this](const Vector& x) { return Vector(a * x); },
                          [this](const Vector& x) { return Vector(b * x); }, count, seed, 1);
  }

  std::pair<Vector, Matrix> exact_predictive() const {
    const auto post = oracle::linear_gaussian_posterior(a, gamma_e, d_obs);
    return {b * post.mean, b * post.covariance * b.transpose()};
  }
};

LinearProblem make_problem(std::uint64_t seed, Eigen::Index n = 3, Eigen::Index d = 5, Eigen::Index m = 4) {
  Rng rng = make_rng(seed, 0);
  LinearProblem p;
  p.a.resize(d, n);
  p.b.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    p.a.col(j) = standard_normal(rng, d);
    p.b.col(j) = standard_normal(rng, m);
  }
  p.gamma_e = 0.1 * Matrix::Identity(d, d);
  p.d_obs = p.a * standard_normal(rng, n);
  return p;
}

Ensemble scalar_ensemble(const std::vector<double>& d, const std::vector<double>& p) {
  Ensemble e;
  const auto l = static_cast<Eigen::Index>(d.size());
  e.params = Matrix::Zero(l, 1);
  e.data.resize(l, 1);
  e.predictions.resize(l, 1);
  for (Eigen::Index i = 0; i < l; ++i) {
    e.data(i, 0) = d[static_cast<std::size_t>(i)];
    e.predictions(i, 0) = p[static_cast<std::size_t>(i)];
  }
  e.status.assign(d.size(), MemberStatus::ok);
  return e;
}

}  // namespace

TEST_CASE("two-member moments") {
  const auto m = ensemble_moments(scalar_ensemble({0.0, 2.0}, {0.0, 2.0}));
  CHECK(m.d0(0) == 1.0);
  CHECK(m.gamma_d(0, 0) == 2.0);
  CHECK(m.gamma_pd(0, 0) == 2.0);
  CHECK(m.count == 2);
  CHECK_THROWS_AS(ensemble_moments(scalar_ensemble({1.0}, {1.0})), SimulationError);
}

TEST_CASE("identical members give zero covariance and the ensemble value") {
  const auto m = ensemble_moments(scalar_ensemble({3.0, 3.0, 3.0}, {5.0, 5.0, 5.0}));
  CHECK(m.gamma_d(0, 0) == 0.0);
  const auto c = condition(m, Vector::Constant(1, 10.0), Matrix::Identity(1, 1));
  CHECK(c.mean(0) == 5.0);
  CHECK(c.covariance(0, 0) == 0.0);
}

TEST_CASE("conditioning limits") {
  const LinearProblem lp = make_problem(3);
  const Ensemble ens = lp.ensemble(200, 1);
  const JointMoments mom = ensemble_moments(ens);

  SUBCASE("zero innovation returns the prior mean") {
    const auto c = condition(mom, mom.d0, lp.gamma_e);
    CHECK((c.mean - mom.p0).norm() <= 1e-12 * mom.p0.norm() + 1e-14);
  }
  SUBCASE("huge noise returns the prior moments") {
    const auto c = condition(mom, lp.d_obs, 1e6 * Matrix::Identity(5, 5));
    CHECK((c.mean - mom.p0).norm() < 1e-4 * (1.0 + mom.p0.norm()));
    CHECK(relative_frobenius(c.covariance, mom.gamma_p) < 1e-4);
  }
  SUBCASE("predicting the data itself recovers the observation as noise vanishes") {
    Ensemble same = ens;
    same.predictions = same.data;
    const auto m2 = ensemble_moments(same);
    const auto c = condition(m2, lp.d_obs, 1e-10 * Matrix::Identity(5, 5));
    // Data live in a 3-dimensional subspace; d_obs lies in it.
    CHECK((c.mean - lp.d_obs).norm() < 1e-4 * lp.d_obs.norm());
    CHECK(c.covariance.norm() < 1e-4 * m2.gamma_d.norm());
  }
}

TEST_CASE("linear-Gaussian agreement and 1/sqrt(l) convergence") {
  const LinearProblem lp = make_problem(8);
  const auto [mean, cov] = lp.exact_predictive();
  double err_small = 0.0, err_large = 0.0;
  for (std::uint64_t rep = 0; rep < 8; ++rep) {
    const auto cs = condition(ensemble_moments(lp.ensemble(100, 100 + rep)), lp.d_obs, lp.gamma_e);
    const auto cl = condition(ensemble_moments(lp.ensemble(10000, 100 + rep)), lp.d_obs, lp.gamma_e);
    err_small += relative_frobenius(cs.covariance, cov) + (cs.mean - mean).norm() / std::sqrt(cov.trace());
    err_large += relative_frobenius(cl.covariance, cov) + (cl.mean - mean).norm() / std::sqrt(cov.trace());
  }
  // Ten times the error for a hundred times the members, with generous slack.
  CHECK(err_large < err_small / 5.0);
  CHECK(err_large / 8.0 < 0.05);
}

TEST_CASE("conditional sampling reproduces the covariance") {
  const LinearProblem lp = make_problem(4);
  const auto c = condition(ensemble_moments(lp.ensemble(500, 2)), lp.d_obs, lp.gamma_e);
  Rng rng = make_rng(4, 4);
  const Matrix draws = sample_conditional(c, 200000, rng);
  CHECK(relative_frobenius(stats::covariance_rows(draws), c.covariance) < 0.02);
  CHECK((stats::mean_rows(draws) - c.mean).norm() < 0.02 * std::sqrt(c.covariance.trace()));
}

TEST_CASE("without informative data DSI draws match the ensemble (two-sample KS)") {
  const LinearProblem lp = make_problem(6);
  const Ensemble ens = lp.ensemble(2000, 9);
  DsiOptions opts;
  opts.n_samples = 2000;
  opts.seed = 5;
  const DsiResult r = dsi_pipeline(ens, lp.d_obs, 1e12 * Matrix::Identity(5, 5), opts);
  for (Eigen::Index j = 0; j < 4; ++j) {
    std::vector<double> a(ens.predictions.col(j).data(), ens.predictions.col(j).data() + 2000);
    std::vector<double> b(r.samples.col(j).data(), r.samples.col(j).data() + 2000);
    CHECK(stats::ks_statistic(a, b) < stats::ks_critical_value(2000, 2000, 0.01));
  }
}

TEST_CASE("conditioning properties over random ensembles") {
  Rng meta = make_rng(2024, 0);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 2 + trial % 4, m = 1 + trial % 3, l = 5 + trial % 20;
    Rng rng = make_rng(3000 + static_cast<std::uint64_t>(trial), 0);
    Ensemble e;
    e.params = Matrix::Zero(l, 1);
    e.data.resize(l, d);
    e.predictions.resize(l, m);
    for (Eigen::Index i = 0; i < l; ++i) {
      e.data.row(i) = standard_normal(rng, d).transpose();
      e.predictions.row(i) = standard_normal(rng, m).transpose() + 0.5 * e.data.row(i).head(std::min(d, m)).sum() * Vector::Ones(m).transpose();
    }
    e.status.assign(static_cast<std::size_t>(l), MemberStatus::ok);
    const Vector d_obs = standard_normal(rng, d);
    const Matrix ge = (0.1 + std::abs(u(meta))) * Matrix::Identity(d, d);
    const auto mom = ensemble_moments(e);
    const auto c = condition(mom, d_obs, ge);

    // Variance never grows: G_p - cov is positive semidefinite.
    Eigen::SelfAdjointEigenSolver<Matrix> es(mom.gamma_p - c.covariance);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * mom.gamma_p.norm());

    // Member order is irrelevant.
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(l));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Ensemble shuffled = e;
    for (Eigen::Index i = 0; i < l; ++i) {
      shuffled.data.row(i) = e.data.row(perm[static_cast<std::size_t>(i)]);
      shuffled.predictions.row(i) = e.predictions.row(perm[static_cast<std::size_t>(i)]);
    }
    const auto cp = condition(ensemble_moments(shuffled), d_obs, ge);
    CHECK((cp.mean - c.mean).norm() <= 1e-10 * (1.0 + c.mean.norm()));
    CHECK((cp.covariance - c.covariance).norm() <= 1e-10 * (1.0 + c.covariance.norm()));

    // Affine maps of the predictions commute with conditioning.
    const double scale = u(meta) + 3.0, shift = u(meta) * 1e3;
    Ensemble affine = e;
    affine.predictions = (scale * e.predictions.array() + shift).matrix();
    const auto ca = condition(ensemble_moments(affine), d_obs, ge);
    CHECK((ca.mean - (scale * c.mean.array() + shift).matrix()).norm() <= 1e-9 * (1.0 + std::abs(shift)));
    CHECK((ca.covariance - scale * scale * c.covariance).norm() <= 1e-9 * (1.0 + scale * scale * c.covariance.norm()));
  }
}

TEST_CASE("build_ensemble") {
  const VectorModel fwd = [](const Vector& x) -> Vector {
    if (x(0) > 1.5) throw SimulationError("boom");
    return x * 2.0;
  };
  const VectorModel pred = [](const Vector& x) { return Vector::Constant(2, x.sum()); };
  const PriorSampler prior = [](Rng& r) { return standard_normal(r, 3); };
  const Ensemble e1 = build_ensemble(prior, fwd, pred, 300, 17, 1);
  const Ensemble e3 = build_ensemble(prior, fwd, pred, 300, 17, 3);
  CHECK(e1.size() == 300);
  CHECK(e1.params == e3.params);
  CHECK(e1.status == e3.status);
  CHECK(e1.n_ok() < 300);
  for (Eigen::Index i = 0; i < e1.size(); ++i) {
    if (e1.status[static_cast<std::size_t>(i)] == MemberStatus::ok) {
      CHECK(e1.data.row(i) == 2.0 * e1.params.row(i));
    } else {
      CHECK(e1.data.row(i).hasNaN());
    }
  }
  // The first members do not depend on how many are drawn.
  CHECK(build_ensemble(prior, fwd, pred, 10, 17, 1).params == e1.params.topRows(10));
  CHECK(e1.head(10).params == e1.params.topRows(10));
  CHECK(e1.successes().size() == e1.n_ok());
  const auto mom = ensemble_moments(e1);
  CHECK(mom.count == e1.n_ok());
  CHECK(mom.gamma_d.allFinite());

  const VectorModel broken = [](const Vector&) -> Vector { throw SimulationError("always"); };
  CHECK_THROWS_AS(build_ensemble(prior, broken, pred, 5, 1, 1), SimulationError);
}

TEST_CASE("increment-log transform") {
  const double scale = 1e6;  // Pa per MPa
  const IncrementLogTransform t({{1, 3, 0}}, 0.01, scale);
  const Vector flat = Vector::Constant(4, 2e7);
  const Vector y = t.forward(flat);
  CHECK(y(0) == 2e7);
  for (int k = 1; k < 4; ++k) CHECK(y(k) == doctest::Approx(std::log(0.01)));
  CHECK(t.inverse(y) == flat);

  Vector rising = flat;
  rising(2) += 0.02 * scale;
  CHECK_THROWS_AS(t.forward(rising), TransformDomainError);
  rising(2) = flat(1) + 0.01 * scale;  // exactly delta
  CHECK_THROWS_AS(t.forward(rising), TransformDomainError);

  Rng rng = make_rng(31, 0);
  std::uniform_real_distribution<double> inc(-2.0, 0.009);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tw = IncrementLogTransform::after_index(3, 8, 1 + trial % 7, 0.01, scale);
    Vector x(24);
    for (int w = 0; w < 3; ++w) {
      double p = 2e7;
      for (int k = 0; k < 8; ++k) x(w * 8 + k) = (p += inc(rng) * scale);
    }
    CHECK((tw.inverse(tw.forward(x)) - x).cwiseAbs().maxCoeff() <= 1e-10 * 2e7);
    // Any vector in transformed space maps back to increments below delta.
    const Vector z = tw.forward(x) + 3.0 * standard_normal(rng, 24);
    CHECK(tw.max_increment(tw.inverse(z)) < 0.01 * scale);
  }

  const auto meta = t.metadata();
  CHECK(meta["name"] == "increment_log");
  CHECK(meta["unit"] == "MPa");
  CHECK(meta["blocks"][0]["anchor"] == 0);
  CHECK_THROWS_AS(IncrementLogTransform::after_index(2, 5, 0, 0.01, scale), ConfigError);
}

TEST_CASE("apply_transform names the offending member") {
  Ensemble e = scalar_ensemble({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
  e.predictions.resize(3, 2);
  e.predictions << 5.0, 4.0, 5.0, 4.5, 5.0, 6.0;
  const IncrementLogTransform t({{1, 1, 0}}, 0.01, 1.0);
  try {
    apply_transform(e, nullptr, &t);
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    CHECK(std::string(err.what()).find("member 2") != std::string::npos);
  }
  e.status[2] = MemberStatus::failed;
  CHECK_NOTHROW(apply_transform(e, nullptr, &t));
}

TEST_CASE("pipeline with a prediction transform keeps every increment below delta") {
  // Declining series with noise; plain conditioning produces rising steps.
  Rng rng = make_rng(55, 0);
  const Eigen::Index l = 400, times = 6;
  Ensemble e;
  e.params = Matrix::Zero(l, 1);
  e.data.resize(l, 1);
  e.predictions.resize(l, times);
  for (Eigen::Index i = 0; i < l; ++i) {
    const double rate = std::abs(standard_normal(rng, 1)(0)) * 0.05;
    e.data(i, 0) = rate;
    double p = 2e7;
    for (Eigen::Index k = 0; k < times; ++k) e.predictions(i, k) = (p -= 1e6 * (rate + 0.002 * std::abs(standard_normal(rng, 1)(0))));
  }
  e.status.assign(static_cast<std::size_t>(l), MemberStatus::ok);
  const auto t = std::make_shared<IncrementLogTransform>(IncrementLogTransform::after_index(1, times, 1, 0.01, 1e6));
  DsiOptions opts;
  opts.n_samples = 2000;
  opts.prediction_transform = t;
  const auto r = dsi_pipeline(e, Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 1e-4), opts);
  CHECK(r.used == l);
  CHECK(r.discarded == 0);
  for (Eigen::Index i = 0; i < r.samples.rows(); ++i) CHECK(t->max_increment(r.samples.row(i).transpose()) < 0.01 * 1e6);

  opts.prediction_transform.reset();
  const auto plain = dsi_pipeline(e, Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 1e-4), opts);
  long violations = 0;
  for (Eigen::Index i = 0; i < plain.samples.rows(); ++i)
    violations += t->max_increment(plain.samples.row(i).transpose()) >= 0.01 * 1e6;
  CHECK(violations > 0);
}
