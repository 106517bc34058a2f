#include <catch2/catch_amalgamated.hpp>

#include "qjsr/bellman.hpp"
#include "qjsr/presets.hpp"
#include "qjsr/switching.hpp"
#include "support.hpp"

using namespace qjsr;

TEST_CASE("two-point linearization is a valid stochastic policy that represents the max difference") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Problem p = qjsr_test::random_problem(seed);
    const Vector theta = qjsr_test::random_theta(2 * seed, p.feature_dim);
    const Vector theta_bar = qjsr_test::random_theta(2 * seed + 1, p.feature_dim);
    const StochasticPolicy mu = linearize_max(p, theta, theta_bar);

    REQUIRE(mu.prob.rows() == p.n_states);
    REQUIRE(mu.prob.cols() == p.n_actions);
    const Vector v = value_max(p, theta).v;
    const Vector v_bar = value_max(p, theta_bar).v;
    const Vector e = p.features * (theta - theta_bar);
    for (int s = 0; s < p.n_states; ++s) {
      REQUIRE(mu.prob.row(s).minCoeff() >= 0.0);
      REQUIRE(mu.prob.row(s).sum() == Catch::Approx(1.0).margin(1e-12));
      // The defining identity: the mixed selector reproduces the difference
      // of maxima as a convex combination of feature differences.
      double mixed = 0.0;
      for (int a = 0; a < p.n_actions; ++a) {
        mixed += mu.prob(s, a) * e(p.index_of(s, a));
      }
      const double scale = 1.0 + std::abs(v(s)) + std::abs(v_bar(s));
      REQUIRE(std::abs(mixed - (v(s) - v_bar(s))) <= 1e-12 * scale);
      // Mass sits only on the extreme actions of the difference row.
      int support = 0;
      for (int a = 0; a < p.n_actions; ++a) {
        if (mu.prob(s, a) > 0.0) ++support;
      }
      REQUIRE(support <= 2);
    }
  }
}

TEST_CASE("linearization at equal arguments is deterministic") {
  const Problem p = qjsr_test::random_problem(7);
  const Vector theta = qjsr_test::random_theta(99, p.feature_dim);
  const StochasticPolicy mu = linearize_max(p, theta, theta);
  REQUIRE(mu.deterministic(0.0));
}

TEST_CASE("mode matrices match the scalar-loop oracle") {
  for (std::uint64_t seed = 40; seed < 70; ++seed) {
    qjsr_test::GenOptions opt;
    opt.with_eta = (seed % 2) == 0;
    const Problem p = qjsr_test::random_problem(seed, opt);
    const auto pols = enumerate_policies(p);
    for (const auto& pol : pols) {
      const Matrix A = mode_matrix(p, pol, p.alpha, p.eta);
      const Matrix ref = qjsr_test::oracle_mode(p, pol, p.alpha, p.eta);
      REQUIRE((A - ref).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("pinned mode scalars for the ridge example") {
  const Problem p = preset_problem("example-eta20");
  const DeterministicPolicy pol{0, 0};
  REQUIRE(mode_matrix(p, pol, p.alpha, 0.0)(0, 0) ==
          Catch::Approx(1.62).epsilon(1e-12));
  REQUIRE(mode_matrix(p, pol, p.alpha, 20.0)(0, 0) ==
          Catch::Approx(-0.38).epsilon(1e-12));
}

TEST_CASE("build_family enumerates modes in policy order") {
  const Problem p = preset_problem("example-3d");
  const ModeFamily family = build_family(p);
  REQUIRE(family.size() == 8);
  REQUIRE(family.alpha == p.alpha);
  REQUIRE(family.eta == p.eta);
  REQUIRE(family.kind == FamilyKind::direct);
  const auto pols = enumerate_policies(p);
  for (std::size_t i = 0; i < pols.size(); ++i) {
    const Matrix A = mode_matrix(p, pols[i], p.alpha, p.eta);
    REQUIRE((family.modes[i] - A).cwiseAbs().maxCoeff() == 0.0);
  }

  qjsr_test::GenOptions opt;
  opt.with_eta = true;
  Problem q = qjsr_test::random_problem(3, opt);
  if (q.eta == 0.0) q.eta = 0.5;
  REQUIRE(build_family(q).kind == FamilyKind::regularized);
}

TEST_CASE("hull weights are the policy tuple product weights") {
  for (std::uint64_t seed = 70; seed < 90; ++seed) {
    const Problem p = qjsr_test::random_problem(seed);
    // Random stochastic policy built from two deterministic ones.
    const auto pols = enumerate_policies(p);
    StochasticPolicy mu;
    mu.prob = Matrix::Zero(p.n_states, p.n_actions);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    for (int s = 0; s < p.n_states; ++s) {
      const double w = unif(rng);
      mu.prob(s, pols.front()[static_cast<std::size_t>(s)]) += w;
      mu.prob(s, pols.back()[static_cast<std::size_t>(s)]) += 1.0 - w;
    }

    const Vector weights = hull_weights(p, mu);
    REQUIRE(weights.size() == static_cast<Eigen::Index>(pols.size()));
    REQUIRE(weights.minCoeff() >= 0.0);
    REQUIRE(weights.sum() == Catch::Approx(1.0).margin(1e-12));
    for (std::size_t k = 0; k < pols.size(); ++k) {
      double w = 1.0;
      for (int s = 0; s < p.n_states; ++s) {
        w *= mu.prob(s, pols[k][static_cast<std::size_t>(s)]);
      }
      REQUIRE(weights(static_cast<Eigen::Index>(k)) ==
              Catch::Approx(w).margin(1e-13));
    }
  }
}

TEST_CASE("hull mode equals the weighted sum of vertex modes and the direct mixed mode") {
  for (std::uint64_t seed = 90; seed < 110; ++seed) {
    qjsr_test::GenOptions opt;
    opt.with_eta = (seed % 2) == 0;
    const Problem p = qjsr_test::random_problem(seed, opt);
    const ModeFamily family = build_family(p);
    const auto pols = enumerate_policies(p);

    const Vector theta = qjsr_test::random_theta(3 * seed, p.feature_dim);
    const Vector theta_bar = qjsr_test::random_theta(3 * seed + 1, p.feature_dim);
    const StochasticPolicy mu = linearize_max(p, theta, theta_bar);

    const Matrix hull = hull_mode(p, family, mu);
    const Vector weights = hull_weights(p, mu);
    Matrix sum = Matrix::Zero(p.feature_dim, p.feature_dim);
    for (std::size_t k = 0; k < pols.size(); ++k) {
      sum += weights(static_cast<Eigen::Index>(k)) * family.modes[k];
    }
    REQUIRE((hull - sum).cwiseAbs().maxCoeff() <= 1e-11);

    const Matrix direct = mode_matrix(p, mu, p.alpha, p.eta);
    REQUIRE((hull - direct).cwiseAbs().maxCoeff() <= 1e-11);
  }
}

TEST_CASE("pairwise mode represents the step-map difference exactly") {
  for (std::uint64_t seed = 110; seed < 140; ++seed) {
    qjsr_test::GenOptions opt;
    opt.with_eta = (seed % 2) == 0;
    const Problem p = qjsr_test::random_problem(seed, opt);
    const Vector theta = qjsr_test::random_theta(5 * seed, p.feature_dim);
    const Vector theta_bar = qjsr_test::random_theta(5 * seed + 1, p.feature_dim);

    const PairwiseWitness witness = pairwise_mode(p, theta, theta_bar);
    const Vector lhs = step_map(p, theta, p.alpha, p.eta) -
                       step_map(p, theta_bar, p.alpha, p.eta);
    const Vector rhs = witness.mode * (theta - theta_bar);
    const double scale = 1.0 + lhs.cwiseAbs().maxCoeff();
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-11 * scale);
    REQUIRE(witness.residual <= 1e-11 * scale);
  }
}

TEST_CASE("alpha-zero override yields identity modes") {
  const Problem p = preset_problem("elq-converges");
  const ModeFamily family = build_family(p, 0.0, 0.0);
  for (const auto& mode : family.modes) {
    REQUIRE((mode - Matrix::Identity(p.feature_dim, p.feature_dim))
                .cwiseAbs()
                .maxCoeff() == 0.0);
  }
}
