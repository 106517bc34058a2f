#include <catch2/catch_amalgamated.hpp>

#include "qjsr/bellman.hpp"
#include "qjsr/presets.hpp"
#include "support.hpp"

using namespace qjsr;

TEST_CASE("projection cache matrices match scalar-loop assembly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    qjsr_test::GenOptions opt;
    opt.with_eta = (seed % 2) == 0;
    const Problem p = qjsr_test::random_problem(seed, opt);
    const ProjectionCache cache = build_projection_cache(p);
    const int m = p.feature_dim;
    const int n = p.pair_count();

    Matrix M = Matrix::Zero(m, m);
    Matrix K = Matrix::Zero(m, n);
    Matrix N = Matrix::Zero(m, p.n_states);
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < m; ++r) {
        K(r, i) = p.features(i, r) * p.sampling(i);
        for (int c = 0; c < m; ++c) {
          M(r, c) += p.sampling(i) * p.features(i, r) * p.features(i, c);
        }
        for (int sp = 0; sp < p.n_states; ++sp) {
          N(r, sp) += p.sampling(i) * p.features(i, r) * p.transitions(i, sp);
        }
      }
    }
    REQUIRE((cache.M - M).cwiseAbs().maxCoeff() <= 1e-14);
    REQUIRE((cache.K - K).cwiseAbs().maxCoeff() <= 1e-14);
    REQUIRE((cache.N - N).cwiseAbs().maxCoeff() <= 1e-14);
    REQUIRE((cache.M_eta - (M + p.eta * Matrix::Identity(m, m)))
                .cwiseAbs()
                .maxCoeff() <= 1e-14);

    // Projection identities: Pi_D is idempotent and D-self-adjoint.
    const Matrix D = p.sampling.asDiagonal();
    REQUIRE((cache.Pi_D * cache.Pi_D - cache.Pi_D).cwiseAbs().maxCoeff() <=
            1e-10);
    REQUIRE((D * cache.Pi_D - cache.Pi_D.transpose() * D)
                .cwiseAbs()
                .maxCoeff() <= 1e-10);
    // Pi_D fixes the feature range.
    REQUIRE((cache.Pi_D * p.features - p.features).cwiseAbs().maxCoeff() <=
            1e-10);
  }
}

TEST_CASE("value_max and bellman_target match scalar loops") {
  for (std::uint64_t seed = 20; seed < 40; ++seed) {
    const Problem p = qjsr_test::random_problem(seed);
    const Vector theta = qjsr_test::random_theta(seed, p.feature_dim);
    const ValueMax vm = value_max(p, theta);
    REQUIRE(vm.v.size() == p.n_states);
    for (int s = 0; s < p.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = -1;
      for (int a = 0; a < p.n_actions; ++a) {
        const double q = p.features.row(p.index_of(s, a)).dot(theta);
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      REQUIRE(vm.v(s) == Catch::Approx(best).margin(1e-13));
      REQUIRE(vm.argmax[static_cast<std::size_t>(s)] == best_a);
    }

    const Vector target = bellman_target(p, theta);
    const ExpectedReward er = expected_reward(p);
    for (int i = 0; i < p.pair_count(); ++i) {
      double t = er.R(i);
      for (int sp = 0; sp < p.n_states; ++sp) {
        t += p.gamma * p.transitions(i, sp) * vm.v(sp);
      }
      REQUIRE(target(i) == Catch::Approx(t).margin(1e-13));
    }
  }
}

TEST_CASE("residual_g matches the scalar-loop oracle") {
  for (std::uint64_t seed = 40; seed < 60; ++seed) {
    const Problem p = qjsr_test::random_problem(seed);
    const Vector theta = qjsr_test::random_theta(seed + 1, p.feature_dim);
    const Vector g = residual_g(p, theta);
    const Vector ref = qjsr_test::oracle_g(p, theta);
    const double scale = 1.0 + ref.cwiseAbs().maxCoeff();
    REQUIRE((g - ref).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  }
}

TEST_CASE("step maps agree with their definitions") {
  for (std::uint64_t seed = 60; seed < 75; ++seed) {
    qjsr_test::GenOptions opt;
    opt.with_eta = true;
    const Problem p = qjsr_test::random_problem(seed, opt);
    const ProjectionCache cache = build_projection_cache(p);
    const Vector theta = qjsr_test::random_theta(seed + 2, p.feature_dim);
    const Vector g = residual_g(p, theta);

    REQUIRE((step_map(p, theta, p.alpha, 0.0) - (theta + p.alpha * g))
                .cwiseAbs()
                .maxCoeff() <= 1e-13);
    REQUIRE((step_dlq(p, theta) - (theta + p.alpha * g)).cwiseAbs().maxCoeff() <=
            1e-13);
    REQUIRE((step_reg_dlq(p, theta) -
             (theta + p.alpha * (g - p.eta * theta)))
                .cwiseAbs()
                .maxCoeff() <= 1e-13);

    // PQVI: theta' solves M theta' = K * target; RPVI: (M + eta I) theta' = K * target.
    const Vector target = bellman_target(p, theta);
    const Vector pqvi = step_pqvi(p, cache, theta);
    REQUIRE((cache.M * pqvi - cache.K * target).cwiseAbs().maxCoeff() <= 1e-10);
    const Vector rpvi = step_rpvi(p, cache, theta);
    REQUIRE((cache.M_eta * rpvi - cache.K * target).cwiseAbs().maxCoeff() <=
            1e-10);
  }
}

TEST_CASE("projected equation residual vanishes exactly at a fixed point") {
  // elq-converges has DLQ coefficient zero: one step reaches theta* = 0.
  const Problem p = preset_problem("elq-converges");
  const ProjectionCache cache = build_projection_cache(p);
  REQUIRE(projected_equation_residual(p, cache, Vector::Zero(1)) <= 1e-14);
  const Vector theta = (Vector(1) << 3.0).finished();
  REQUIRE(projected_equation_residual(p, cache, theta) > 0.1);
}

TEST_CASE("pinned scalar multipliers: convergence duality pair") {
  // First pair: DLQ coefficient exactly 0, projected iteration multiplier
  // -8.01/1.99.
  const Problem elq = preset_problem("elq-converges");
  const ProjectionCache elq_cache = build_projection_cache(elq);
  const Vector one = (Vector(1) << 1.0).finished();
  REQUIRE(std::abs(step_dlq(elq, one)(0)) <= 1e-14);
  REQUIRE(step_pqvi(elq, elq_cache, one)(0) ==
          Catch::Approx(-8.01 / 1.99).epsilon(1e-12));

  // Second pair: DLQ multiplier -4, projected iteration multiplier 0.9.
  const Problem pq = preset_problem("pqvi-converges");
  const ProjectionCache pq_cache = build_projection_cache(pq);
  REQUIRE(step_dlq(pq, one)(0) == Catch::Approx(-4.0).epsilon(1e-12));
  REQUIRE(step_pqvi(pq, pq_cache, one)(0) == Catch::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("pinned scalar multipliers: ridge variants") {
  const Vector one = (Vector(1) << 1.0).finished();

  const Problem reg_dlq = preset_problem("reg-dlq-converges");  // elq + eta=1
  const ProjectionCache c1 = build_projection_cache(reg_dlq);
  REQUIRE(step_reg_dlq(reg_dlq, one)(0) == Catch::Approx(-0.1).epsilon(1e-12));
  REQUIRE(step_rpvi(reg_dlq, c1, one)(0) ==
          Catch::Approx(-8.01 / 2.99).epsilon(1e-12));

  const Problem reg_pq = preset_problem("reg-rpvi-converges");  // pqvi + eta=1
  const ProjectionCache c2 = build_projection_cache(reg_pq);
  REQUIRE(step_reg_dlq(reg_pq, one)(0) == Catch::Approx(-4.5).epsilon(1e-12));
  REQUIRE(step_rpvi(reg_pq, c2, one)(0) ==
          Catch::Approx(90.0 / 101.0).epsilon(1e-12));
}

TEST_CASE("rpvi sup-norm factor is gamma times the weighted row sum") {
  for (std::uint64_t seed = 80; seed < 90; ++seed) {
    qjsr_test::GenOptions opt;
    opt.with_eta = true;
    const Problem p = qjsr_test::random_problem(seed, opt);
    const ProjectionCache cache = build_projection_cache(p);
    const SupContraction sup = rpvi_sup_contraction(p);
    const Matrix GP = cache.Gamma_eta * p.transitions;
    const double row = GP.cwiseAbs().rowwise().sum().maxCoeff();
    REQUIRE(sup.value == Catch::Approx(p.gamma * row).epsilon(1e-12));
    REQUIRE(sup.contraction == (sup.value < 1.0));
  }
}

TEST_CASE("fixed-point solve converges and certifies with a contraction view") {
  const Problem p = preset_problem("elq-converges");
  const FixedPointReport plain =
      solve_fixed_point(p, MapKind::dlq, 1e-12, 1000);
  REQUIRE(plain.status == SolveStatus::converged);
  REQUIRE(plain.theta_star.cwiseAbs().maxCoeff() <= 1e-12);
  REQUIRE_FALSE(plain.certified);

  ContractionView view;
  view.beta_eps = 0.5;
  view.valid = true;
  const FixedPointReport cert =
      solve_fixed_point(p, MapKind::dlq, 1e-12, 1000, view);
  REQUIRE(cert.status == SolveStatus::converged);
  REQUIRE(cert.certified);
}

TEST_CASE("fixed-point solve reports divergence with the first bad index") {
  // pqvi-converges under the direct map multiplies theta by -4 each step.
  const Problem p = preset_problem("pqvi-converges");
  const Vector start = (Vector(1) << 1.0).finished();
  const FixedPointReport report =
      solve_fixed_point(p, MapKind::dlq, 1e-12, 10000, std::nullopt, start);
  REQUIRE(report.status == SolveStatus::diverged);
  REQUIRE(report.divergence_index > 0);
  REQUIRE(std::isnan(report.final_residual));
}

TEST_CASE("fixed-point solve reports non-convergence at the iteration cap") {
  Problem p = preset_problem("example-3d");
  // Slowest mode contracts at roughly 0.97 per step: convergent, but far
  // from the tolerance after 3 iterations.
  const Vector start = Vector::Ones(3);
  const FixedPointReport report =
      solve_fixed_point(p, MapKind::dlq, 1e-12, 3, std::nullopt, start);
  REQUIRE(report.status == SolveStatus::non_converged);
  REQUIRE(report.iterations == 3);
}

TEST_CASE("solved fixed points satisfy the projected equation on random problems") {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    qjsr_test::GenOptions opt;
    opt.with_eta = true;
    Problem p = qjsr_test::random_problem(seed, opt);
    p.alpha = 0.05;  // small step keeps the mean map contractive more often
    const FixedPointReport report =
        solve_fixed_point(p, MapKind::reg_dlq, 1e-13, 200000);
    if (report.status != SolveStatus::converged) continue;
    // At theta*: g(theta*) - eta theta* = 0.
    const Vector g = residual_g(p, report.theta_star);
    REQUIRE((g - p.eta * report.theta_star).cwiseAbs().maxCoeff() <= 1e-9);
  }
}
