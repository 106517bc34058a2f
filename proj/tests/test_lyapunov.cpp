#include <catch2/catch_amalgamated.hpp>

#include "qjsr/lyapunov.hpp"
#include "qjsr/presets.hpp"
#include "qjsr/rng.hpp"
#include "support.hpp"

using namespace qjsr;

namespace {

/// Synthetic family of `n` random modes rescaled to the given max norm.
ModeFamily synthetic_family(std::uint64_t seed, int dim, int n,
                            double target_norm) {
  std::mt19937_64 rng(seed ^ 0x517cc1b727220a95ull);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  ModeFamily family;
  family.alpha = 0.1;
  family.eta = 0.0;
  family.gamma = 0.9;
  family.kind = FamilyKind::direct;
  family.n_states = 1;
  family.n_actions = n;
  family.dim = dim;
  for (int i = 0; i < n; ++i) {
    Matrix a(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) a(r, c) = sym(rng);
    }
    family.modes.push_back(target_norm * a / spectral_norm(a));
  }
  return family;
}

}  // namespace

TEST_CASE("scalar certificate matches the closed form") {
  ModeFamily family = synthetic_family(1, 1, 1, 0.8);
  family.modes[0](0, 0) = 0.8;
  const double beta = 0.9;
  const int T = 3;
  const LyapunovCert cert = build_cert(family, beta, T);

  REQUIRE(cert.valid);
  REQUIRE(cert.max_mode_norm == Catch::Approx(0.8).margin(1e-15));
  REQUIRE(cert.depth1_lower == Catch::Approx(0.8).margin(1e-15));
  for (int l = 0; l <= T; ++l) {
    REQUIRE(cert.max_norms[static_cast<std::size_t>(l)] ==
            Catch::Approx(std::pow(0.8, l)).epsilon(1e-13));
    REQUIRE(cert.weights[static_cast<std::size_t>(l)] ==
            Catch::Approx(std::pow(beta, -2.0 * l)).epsilon(1e-13));
  }
  // c = sum_l (a/beta)^{2l} + tail with eta_t = a, C0 = 1.
  double truncated = 0.0;
  const double q = (0.8 / beta) * (0.8 / beta);
  for (int l = 0; l <= T; ++l) truncated += std::pow(q, l);
  const double tail = std::pow(q, T + 1) / (1.0 - q);
  REQUIRE(cert.tail_eta == Catch::Approx(0.8).epsilon(1e-12));
  REQUIRE(cert.tail_C0 == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(cert.tail_value == Catch::Approx(tail).epsilon(1e-12));
  REQUIRE(cert.c_eps_upper == Catch::Approx(truncated + tail).epsilon(1e-12));
  REQUIRE(cert.c_is_estimate);

  // V^T(x) = x^2 sum_l q^l, p = |x| sqrt(sum).
  const Vector x = (Vector(1) << -2.0).finished();
  REQUIRE(lyap_value(cert, x).value ==
          Catch::Approx(4.0 * truncated).epsilon(1e-12));
  REQUIRE(lyap_p(cert, x) ==
          Catch::Approx(2.0 * std::sqrt(truncated)).epsilon(1e-12));
}

TEST_CASE("certificate values match the brute-force truncated sum") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const int dim = 1 + static_cast<int>(seed % 3);
    const int n = 1 + static_cast<int>(seed % 2);
    const ModeFamily family = synthetic_family(seed, dim, n, 0.7);
    const LyapunovCert cert = build_cert(family, 0.85, 3);
    REQUIRE(cert.valid);
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = qjsr_test::random_theta(97 * seed + trial, dim);
      const double ref = qjsr_test::oracle_lyap_value(family.modes, 0.85, 3, x);
      REQUIRE(lyap_value(cert, x).value ==
              Catch::Approx(ref).epsilon(1e-12).margin(1e-14));
      REQUIRE(lyap_value_depth(cert, x, 0) ==
              Catch::Approx(x.squaredNorm()).epsilon(1e-13));
    }
  }
}

TEST_CASE("build_cert rejects invalid inputs with typed errors") {
  const ModeFamily family = synthetic_family(5, 2, 2, 0.7);
  REQUIRE_THROWS_AS(build_cert(family, 0.0, 2), ValidationError);
  REQUIRE_THROWS_AS(build_cert(family, 1.0, 2), ValidationError);
  REQUIRE_THROWS_AS(build_cert(family, -0.5, 2), ValidationError);
  REQUIRE_THROWS_AS(build_cert(family, 0.9, -1), ValidationError);

  ModeFamily empty = family;
  empty.modes.clear();
  REQUIRE_THROWS_AS(build_cert(empty, 0.9, 2), ValidationError);

  CertOptions tiny;
  tiny.product_cap = 3;
  REQUIRE_THROWS_AS(build_cert(family, 0.9, 4, tiny), CapExceeded);
}

TEST_CASE("build_cert refuses rates at or below the depth-1 lower bound unless forced") {
  const Problem p = preset_problem("example-jsr-gt1");
  const ModeFamily family = build_family(p);
  REQUIRE_THROWS_AS(build_cert(family, 0.9, 2), CertRefused);

  CertOptions force;
  force.force = true;
  const LyapunovCert cert = build_cert(family, 0.9, 2, force);
  REQUIRE_FALSE(cert.valid);
  REQUIRE(cert.max_mode_norm > cert.beta_eps);
  // Even a forced certificate satisfies the sandwich by construction.
  const Vector x = (Vector(1) << 1.5).finished();
  REQUIRE(lyap_p(cert, x) >= x.norm());
  REQUIRE(lyap_p(cert, x) <= std::sqrt(cert.c_eps_upper) * x.norm() + 1e-12);
  // The drift report singles out the failed norm condition.
  const DriftReport report = check_drift(cert, x);
  REQUIRE_FALSE(report.mode_norm_ok);
}

TEST_CASE("accepted certificates contract every mode in the certificate norm") {
  for (std::uint64_t seed = 20; seed < 32; ++seed) {
    const int dim = 1 + static_cast<int>(seed % 3);
    const ModeFamily family = synthetic_family(seed, dim, 2, 0.8);
    const double beta = 0.9;
    const LyapunovCert cert = build_cert(family, beta, 3);
    REQUIRE(cert.valid);
    for (int trial = 0; trial < 10; ++trial) {
      const Vector x = qjsr_test::random_theta(31 * seed + trial, dim);
      const double px = lyap_p(cert, x);
      for (const auto& mode : family.modes) {
        REQUIRE(lyap_p(cert, mode * x) <= beta * px * (1.0 + 1e-12) + 1e-15);
      }
    }
  }
}

TEST_CASE("drift report passes on accepted certificates at random points") {
  const Problem p = preset_problem("example-3d");
  const LyapunovCert cert = build_cert(build_family(p), 0.975, 4);
  REQUIRE(cert.valid);
  const CounterRng rng{2024, 0};
  for (int i = 0; i < 50; ++i) {
    Vector x(3);
    for (int j = 0; j < 3; ++j) {
      x(j) = rng.gaussian(static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(j));
    }
    const DriftReport report = check_drift(cert, x);
    REQUIRE(report.all_ok());
    REQUIRE(report.violations.empty());
  }
}

TEST_CASE("drift check requires depth at least one") {
  const ModeFamily family = synthetic_family(3, 2, 2, 0.7);
  const LyapunovCert cert = build_cert(family, 0.9, 0);
  const Vector x = qjsr_test::random_theta(8, 2);
  REQUIRE_THROWS_AS(check_drift(cert, x), ValidationError);
}

TEST_CASE("stochastic hull modes satisfy the drift inequality") {
  const Problem p = preset_problem("example-3d");
  const LyapunovCert cert = build_cert(build_family(p), 0.975, 4);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    StochasticPolicy mu;
    mu.prob.resize(p.n_states, p.n_actions);
    for (int s = 0; s < p.n_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < p.n_actions; ++a) {
        mu.prob(s, a) = 0.05 + unif(rng);
        total += mu.prob(s, a);
      }
      mu.prob.row(s) /= total;
    }
    const Vector x = qjsr_test::random_theta(1000 + trial, p.feature_dim);
    const StochasticDriftReport report =
        check_stochastic_mode_drift(cert, mu, x);
    REQUIRE(report.ok);
    REQUIRE(report.hull_weight_sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("transfer check bounds the step-map difference in the certificate norm") {
  const Problem p = preset_problem("example-3d");
  const LyapunovCert cert = build_cert(build_family(p), 0.975, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector theta = qjsr_test::random_theta(2000 + trial, p.feature_dim);
    const Vector theta_bar = qjsr_test::random_theta(3000 + trial, p.feature_dim);
    const TransferReport report = transfer_check(cert, p, theta, theta_bar);
    REQUIRE(report.ok);
    REQUIRE(report.lhs <= report.rhs + 1e-9);
  }
}

TEST_CASE("normball mesh points lie exactly on the unit sphere of p") {
  const Problem p = preset_problem("example-3d");
  const LyapunovCert cert = build_cert(build_family(p), 0.975, 4);

  SECTION("lat-long mesh in dimension 3") {
    const auto points = normball_mesh(cert, 8);
    REQUIRE(points.size() == 64);
    for (const auto& x : points) {
      REQUIRE(lyap_p(cert, x) == Catch::Approx(1.0).margin(1e-10));
    }
  }
  SECTION("radial mesh works in dimension 3 too and is deterministic") {
    const auto a = normball_mesh(cert, 5, true);
    const auto b = normball_mesh(cert, 5, true);
    REQUIRE(a.size() == 25);
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE((a[i] - b[i]).cwiseAbs().maxCoeff() == 0.0);
      REQUIRE(lyap_p(cert, a[i]) == Catch::Approx(1.0).margin(1e-10));
    }
  }
}

TEST_CASE("normball mesh in dimension 2 and the radial fallback beyond 3") {
  const ModeFamily family2 = synthetic_family(41, 2, 2, 0.7);
  const LyapunovCert cert2 = build_cert(family2, 0.9, 3);
  const auto ring = normball_mesh(cert2, 16);
  REQUIRE(ring.size() == 256);
  for (const auto& x : ring) {
    REQUIRE(lyap_p(cert2, x) == Catch::Approx(1.0).margin(1e-10));
  }

  const ModeFamily family5 = synthetic_family(42, 5, 2, 0.7);
  const LyapunovCert cert5 = build_cert(family5, 0.9, 2);
  REQUIRE_THROWS_AS(normball_mesh(cert5, 8), ValidationError);
  const auto cloud = normball_mesh(cert5, 8, true);
  REQUIRE(cloud.size() == 64);
  for (const auto& x : cloud) {
    REQUIRE(lyap_p(cert5, x) == Catch::Approx(1.0).margin(1e-10));
  }
}

TEST_CASE("certificate norm is monotone in truncation depth") {
  const Problem p = preset_problem("example-3d");
  const ModeFamily family = build_family(p);
  const LyapunovCert shallow = build_cert(family, 0.975, 2);
  const LyapunovCert deep = build_cert(family, 0.975, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = qjsr_test::random_theta(4000 + trial, p.feature_dim);
    REQUIRE(lyap_p(shallow, x) <= lyap_p(deep, x) + 1e-12);
  }
}
