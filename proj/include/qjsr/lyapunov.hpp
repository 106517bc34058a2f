#pragma once

// Truncated piecewise-quadratic Lyapunov machinery for a mode family: the
// value V^T(x) = sum_{l<=T} beta^{-2l} max_{|w|=l} ||A_w x||^2, its norm
// p(x) = sqrt(V^T(x)), the norm-equivalence constant with a geometric tail
// estimate, drift checks, and norm-ball boundary meshes.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qjsr/jsr.hpp"
#include "qjsr/rng.hpp"
#include "qjsr/spectral.hpp"
#include "qjsr/switching.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

// ===========================================================================
// Certificate
// ===========================================================================

/// Truncated Lyapunov norm certificate. `valid` records the single-mode
/// contraction check max_i ||A_i||_2 < beta_eps, the condition under which
/// the truncated construction certifies decay at rate beta_eps.
/// c_eps_upper bounds the norm-equivalence constant; its infinite tail is a
/// geometric estimate (flagged), never a certified constant.
struct LyapunovCert {
  ModeFamily family;
  double beta_eps = 0.0;
  int T = 0;

  /// products[l] holds all depth-l word products in lexicographic word
  /// order; products[0] = {I}.
  std::vector<std::vector<Matrix>> products;
  /// stacked[l] is products[l] stacked vertically for fast evaluation.
  std::vector<Matrix> stacked;
  /// max_norms[l] = max_{|w|=l} ||A_w||_2.
  std::vector<double> max_norms;
  /// beta_eps^{-2l} for l = 0..T.
  std::vector<double> weights;

  double c_eps_upper = 1.0;
  bool c_is_estimate = true;  ///< tail of c_eps_upper is a geometric estimate
  double tail_eta = 0.0;      ///< decay rate used by the tail estimate
  double tail_C0 = 1.0;       ///< prefactor used by the tail estimate
  double tail_value = 0.0;    ///< the tail contribution itself

  double max_mode_norm = 0.0;  ///< max_i ||A_i||_2
  double depth1_lower = 0.0;   ///< max_i rho(A_i)
  bool valid = false;          ///< max_mode_norm < beta_eps

  [[nodiscard]] ContractionView view() const { return {beta_eps, valid}; }
};

struct CertOptions {
  long long product_cap = kProductCap;
  /// Build anyway (with valid=false) instead of refusing when beta_eps does
  /// not exceed the depth-1 lower bound; used for diagnosing bad rates.
  bool force = false;
};

/// Build the truncated certificate. Throws ValidationError when beta_eps is
/// outside (0,1), CertRefused when beta_eps <= max_i rho(A_i) (no rate that
/// slow can certify the family) unless opts.force, and CapExceeded when the
/// product cache would exceed the cap.
inline LyapunovCert build_cert(const ModeFamily& family, double beta_eps,
                               int T, CertOptions opts = CertOptions{}) {
  if (!(beta_eps > 0.0 && beta_eps < 1.0)) {
    throw ValidationError("certificate rate beta_eps must lie in (0, 1)");
  }
  if (T < 0) throw ValidationError("certificate depth must be nonnegative");
  const long long n_modes = static_cast<long long>(family.modes.size());
  if (n_modes == 0) throw ValidationError("mode family is empty");

  long long total = 1;
  long long level = 1;
  for (int l = 1; l <= T; ++l) {
    if (level > opts.product_cap / n_modes) {
      throw CapExceeded("certificate product cache exceeds cap at depth " +
                        std::to_string(l));
    }
    level *= n_modes;
    total += level;
    if (total > opts.product_cap) {
      throw CapExceeded("certificate product cache exceeds cap at depth " +
                        std::to_string(l));
    }
  }

  LyapunovCert cert;
  cert.family = family;
  cert.beta_eps = beta_eps;
  cert.T = T;

  const int m = family.dim;
  cert.products.resize(static_cast<std::size_t>(T) + 1);
  cert.products[0] = {Matrix::Identity(m, m)};
  for (int l = 1; l <= T; ++l) {
    const auto& parents = cert.products[static_cast<std::size_t>(l - 1)];
    auto& current = cert.products[static_cast<std::size_t>(l)];
    current.reserve(parents.size() * static_cast<std::size_t>(n_modes));
    for (const auto& parent : parents) {
      for (const auto& mode : family.modes) {
        // The new letter is applied last: left multiplication.
        current.push_back(mode * parent);
      }
    }
  }

  cert.stacked.resize(cert.products.size());
  cert.max_norms.resize(cert.products.size());
  cert.weights.resize(cert.products.size());
  double lower_from_cache = 0.0;
  for (std::size_t l = 0; l < cert.products.size(); ++l) {
    const auto& level_products = cert.products[l];
    Matrix stack(static_cast<Eigen::Index>(level_products.size()) * m, m);
    double level_norm = 0.0;
    double level_rho = 0.0;
    for (std::size_t j = 0; j < level_products.size(); ++j) {
      stack.block(static_cast<Eigen::Index>(j) * m, 0, m, m) =
          level_products[j];
      level_norm = std::max(level_norm, spectral_norm(level_products[j]));
      if (l >= 1) {
        level_rho = std::max(level_rho, spectral_radius(level_products[j]));
      }
    }
    cert.stacked[l] = std::move(stack);
    cert.max_norms[l] = level_norm;
    cert.weights[l] = std::pow(beta_eps, -2.0 * static_cast<double>(l));
    if (l >= 1) {
      lower_from_cache =
          std::max(lower_from_cache,
                   std::pow(level_rho, 1.0 / static_cast<double>(l)));
    }
  }

  cert.max_mode_norm = T >= 1 ? cert.max_norms[1] : 0.0;
  if (T == 0) {
    for (const auto& mode : family.modes) {
      cert.max_mode_norm = std::max(cert.max_mode_norm, spectral_norm(mode));
    }
  }
  double depth1_lower = 0.0;
  for (const auto& mode : family.modes) {
    depth1_lower = std::max(depth1_lower, spectral_radius(mode));
  }
  cert.depth1_lower = depth1_lower;

  if (beta_eps <= depth1_lower && !opts.force) {
    throw CertRefused(
        "certificate refused: rate " + format_full(beta_eps) +
        " does not exceed the depth-1 lower bound " + format_full(depth1_lower));
  }

  cert.valid = cert.max_mode_norm < beta_eps;

  // Truncated part of the norm-equivalence constant.
  double c_truncated = 0.0;
  for (std::size_t l = 0; l < cert.max_norms.size(); ++l) {
    c_truncated += cert.weights[l] * cert.max_norms[l] * cert.max_norms[l];
  }

  // Geometric tail estimate: max norms beyond depth T are modeled as
  // C0 * eta^l with eta the larger of the depth-T normalized max norm and
  // the best cached lower bound, and C0 the largest observed prefactor.
  double tail_eta = lower_from_cache;
  if (T >= 1) {
    tail_eta = std::max(tail_eta, std::pow(cert.max_norms[static_cast<std::size_t>(T)],
                                           1.0 / static_cast<double>(T)));
  } else {
    tail_eta = std::max(tail_eta, cert.max_mode_norm);
  }
  double C0 = 1.0;
  if (tail_eta > 0.0) {
    double eta_pow = 1.0;
    for (std::size_t l = 0; l < cert.max_norms.size(); ++l) {
      if (l > 0) eta_pow *= tail_eta;
      C0 = std::max(C0, cert.max_norms[l] / eta_pow);
    }
  }
  cert.tail_eta = tail_eta;
  cert.tail_C0 = C0;
  const double ratio = tail_eta / beta_eps;
  if (ratio < 1.0) {
    const double r2 = ratio * ratio;
    cert.tail_value =
        C0 * C0 * std::pow(r2, static_cast<double>(T) + 1.0) / (1.0 - r2);
  } else {
    cert.tail_value = std::numeric_limits<double>::infinity();
  }
  cert.c_eps_upper = c_truncated + cert.tail_value;
  cert.c_is_estimate = true;
  return cert;
}

// ===========================================================================
// Evaluation
// ===========================================================================

/// Max over depth-l word products of ||A_w x||^2, evaluated through the
/// stacked cache.
inline double level_max_square(const LyapunovCert& cert, int level,
                               const Vector& x) {
  const int m = cert.family.dim;
  const Matrix& stack = cert.stacked[static_cast<std::size_t>(level)];
  const Vector images = stack * x;
  const auto blocks = stack.rows() / m;
  double best = 0.0;
  for (Eigen::Index j = 0; j < blocks; ++j) {
    best = std::max(best, images.segment(j * m, m).squaredNorm());
  }
  return best;
}

struct LyapValue {
  double value = 0.0;  ///< V^T(x)
  double p = 0.0;      ///< sqrt(V^T(x))
};

/// V^t(x) truncated at depth t <= T.
inline double lyap_value_depth(const LyapunovCert& cert, const Vector& x,
                               int t) {
  double v = 0.0;
  for (int l = 0; l <= t; ++l) {
    v += cert.weights[static_cast<std::size_t>(l)] * level_max_square(cert, l, x);
  }
  return v;
}

inline LyapValue lyap_value(const LyapunovCert& cert, const Vector& x) {
  LyapValue out;
  out.value = lyap_value_depth(cert, x, cert.T);
  out.p = std::sqrt(out.value);
  return out;
}

/// p(x) = sqrt(V^T(x)).
inline double lyap_p(const LyapunovCert& cert, const Vector& x) {
  return std::sqrt(lyap_value_depth(cert, x, cert.T));
}

// ===========================================================================
// Drift checks
// ===========================================================================

/// Result of the per-point certificate checks. The cross-depth inequality
/// (a) holds algebraically for any rate; the discriminating certificate
/// condition is the single-mode norm check recorded in mode_norm_ok.
struct DriftReport {
  bool cross_depth_ok = true;   ///< V^{T-1}(A_i x) <= beta^2 (V^T(x) - |x|^2) per mode
  bool monotone_ok = true;      ///< V^t(x) <= V^{t+1}(x)
  bool homogeneity_ok = true;   ///< V^T(s x) = s^2 V^T(x), relative 1e-12
  bool sandwich_ok = true;      ///< |x|^2 <= V^T(x)
  bool mode_norm_ok = true;     ///< max_i ||A_i||_2 < beta_eps
  double max_cross_depth_defect = 0.0;
  std::vector<std::string> violations;

  [[nodiscard]] bool all_ok() const {
    return cross_depth_ok && monotone_ok && homogeneity_ok && sandwich_ok &&
           mode_norm_ok;
  }
};

inline DriftReport check_drift(const LyapunovCert& cert, const Vector& x) {
  DriftReport report;
  if (cert.T < 1) throw ValidationError("drift check requires depth T >= 1");

  const double vT = lyap_value_depth(cert, x, cert.T);
  const double scale = std::max(1.0, vT);
  const double beta2 = cert.beta_eps * cert.beta_eps;
  const double budget = beta2 * (vT - x.squaredNorm());

  for (std::size_t i = 0; i < cert.family.modes.size(); ++i) {
    const Vector image = cert.family.modes[i] * x;
    const double lhs = lyap_value_depth(cert, image, cert.T - 1);
    const double defect = lhs - budget;
    report.max_cross_depth_defect =
        std::max(report.max_cross_depth_defect, defect);
    if (defect > 1e-10 * scale) {
      report.cross_depth_ok = false;
      report.violations.push_back(
          "cross-depth drift violated at mode " + std::to_string(i + 1) +
          ": defect " + format_full(defect));
    }
  }

  double previous = 0.0;
  for (int t = 0; t <= cert.T; ++t) {
    const double current = lyap_value_depth(cert, x, t);
    if (t > 0 && current < previous - 1e-12 * scale) {
      report.monotone_ok = false;
      report.violations.push_back("monotonicity violated at depth " +
                                  std::to_string(t));
    }
    previous = current;
  }

  for (const double s : {0.5, -2.0}) {
    const double scaled = lyap_value_depth(cert, (s * x).eval(), cert.T);
    const double expected = s * s * vT;
    const double tol = 1e-12 * std::max(1.0, std::abs(expected));
    if (std::abs(scaled - expected) > tol) {
      report.homogeneity_ok = false;
      report.violations.push_back("homogeneity violated at scale " +
                                  format_full(s));
    }
  }

  if (x.squaredNorm() > vT * (1.0 + 1e-12) + 1e-300) {
    report.sandwich_ok = false;
    report.violations.push_back("sandwich violated: |x|^2 exceeds V^T(x)");
  }

  report.mode_norm_ok = cert.max_mode_norm < cert.beta_eps;
  if (!report.mode_norm_ok) {
    report.violations.push_back(
        "single-mode contraction violated: max mode norm " +
        format_full(cert.max_mode_norm) + " >= beta_eps " +
        format_full(cert.beta_eps));
  }
  return report;
}

/// Stochastic-mode drift via hull weights and convexity:
/// V^{T-1}(A_mu x) <= beta^2 (V^T(x) - |x|^2) with A_mu the hull mode.
struct StochasticDriftReport {
  bool ok = true;
  double defect = 0.0;  ///< lhs - budget (positive means violated)
  double hull_weight_sum = 0.0;
};

inline StochasticDriftReport check_stochastic_mode_drift(
    const LyapunovCert& cert, const StochasticPolicy& mu, const Vector& x) {
  if (cert.T < 1) throw ValidationError("drift check requires depth T >= 1");

  // Hull weights over enumerate order, computed from the family shape.
  const auto policies =
      detail::enumerate_policy_tuples(cert.family.n_states,
                                      cert.family.n_actions);
  StochasticDriftReport report;
  Matrix hull = Matrix::Zero(cert.family.dim, cert.family.dim);
  for (std::size_t i = 0; i < policies.size(); ++i) {
    double w = 1.0;
    for (int s = 0; s < cert.family.n_states; ++s) {
      w *= mu.prob(s, policies[i][static_cast<std::size_t>(s)]);
    }
    hull += w * cert.family.modes[i];
    report.hull_weight_sum += w;
  }

  const double vT = lyap_value_depth(cert, x, cert.T);
  const double scale = std::max(1.0, vT);
  const double budget =
      cert.beta_eps * cert.beta_eps * (vT - x.squaredNorm());
  const double lhs = lyap_value_depth(cert, (hull * x).eval(), cert.T - 1);
  report.defect = lhs - budget;
  report.ok = report.defect <= 1e-10 * scale;
  return report;
}

/// Contraction transfer across truncation depths: for the family's own map,
/// p_{T-1}(T(theta) - T(theta_bar)) <= beta_eps p_T(theta - theta_bar).
struct TransferReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = true;
};

inline TransferReport transfer_check(const LyapunovCert& cert,
                                     const Problem& p, const Vector& theta,
                                     const Vector& theta_bar) {
  if (cert.T < 1) throw ValidationError("transfer check requires depth T >= 1");
  TransferReport report;
  const Vector diff =
      step_map(p, theta, cert.family.alpha, cert.family.eta) -
      step_map(p, theta_bar, cert.family.alpha, cert.family.eta);
  report.lhs = std::sqrt(lyap_value_depth(cert, diff, cert.T - 1));
  const double p_full = lyap_p(cert, theta - theta_bar);
  report.rhs = cert.beta_eps * p_full;
  report.ok = report.lhs <= report.rhs + 1e-10 * std::max(1.0, p_full);
  return report;
}

// ===========================================================================
// Norm-ball meshes
// ===========================================================================

/// Boundary points of the unit p-ball. For dim 3 a latitude-longitude grid
/// with resolution^2 directions; for dim 2 resolution^2 uniform angles; for
/// higher dimensions only the seeded radial fallback is available (enable
/// with `radial`), emitting resolution^2 pseudo-random directions.
inline std::vector<Vector> normball_mesh(const LyapunovCert& cert,
                                         int resolution, bool radial = false) {
  if (resolution < 1) throw ValidationError("mesh resolution must be positive");
  const int m = cert.family.dim;
  std::vector<Vector> points;
  const long long count =
      static_cast<long long>(resolution) * static_cast<long long>(resolution);
  points.reserve(static_cast<std::size_t>(count));

  auto emit = [&](const Vector& direction) {
    const double value = lyap_p(cert, direction);
    if (value > 0.0) points.push_back(direction / value);
  };

  if (radial) {
    // Deterministic pseudo-random directions on the unit sphere via
    // counter-based Gaussian draws (works in any dimension).
    const CounterRng rng{/*seed=*/0x6d657368ull, /*stream=*/0ull};
    for (long long i = 0; i < count; ++i) {
      Vector dir(m);
      for (int j = 0; j < m; ++j) {
        dir(j) = rng.gaussian(static_cast<std::uint64_t>(i),
                              static_cast<std::uint64_t>(j));
      }
      const double norm = dir.norm();
      if (norm > 0.0) emit(dir / norm);
    }
    return points;
  }

  if (m == 3) {
    const double pi = std::acos(-1.0);
    for (int i = 0; i < resolution; ++i) {
      const double polar = pi * (static_cast<double>(i) + 0.5) /
                           static_cast<double>(resolution);
      for (int j = 0; j < resolution; ++j) {
        const double azimuth =
            2.0 * pi * static_cast<double>(j) / static_cast<double>(resolution);
        Vector dir(3);
        dir << std::sin(polar) * std::cos(azimuth),
            std::sin(polar) * std::sin(azimuth), std::cos(polar);
        emit(dir);
      }
    }
    return points;
  }
  if (m == 2) {
    const double pi = std::acos(-1.0);
    for (long long j = 0; j < count; ++j) {
      const double angle =
          2.0 * pi * static_cast<double>(j) / static_cast<double>(count);
      Vector dir(2);
      dir << std::cos(angle), std::sin(angle);
      emit(dir);
    }
    return points;
  }
  throw ValidationError(
      "mesh output supports dimension 2 or 3; use the radial fallback for "
      "dimension " + std::to_string(m));
}

}  // namespace qjsr
