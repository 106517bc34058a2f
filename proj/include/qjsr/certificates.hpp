#pragma once

// Closed-form error envelopes for deterministic, i.i.d., and Markovian
// linear Q-learning in the certificate norm, the Euclidean norm, and the
// Q-value sup norm, plus exhaustive finite-sum verification of the
// noise-growth inequalities that drive the stochastic bounds.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "qjsr/bellman.hpp"
#include "qjsr/lyapunov.hpp"
#include "qjsr/mdp.hpp"
#include "qjsr/switching.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

// ===========================================================================
// Bound inputs
// ===========================================================================

/// Scalar constants entering the error envelopes. sqrt_C comes from the
/// certificate's norm-equivalence constant; because that constant's tail is
/// a geometric estimate, every envelope built from these inputs inherits
/// the `estimate` flag.
struct BoundInputs {
  double beta_eps = 0.0;
  double sqrt_C = 1.0;
  double phi_max = 0.0;        ///< max row 2-norm of the feature matrix
  double R_max = 0.0;          ///< max |r(s,a,s')|
  double gamma = 0.0;
  double alpha = 0.0;
  Vector theta_star;
  double Q_star_inf = 0.0;     ///< ||Phi theta*||_inf
  double delta_star_inf = 0.0; ///< ||R + gamma P V_{theta*} - Phi theta*||_inf
  double Phi_2 = 0.0;          ///< spectral norm of the feature matrix
  bool estimate = true;        ///< sqrt_C carries a tail estimate
};

inline BoundInputs make_bound_inputs(const Problem& p,
                                     const LyapunovCert& cert,
                                     const Vector& theta_star) {
  BoundInputs in;
  in.beta_eps = cert.beta_eps;
  in.sqrt_C = std::sqrt(cert.c_eps_upper);
  const FeatureRadius radius = feature_radius(p);
  in.phi_max = radius.phi_max;
  in.Phi_2 = radius.phi_2;
  in.R_max = expected_reward(p).r_max;
  in.gamma = p.gamma;
  in.alpha = p.alpha;
  in.theta_star = theta_star;
  const Vector q_star = p.features * theta_star;
  in.Q_star_inf = q_star.size() > 0 ? q_star.cwiseAbs().maxCoeff() : 0.0;
  const Vector delta_star = bellman_target(p, theta_star) - q_star;
  in.delta_star_inf =
      delta_star.size() > 0 ? delta_star.cwiseAbs().maxCoeff() : 0.0;
  in.estimate = cert.c_is_estimate;
  return in;
}

// ===========================================================================
// Envelopes
// ===========================================================================

/// Per-step upper bound curves. `curve` bounds the certificate-norm error
/// p(theta_k - theta*), `curve_euclid` the Euclidean error, and `curve_q`
/// the Q-value sup error. The recursion curve(k+1) = lambda curve(k) +
/// residual is evaluated for any lambda; `applicable` records lambda < 1,
/// without which the curve does not converge to `limsup`.
struct Envelope {
  RunKind kind = RunKind::deterministic;
  double lambda = 0.0;
  double residual = 0.0;
  std::vector<double> curve;
  std::vector<double> curve_euclid;
  std::vector<double> curve_q;
  bool applicable = false;  ///< lambda < 1
  double limsup = 0.0;      ///< residual / (1 - lambda) when applicable
  bool estimate = true;     ///< constants carry the tail estimate flag
};

namespace detail {

inline Envelope build_envelope(RunKind kind, const BoundInputs& in,
                               double lambda, double residual, double x0_p,
                               double x0_norm, int k_max) {
  if (k_max < 0) throw ValidationError("envelope horizon must be nonnegative");
  Envelope env;
  env.kind = kind;
  env.lambda = lambda;
  env.residual = residual;
  env.applicable = lambda < 1.0;
  env.limsup = env.applicable ? residual / (1.0 - lambda)
                              : std::numeric_limits<double>::infinity();
  env.estimate = in.estimate;
  env.curve.resize(static_cast<std::size_t>(k_max) + 1);
  env.curve_euclid.resize(static_cast<std::size_t>(k_max) + 1);
  env.curve_q.resize(static_cast<std::size_t>(k_max) + 1);
  env.curve[0] = x0_p;
  // The Euclidean seed absorbs the norm-equivalence constant once; the
  // residual already carries sqrt_C and is shared by both curves.
  env.curve_euclid[0] = in.sqrt_C * x0_norm;
  env.curve_q[0] = in.Phi_2 * env.curve_euclid[0];
  for (int k = 0; k < k_max; ++k) {
    const auto i = static_cast<std::size_t>(k);
    env.curve[i + 1] = lambda * env.curve[i] + residual;
    env.curve_euclid[i + 1] = lambda * env.curve_euclid[i] + residual;
    env.curve_q[i + 1] = in.Phi_2 * env.curve_euclid[i + 1];
  }
  return env;
}

}  // namespace detail

/// Deterministic decay envelope: pure geometric decay at rate beta_eps.
inline Envelope det_envelope(const BoundInputs& in, double x0_p,
                             double x0_norm, int k_max) {
  return detail::build_envelope(RunKind::deterministic, in, in.beta_eps, 0.0,
                                x0_p, x0_norm, k_max);
}

/// I.i.d.-sampling envelope: lambda = beta_eps + 2 alpha sqrt_C (1+gamma)
/// phi_max^2, residual = 2 alpha sqrt_C phi_max (R_max + (1+gamma) Q*_inf).
inline Envelope iid_envelope(const BoundInputs& in, double x0_p,
                             double x0_norm, int k_max) {
  const double lambda =
      in.beta_eps +
      2.0 * in.alpha * in.sqrt_C * (1.0 + in.gamma) * in.phi_max * in.phi_max;
  const double residual = 2.0 * in.alpha * in.sqrt_C * in.phi_max *
                          (in.R_max + (1.0 + in.gamma) * in.Q_star_inf);
  return detail::build_envelope(RunKind::iid, in, lambda, residual, x0_p,
                                x0_norm, k_max);
}

/// Single-trajectory (Markovian) envelope: the contraction penalty doubles
/// (factor 4) and the residual gains the fixed-point Bellman gap
/// delta_star_inf inside the parenthesis.
inline Envelope markov_envelope(const BoundInputs& in, double x0_p,
                                double x0_norm, int k_max) {
  const double lambda =
      in.beta_eps +
      4.0 * in.alpha * in.sqrt_C * (1.0 + in.gamma) * in.phi_max * in.phi_max;
  const double residual =
      2.0 * in.alpha * in.sqrt_C * in.phi_max *
      (in.R_max + (1.0 + in.gamma) * in.Q_star_inf + in.delta_star_inf);
  return detail::build_envelope(RunKind::markov, in, lambda, residual, x0_p,
                                x0_norm, k_max);
}

// ===========================================================================
// Exhaustive noise means
// ===========================================================================

/// Exact mean of the sampled update direction over all ((s,a), s') outcomes
/// weighted by d and P; equals g(theta) up to roundoff.
inline Vector exhaustive_mean_ghat(const Problem& p, const Vector& theta) {
  const Vector values = p.features * theta;
  const ValueMax vm = value_max(p, theta);
  Vector mean = Vector::Zero(p.feature_dim);
  for (int i = 0; i < p.pair_count(); ++i) {
    const Vector phi = p.features.row(i).transpose();
    for (int s = 0; s < p.n_states; ++s) {
      const double prob = p.sampling(i) * p.transitions(i, s);
      if (prob == 0.0) continue;
      const double target = p.rewards(i, s) + p.gamma * vm.v(s) - values(i);
      mean += prob * target * phi;
    }
  }
  return mean;
}

/// Exact conditional mean of the transition-reward noise at pair X over all
/// next-state outcomes; equals zero up to roundoff.
inline Vector exhaustive_mean_xi(const Problem& p, const Vector& theta,
                                 int X) {
  if (X < 0 || X >= p.pair_count()) {
    throw ValidationError("state-action index out of range");
  }
  const ValueMax vm = value_max(p, theta);
  const ExpectedReward er = expected_reward(p);
  const double expected_value = p.transitions.row(X) * vm.v;
  const Vector phi = p.features.row(X).transpose();
  Vector mean = Vector::Zero(p.feature_dim);
  for (int s = 0; s < p.n_states; ++s) {
    const double prob = p.transitions(X, s);
    if (prob == 0.0) continue;
    const double centered =
        (p.rewards(X, s) - er.R(X)) + p.gamma * (vm.v(s) - expected_value);
    mean += prob * centered * phi;
  }
  return mean;
}

// ===========================================================================
// Noise-growth verification
// ===========================================================================

/// Exhaustive verification of the linear-growth noise bounds at a given
/// parameter. Both expectations are finite sums over the outcome space; the
/// right-hand sides use the certificate's sqrt_C and truncated norm.
struct NoiseGrowthReport {
  Vector theta_star;
  double p_x = 0.0;           ///< p(theta - theta*)
  double iid_lhs = 0.0;       ///< E p(w) over (s,a) ~ d, s' ~ P
  double iid_rhs = 0.0;
  double iid_slack = 0.0;     ///< rhs - lhs
  bool iid_ok = false;
  double markov_max_lhs = 0.0;  ///< max over X of E[p(b + xi) | X]
  double markov_rhs = 0.0;
  double markov_min_slack = 0.0;
  int markov_worst_pair = -1;
  bool markov_ok = false;
};

inline NoiseGrowthReport noise_growth_check(
    const Problem& p, const LyapunovCert& cert, const Vector& theta,
    long long n_outcomes_exhaustive = 1'000'000) {
  const long long outcomes = static_cast<long long>(p.pair_count()) *
                             static_cast<long long>(p.n_states);
  if (outcomes > n_outcomes_exhaustive) {
    throw CapExceeded("exhaustive outcome enumeration exceeds cap");
  }

  const MapKind map_kind = p.eta > 0.0 ? MapKind::reg_dlq : MapKind::dlq;
  const FixedPointReport fp =
      solve_fixed_point(p, map_kind, 1e-12, 200000, cert.view());
  if (fp.status != SolveStatus::converged) {
    throw ValidationError(
        "noise growth check requires a converged fixed point");
  }

  NoiseGrowthReport report;
  report.theta_star = fp.theta_star;
  const BoundInputs in = make_bound_inputs(p, cert, fp.theta_star);
  report.p_x = lyap_p(cert, theta - fp.theta_star);

  const Vector g = residual_g(p, theta);
  const Vector values = p.features * theta;
  const ValueMax vm = value_max(p, theta);

  // E p(w) with w = ghat - g over the full (pair, next-state) outcome space.
  double iid_lhs = 0.0;
  for (int i = 0; i < p.pair_count(); ++i) {
    const Vector phi = p.features.row(i).transpose();
    for (int s = 0; s < p.n_states; ++s) {
      const double prob = p.sampling(i) * p.transitions(i, s);
      if (prob == 0.0) continue;
      const double target = p.rewards(i, s) + p.gamma * vm.v(s) - values(i);
      const Vector w = target * phi - g;
      iid_lhs += prob * lyap_p(cert, w);
    }
  }
  report.iid_lhs = iid_lhs;
  const double common =
      2.0 * in.sqrt_C * in.phi_max * (in.R_max + (1.0 + in.gamma) * in.Q_star_inf);
  report.iid_rhs = common + 2.0 * in.sqrt_C * (1.0 + in.gamma) * in.phi_max *
                                in.phi_max * report.p_x;
  report.iid_slack = report.iid_rhs - report.iid_lhs;
  report.iid_ok = report.iid_slack >= 0.0;

  // max over X of E[p(b + xi) | X]: b + xi collapses to the sampled update
  // direction at the fixed pair X minus g(theta).
  report.markov_rhs = common + 2.0 * in.sqrt_C * in.phi_max * in.delta_star_inf +
                      4.0 * in.sqrt_C * (1.0 + in.gamma) * in.phi_max *
                          in.phi_max * report.p_x;
  // The right-hand side does not depend on X, so the minimum slack is
  // attained exactly where the conditional expectation is largest.
  for (int X = 0; X < p.pair_count(); ++X) {
    const Vector phi = p.features.row(X).transpose();
    double lhs = 0.0;
    for (int s = 0; s < p.n_states; ++s) {
      const double prob = p.transitions(X, s);
      if (prob == 0.0) continue;
      const double target = p.rewards(X, s) + p.gamma * vm.v(s) - values(X);
      const Vector combined = target * phi - g;
      lhs += prob * lyap_p(cert, combined);
    }
    if (X == 0 || lhs > report.markov_max_lhs) {
      report.markov_max_lhs = lhs;
      report.markov_worst_pair = X;
    }
  }
  report.markov_min_slack = report.markov_rhs - report.markov_max_lhs;
  report.markov_ok = report.markov_min_slack >= 0.0;
  return report;
}

}  // namespace qjsr
