#pragma once

// Switching structure of the deterministic error dynamics: the two-point
// stochastic-policy linearization of Bellman-maximum differences, mode
// matrices, the complete per-policy mode family, convex-hull weights, and
// the exact pairwise switching representation of map differences.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "qjsr/bellman.hpp"
#include "qjsr/mdp.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

// ===========================================================================
// Stochastic-policy linearization
// ===========================================================================

/// Construct the two-point stochastic policy mu with
///   V_theta - V_theta_bar = Pi^mu Phi (theta - theta_bar).
/// Per state, mu is supported on the lexicographically-first argmin and
/// argmax of e(s, .) = [Phi (theta - theta_bar)](s, .), with weight
/// lambda_s = (y_s - e_min) / (e_max - e_min) on the argmax (clamped to
/// [0,1]); a degenerate spread e_max - e_min <= 1e-14 * scale puts mass one
/// on the argmin.
inline StochasticPolicy linearize_max(const Problem& p, const Vector& theta,
                                      const Vector& theta_bar) {
  const Vector e = p.features * (theta - theta_bar);
  const Vector y = value_max(p, theta).v - value_max(p, theta_bar).v;

  StochasticPolicy mu;
  mu.prob = Matrix::Zero(p.n_states, p.n_actions);
  for (int s = 0; s < p.n_states; ++s) {
    int a_min = 0;
    int a_max = 0;
    double e_min = e(p.index_of(s, 0));
    double e_max = e_min;
    for (int a = 1; a < p.n_actions; ++a) {
      const double v = e(p.index_of(s, a));
      if (v < e_min) {
        e_min = v;
        a_min = a;
      }
      if (v > e_max) {
        e_max = v;
        a_max = a;
      }
    }
    const double spread = e_max - e_min;
    const double scale = std::max({1.0, std::abs(e_min), std::abs(e_max)});
    if (spread <= 1e-14 * scale) {
      mu.prob(s, a_min) = 1.0;
      continue;
    }
    double lambda = (y(s) - e_min) / spread;
    lambda = std::clamp(lambda, 0.0, 1.0);
    mu.prob(s, a_max) += lambda;
    mu.prob(s, a_min) += 1.0 - lambda;
  }
  return mu;
}

// ===========================================================================
// Mode matrices
// ===========================================================================

namespace detail {

/// Rows of Pi^mu Phi: state s gets sum_a mu(a|s) phi(s,a).
inline Matrix selected_features(const Problem& p, const StochasticPolicy& mu) {
  Matrix out = Matrix::Zero(p.n_states, p.feature_dim);
  for (int s = 0; s < p.n_states; ++s) {
    for (int a = 0; a < p.n_actions; ++a) {
      const double w = mu.prob(s, a);
      if (w != 0.0) out.row(s) += w * p.features.row(p.index_of(s, a));
    }
  }
  return out;
}

inline Matrix selected_features(const Problem& p,
                                const DeterministicPolicy& pol) {
  Matrix out(p.n_states, p.feature_dim);
  for (int s = 0; s < p.n_states; ++s) {
    out.row(s) = p.features.row(p.index_of(s, pol[static_cast<std::size_t>(s)]));
  }
  return out;
}

inline Matrix mode_from_selected(const Problem& p, const ProjectionCache& cache,
                                 const Matrix& selected, double alpha,
                                 double eta) {
  const Matrix identity = Matrix::Identity(p.feature_dim, p.feature_dim);
  return identity - alpha * cache.M + (alpha * p.gamma) * (cache.N * selected) -
         (alpha * eta) * identity;
}

}  // namespace detail

/// Mode matrix A = I - alpha Phi^T D Phi + alpha gamma Phi^T D P Pi Phi
/// (minus alpha eta I when eta > 0).
inline Matrix mode_matrix(const Problem& p, const StochasticPolicy& mu,
                          double alpha, double eta) {
  const ProjectionCache cache = build_projection_cache(p);
  return detail::mode_from_selected(p, cache, detail::selected_features(p, mu),
                                    alpha, eta);
}

inline Matrix mode_matrix(const Problem& p, const DeterministicPolicy& pol,
                          double alpha, double eta) {
  const ProjectionCache cache = build_projection_cache(p);
  return detail::mode_from_selected(p, cache, detail::selected_features(p, pol),
                                    alpha, eta);
}

// ===========================================================================
// Mode family
// ===========================================================================

/// Complete per-policy mode family, ordered exactly like enumerate_policies.
struct ModeFamily {
  std::vector<Matrix> modes;
  double alpha = 0.0;
  double eta = 0.0;
  double gamma = 0.0;
  FamilyKind kind = FamilyKind::direct;
  int n_states = 0;
  int n_actions = 0;
  int dim = 0;

  [[nodiscard]] std::size_t size() const { return modes.size(); }
};

inline ModeFamily build_family(const Problem& p, double alpha, double eta,
                               long long cap = kPolicyCap) {
  const auto policies = enumerate_policies(p, cap);
  const ProjectionCache cache = build_projection_cache(p);

  ModeFamily family;
  family.alpha = alpha;
  family.eta = eta;
  family.gamma = p.gamma;
  family.kind = eta > 0.0 ? FamilyKind::regularized : FamilyKind::direct;
  family.n_states = p.n_states;
  family.n_actions = p.n_actions;
  family.dim = p.feature_dim;
  family.modes.reserve(policies.size());
  for (const auto& pol : policies) {
    family.modes.push_back(detail::mode_from_selected(
        p, cache, detail::selected_features(p, pol), alpha, eta));
  }
  return family;
}

inline ModeFamily build_family(const Problem& p) {
  return build_family(p, p.alpha, p.eta);
}

// ===========================================================================
// Convex-hull weights
// ===========================================================================

/// Weights c_pi(mu) = prod_s mu(pi(s)|s) over deterministic policies, in
/// enumerate_policies order. They are a probability vector and satisfy
/// A_mu = sum_pi c_pi(mu) A_pi.
inline Vector hull_weights(const Problem& p, const StochasticPolicy& mu,
                           long long cap = kPolicyCap) {
  const auto policies = enumerate_policies(p, cap);
  Vector weights(static_cast<Eigen::Index>(policies.size()));
  for (std::size_t i = 0; i < policies.size(); ++i) {
    double w = 1.0;
    for (int s = 0; s < p.n_states; ++s) {
      w *= mu.prob(s, policies[i][static_cast<std::size_t>(s)]);
    }
    weights(static_cast<Eigen::Index>(i)) = w;
  }
  return weights;
}

/// Hull combination sum_pi c_pi(mu) A_pi over a prebuilt family.
inline Matrix hull_mode(const Problem& p, const ModeFamily& family,
                        const StochasticPolicy& mu) {
  const Vector weights = hull_weights(p, mu);
  Matrix combined = Matrix::Zero(family.dim, family.dim);
  for (std::size_t i = 0; i < family.modes.size(); ++i) {
    combined += weights(static_cast<Eigen::Index>(i)) * family.modes[i];
  }
  return combined;
}

// ===========================================================================
// Pairwise switching representation
// ===========================================================================

/// Witness that a map difference is one linear mode application:
/// T(theta) - T(theta_bar) = A_mu (theta - theta_bar).
struct PairwiseWitness {
  StochasticPolicy mu;
  Matrix mode;
  double residual = 0.0;  ///< two-sided verification defect
};

inline PairwiseWitness pairwise_mode(const Problem& p, const Vector& theta,
                                     const Vector& theta_bar, double alpha,
                                     double eta) {
  PairwiseWitness witness;
  witness.mu = linearize_max(p, theta, theta_bar);
  witness.mode = mode_matrix(p, witness.mu, alpha, eta);
  const Vector lhs =
      step_map(p, theta, alpha, eta) - step_map(p, theta_bar, alpha, eta);
  witness.residual = (lhs - witness.mode * (theta - theta_bar)).norm();
  return witness;
}

inline PairwiseWitness pairwise_mode(const Problem& p, const Vector& theta,
                                     const Vector& theta_bar) {
  return pairwise_mode(p, theta, theta_bar, p.alpha, p.eta);
}

}  // namespace qjsr
