#pragma once

// Bellman and projection machinery: greedy values, the projected Bellman
// residual g, the deterministic linear Q-learning map and projected
// Q-value iteration (plain and ridge-regularized), the sup-norm contraction
// check for the regularized projection, and a fixed-point solver.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <string>

#include "qjsr/mdp.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

// ===========================================================================
// Projection cache
// ===========================================================================

/// Dense factors shared by the projection maps. Built once per problem.
struct ProjectionCache {
  double eta = 0.0;
  Matrix M;          ///< Phi^T D Phi (m x m, symmetric positive definite)
  Matrix M_eta;      ///< M + eta I
  Matrix K;          ///< Phi^T D (m x |S||A|)
  Matrix N;          ///< Phi^T D P (m x |S|)
  Matrix Pi_D;       ///< Phi M^{-1} Phi^T D (D-orthogonal projection)
  Matrix Gamma_eta;  ///< Phi (M + eta I)^{-1} Phi^T D (ridge projection)
};

inline ProjectionCache build_projection_cache(const Problem& p) {
  ProjectionCache cache;
  cache.eta = p.eta;
  const Matrix weighted = p.sampling.asDiagonal() * p.features;
  cache.K = weighted.transpose();                          // Phi^T D
  cache.M = p.features.transpose() * weighted;             // Phi^T D Phi
  cache.M_eta = cache.M + p.eta * Matrix::Identity(p.feature_dim, p.feature_dim);
  cache.N = cache.K * p.transitions;                       // Phi^T D P

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cache.M);
  if (eig.eigenvalues()(0) <= 0.0) {
    throw ValidationError(
        "projection matrix Phi^T D Phi is not positive definite");
  }
  cache.Pi_D = p.features * cache.M.llt().solve(cache.K);
  cache.Gamma_eta = p.features * cache.M_eta.llt().solve(cache.K);
  return cache;
}

// ===========================================================================
// Greedy values and the projected Bellman residual
// ===========================================================================

struct ValueMax {
  Vector v;                 ///< V_theta(s) = max_a phi(s,a)^T theta
  std::vector<int> argmax;  ///< lexicographically first maximizing action
};

inline ValueMax value_max(const Problem& p, const Vector& theta) {
  ValueMax out;
  out.v.resize(p.n_states);
  out.argmax.assign(static_cast<std::size_t>(p.n_states), 0);
  const Vector q = p.features * theta;  // q(s,a) over pair indices
  for (int s = 0; s < p.n_states; ++s) {
    double best = q(p.index_of(s, 0));
    int best_a = 0;
    for (int a = 1; a < p.n_actions; ++a) {
      const double cand = q(p.index_of(s, a));
      if (cand > best) {
        best = cand;
        best_a = a;
      }
    }
    out.v(s) = best;
    out.argmax[static_cast<std::size_t>(s)] = best_a;
  }
  return out;
}

/// Bellman backup target R + gamma P V_theta over state-action pairs.
inline Vector bellman_target(const Problem& p, const Vector& theta) {
  const ExpectedReward er = expected_reward(p);
  return er.R + p.gamma * (p.transitions * value_max(p, theta).v);
}

/// Projected Bellman residual g(theta) = Phi^T D (R + gamma P V_theta - Phi theta).
inline Vector residual_g(const Problem& p, const Vector& theta) {
  const Vector target = bellman_target(p, theta) - p.features * theta;
  return p.features.transpose() * (p.sampling.asDiagonal() * target);
}

/// Residual of the projected equation Phi theta = Pi_D (R + gamma P V_theta),
/// measured in the Euclidean norm; zero exactly at fixed points of g.
inline double projected_equation_residual(const Problem& p,
                                          const ProjectionCache& cache,
                                          const Vector& theta) {
  const Vector backed = bellman_target(p, theta);
  return (p.features * theta - cache.Pi_D * backed).norm();
}

// ===========================================================================
// Deterministic maps
// ===========================================================================

/// One step of the deterministic map with explicit coefficients:
/// theta + alpha (g(theta) - eta theta).
inline Vector step_map(const Problem& p, const Vector& theta, double alpha,
                       double eta) {
  return theta + alpha * (residual_g(p, theta) - eta * theta);
}

/// Deterministic linear Q-learning map T_alpha(theta) = theta + alpha g(theta).
inline Vector step_dlq(const Problem& p, const Vector& theta) {
  return step_map(p, theta, p.alpha, 0.0);
}

/// Ridge-regularized map T_{alpha,eta}(theta) = T_alpha(theta) - alpha eta theta.
inline Vector step_reg_dlq(const Problem& p, const Vector& theta) {
  return step_map(p, theta, p.alpha, p.eta);
}

/// Projected Q-value iteration theta^+ = (Phi^T D Phi)^{-1} Phi^T D (R + gamma P V_theta).
inline Vector step_pqvi(const Problem& p, const ProjectionCache& cache,
                        const Vector& theta) {
  return cache.M.llt().solve(cache.K * bellman_target(p, theta));
}

/// Ridge-regularized projected Q-value iteration with (Phi^T D Phi + eta I).
inline Vector step_rpvi(const Problem& p, const ProjectionCache& cache,
                        const Vector& theta) {
  return cache.M_eta.llt().solve(cache.K * bellman_target(p, theta));
}

// ===========================================================================
// Regularized projection sup-norm contraction check
// ===========================================================================

struct SupContraction {
  double value;      ///< gamma * max absolute row sum of Gamma_eta P
  bool contraction;  ///< value < 1
};

inline SupContraction rpvi_sup_contraction(const Problem& p,
                                           const ProjectionCache& cache) {
  const Matrix GP = cache.Gamma_eta * p.transitions;
  const double row_sum = GP.cwiseAbs().rowwise().sum().maxCoeff();
  SupContraction out;
  out.value = p.gamma * row_sum;
  out.contraction = out.value < 1.0;
  return out;
}

inline SupContraction rpvi_sup_contraction(const Problem& p) {
  return rpvi_sup_contraction(p, build_projection_cache(p));
}

// ===========================================================================
// Fixed-point solver
// ===========================================================================

/// Result of iterating a deterministic map to a fixed point.
///
/// final_residual is the Euclidean norm of the map residual
/// (g(theta) for dlq, g(theta) - eta theta for reg_dlq) at the output.
/// Stopping is relative-step based, so on converged instances the residual
/// lands within a small constant multiple of tol * (1 + ||theta||) / alpha.
struct FixedPointReport {
  Vector theta_star;
  long iterations = 0;
  double final_residual = 0.0;
  bool certified = false;
  SolveStatus status = SolveStatus::non_converged;
  long divergence_index = -1;  ///< iterate index when status is diverged
};

/// Iterate theta <- map(theta) from theta0 (default 0) until the relative
/// step ||theta_{k+1} - theta_k|| <= tol (1 + ||theta_k||), divergence, or
/// max_iter. Non-convergence and divergence are statuses, not exceptions.
inline FixedPointReport solve_fixed_point(
    const Problem& p, MapKind map, double tol, long max_iter,
    std::optional<ContractionView> certificate = std::nullopt,
    std::optional<Vector> theta0 = std::nullopt) {
  if (!(tol > 0.0)) throw ValidationError("solver tolerance must be positive");
  const double eta = map == MapKind::reg_dlq ? p.eta : 0.0;

  FixedPointReport report;
  report.certified = certificate.has_value() && certificate->beta_eps < 1.0 &&
                     certificate->valid;

  Vector theta = theta0.has_value() ? *theta0 : Vector::Zero(p.feature_dim);
  const double divergence_scale = 1e12 * (1.0 + theta.norm());

  for (long k = 0; k < max_iter; ++k) {
    const Vector next = step_map(p, theta, p.alpha, eta);
    if (!next.allFinite() || next.norm() > divergence_scale) {
      report.theta_star = next;
      report.iterations = k + 1;
      report.status = SolveStatus::diverged;
      report.divergence_index = k + 1;
      report.final_residual = std::numeric_limits<double>::quiet_NaN();
      return report;
    }
    const double step = (next - theta).norm();
    theta = next;
    if (step <= tol * (1.0 + theta.norm())) {
      report.theta_star = theta;
      report.iterations = k + 1;
      report.status = SolveStatus::converged;
      report.final_residual =
          (residual_g(p, theta) - eta * theta).norm();
      return report;
    }
  }

  report.theta_star = theta;
  report.iterations = max_iter;
  report.status = SolveStatus::non_converged;
  report.final_residual = (residual_g(p, theta) - eta * theta).norm();
  return report;
}

}  // namespace qjsr
