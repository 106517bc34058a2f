#pragma once

// Finite MDP model with linear function approximation: problem container,
// validation, action-block indexing, policy enumeration, selector matrices,
// behavior-chain stationary distributions, and feature radii.
//
// Indexing convention (fixed globally): state-action pairs are flattened in
// action-block order, index_of(s, a) = a * |S| + s, so the state index
// varies fastest within each action block.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qjsr/types.hpp"

namespace qjsr {

// ===========================================================================
// Problem container
// ===========================================================================

/// A validated finite discounted MDP with linear features and a sampling
/// distribution over state-action pairs. All tensors over state-action
/// pairs use action-block row order.
struct Problem {
  int n_states = 0;
  int n_actions = 0;
  int feature_dim = 0;

  /// (|S||A|) x |S|; row (s,a) holds P(s' | s,a). Rows sum to one.
  Matrix transitions;
  /// (|S||A|) x |S|; entry ((s,a), s') holds r(s,a,s').
  Matrix rewards;
  /// Length |S||A|; strictly positive, sums to one.
  Vector sampling;
  /// (|S||A|) x m feature matrix with full column rank.
  Matrix features;
  /// |S| x |A| behavior policy rows (optional; empty when unspecified).
  Matrix behavior;

  double gamma = 0.0;  ///< discount factor in [0, 1)
  double alpha = 0.0;  ///< step size, > 0
  double eta = 0.0;    ///< ridge weight, >= 0

  [[nodiscard]] int pair_count() const { return n_states * n_actions; }
  [[nodiscard]] int index_of(int s, int a) const { return a * n_states + s; }
  [[nodiscard]] int state_of(int i) const { return i % n_states; }
  [[nodiscard]] int action_of(int i) const { return i / n_states; }
};

/// One policy choice per state (0-based action indices).
using DeterministicPolicy = std::vector<int>;

/// Row-stochastic |S| x |A| action distribution per state.
struct StochasticPolicy {
  Matrix prob;
  [[nodiscard]] bool deterministic(double tol = 0.0) const {
    for (int s = 0; s < prob.rows(); ++s) {
      if (prob.row(s).maxCoeff() < 1.0 - tol) return false;
    }
    return true;
  }
};

/// Behavior-induced chain over state-action pairs together with its
/// stationary distribution.
struct BehaviorModel {
  Matrix behavior;    ///< |S| x |A| row-stochastic policy
  Matrix kernel;      ///< (|S||A|) x (|S||A|) chain kernel
  Vector stationary;  ///< strictly positive, stationary for the kernel
};

// ===========================================================================
// Validation
// ===========================================================================

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace detail

/// Check every structural invariant of a Problem; throws ValidationError
/// naming the violated invariant and the offending index.
inline void validate_problem(const Problem& p) {
  using detail::require;
  constexpr double kSimplexTol = 1e-12;

  require(p.n_states >= 1, "state count must be at least 1");
  require(p.n_actions >= 1, "action count must be at least 1");
  require(p.feature_dim >= 1, "feature dimension must be at least 1");
  const int n = p.pair_count();

  require(p.transitions.rows() == n && p.transitions.cols() == p.n_states,
          "transition matrix has wrong shape");
  require(p.rewards.rows() == n && p.rewards.cols() == p.n_states,
          "reward tensor has wrong shape");
  require(p.sampling.size() == n, "sampling distribution has wrong length");
  require(p.features.rows() == n && p.features.cols() == p.feature_dim,
          "feature matrix has wrong shape");

  for (int i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int sp = 0; sp < p.n_states; ++sp) {
      const double v = p.transitions(i, sp);
      require(std::isfinite(v) && v >= 0.0,
              "transition probability negative or non-finite at pair index " +
                  std::to_string(i) + ", next state " + std::to_string(sp));
      row_sum += v;
    }
    require(std::abs(row_sum - 1.0) <= kSimplexTol,
            "transition row does not sum to one at pair index " +
                std::to_string(i));
  }

  double d_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = p.sampling(i);
    require(std::isfinite(v) && v > 0.0,
            "sampling distribution not strictly positive at pair index " +
                std::to_string(i));
    d_sum += v;
  }
  require(std::abs(d_sum - 1.0) <= kSimplexTol,
          "sampling distribution does not sum to one");

  require(p.rewards.allFinite(), "reward tensor has non-finite entries");
  require(p.features.allFinite(), "feature matrix has non-finite entries");

  // Full column rank, scale-invariant threshold.
  Eigen::JacobiSVD<Matrix> svd(p.features);
  const auto& sv = svd.singularValues();
  require(sv.size() > 0 && sv(sv.size() - 1) > 1e-10 * sv(0),
          "feature matrix rank deficient");

  require(std::isfinite(p.gamma) && p.gamma >= 0.0 && p.gamma < 1.0,
          "discount factor must lie in [0, 1)");
  require(std::isfinite(p.alpha) && p.alpha > 0.0, "step size must be positive");
  require(std::isfinite(p.eta) && p.eta >= 0.0,
          "ridge weight must be nonnegative");

  if (p.behavior.size() > 0) {
    require(p.behavior.rows() == p.n_states && p.behavior.cols() == p.n_actions,
            "behavior policy has wrong shape");
    for (int s = 0; s < p.n_states; ++s) {
      double row_sum = 0.0;
      for (int a = 0; a < p.n_actions; ++a) {
        const double v = p.behavior(s, a);
        require(std::isfinite(v) && v >= 0.0,
                "behavior probability negative or non-finite at state " +
                    std::to_string(s) + ", action " + std::to_string(a));
        row_sum += v;
      }
      require(std::abs(row_sum - 1.0) <= kSimplexTol,
              "behavior row does not sum to one at state " + std::to_string(s));
    }
  }
}

// ===========================================================================
// Expected reward
// ===========================================================================

struct ExpectedReward {
  Vector R;      ///< length |S||A|, R(s,a) = sum_{s'} P(s'|s,a) r(s,a,s')
  double r_max;  ///< max over (s,a,s') of |r(s,a,s')|
};

inline ExpectedReward expected_reward(const Problem& p) {
  ExpectedReward out;
  out.R = (p.transitions.array() * p.rewards.array()).rowwise().sum().matrix();
  out.r_max = p.rewards.size() > 0 ? p.rewards.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

// ===========================================================================
// Policy enumeration and selector matrices
// ===========================================================================

inline constexpr long long kPolicyCap = 1'000'000;

namespace detail {

/// |A|^|S| guarded against overflow of the cap.
inline long long policy_tuple_count(int n_states, int n_actions,
                                    long long cap = kPolicyCap) {
  long long count = 1;
  for (int s = 0; s < n_states; ++s) {
    count *= n_actions;
    if (count > cap) {
      throw CapExceeded("policy enumeration cap exceeded: |A|^|S| > " +
                        std::to_string(cap));
    }
  }
  return count;
}

/// All action tuples (pi(1), ..., pi(|S|)) in lexicographic order with the
/// last state's action varying fastest.
inline std::vector<DeterministicPolicy> enumerate_policy_tuples(
    int n_states, int n_actions, long long cap = kPolicyCap) {
  const long long count = policy_tuple_count(n_states, n_actions, cap);
  std::vector<DeterministicPolicy> out;
  out.reserve(static_cast<std::size_t>(count));
  DeterministicPolicy pol(static_cast<std::size_t>(n_states), 0);
  for (long long idx = 0; idx < count; ++idx) {
    long long rem = idx;
    for (int s = n_states - 1; s >= 0; --s) {
      pol[static_cast<std::size_t>(s)] = static_cast<int>(rem % n_actions);
      rem /= n_actions;
    }
    out.push_back(pol);
  }
  return out;
}

}  // namespace detail

/// Number of deterministic policies |A|^|S|, guarded against overflow.
inline long long policy_count(const Problem& p, long long cap = kPolicyCap) {
  return detail::policy_tuple_count(p.n_states, p.n_actions, cap);
}

/// All deterministic policies in lexicographic order: the policy is read as
/// the tuple (pi(1), ..., pi(|S|)) and the last state's action varies
/// fastest, matching the order in which mode norms are reported.
inline std::vector<DeterministicPolicy> enumerate_policies(
    const Problem& p, long long cap = kPolicyCap) {
  return detail::enumerate_policy_tuples(p.n_states, p.n_actions, cap);
}

/// Selector matrix of a stochastic policy: row s equals mu(s)^T (x) e_s^T,
/// i.e. entry (s, index_of(s', a)) = mu(a|s) * [s' == s].
inline Matrix policy_selector_matrix(const Problem& p,
                                     const StochasticPolicy& mu) {
  Matrix Pi = Matrix::Zero(p.n_states, p.pair_count());
  for (int s = 0; s < p.n_states; ++s) {
    for (int a = 0; a < p.n_actions; ++a) {
      Pi(s, p.index_of(s, a)) = mu.prob(s, a);
    }
  }
  return Pi;
}

/// Selector matrix of a deterministic policy (one-hot rows).
inline Matrix policy_selector_matrix(const Problem& p,
                                     const DeterministicPolicy& pol) {
  Matrix Pi = Matrix::Zero(p.n_states, p.pair_count());
  for (int s = 0; s < p.n_states; ++s) {
    Pi(s, p.index_of(s, pol[static_cast<std::size_t>(s)])) = 1.0;
  }
  return Pi;
}

/// Wrap a deterministic policy as a (degenerate) stochastic policy.
inline StochasticPolicy as_stochastic(const Problem& p,
                                      const DeterministicPolicy& pol) {
  StochasticPolicy mu;
  mu.prob = Matrix::Zero(p.n_states, p.n_actions);
  for (int s = 0; s < p.n_states; ++s) {
    mu.prob(s, pol[static_cast<std::size_t>(s)]) = 1.0;
  }
  return mu;
}

// ===========================================================================
// Behavior chain and stationary distribution
// ===========================================================================

/// Chain kernel over state-action pairs induced by a behavior policy:
/// kernel((s,a) -> (s',a')) = P(s'|s,a) * b(a'|s').
inline Matrix behavior_kernel(const Problem& p, const Matrix& behavior) {
  const int n = p.pair_count();
  Matrix kernel = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int sp = 0; sp < p.n_states; ++sp) {
      const double trans = p.transitions(i, sp);
      if (trans == 0.0) continue;
      for (int ap = 0; ap < p.n_actions; ++ap) {
        kernel(i, p.index_of(sp, ap)) = trans * behavior(sp, ap);
      }
    }
  }
  return kernel;
}

/// Stationary distribution of the behavior chain. Throws ValidationError
/// when the principal eigenvector is not unique (eigenvalue-gap check) or
/// when some state-action pair has (numerically) zero stationary mass.
inline BehaviorModel stationary_distribution(const Problem& p,
                                             const Matrix& behavior) {
  detail::require(behavior.rows() == p.n_states && behavior.cols() == p.n_actions,
                  "behavior policy has wrong shape");
  for (int s = 0; s < p.n_states; ++s) {
    detail::require(std::abs(behavior.row(s).sum() - 1.0) <= 1e-12,
                    "behavior row does not sum to one at state " +
                        std::to_string(s));
    detail::require(behavior.row(s).minCoeff() >= 0.0,
                    "behavior probability negative at state " +
                        std::to_string(s));
  }

  BehaviorModel model;
  model.behavior = behavior;
  model.kernel = behavior_kernel(p, behavior);
  const int n = p.pair_count();

  Eigen::EigenSolver<Matrix> eig(model.kernel.transpose());
  const auto& values = eig.eigenvalues();
  const auto& vectors = eig.eigenvectors();

  // Locate the eigenvalue closest to 1 and check the modulus gap to the
  // rest of the spectrum.
  int principal = 0;
  double best = std::abs(values(0) - std::complex<double>(1.0, 0.0));
  for (int i = 1; i < n; ++i) {
    const double dist = std::abs(values(i) - std::complex<double>(1.0, 0.0));
    if (dist < best) {
      best = dist;
      principal = i;
    }
  }
  detail::require(best <= 1e-8, "behavior chain has no unit eigenvalue");
  for (int i = 0; i < n; ++i) {
    if (i == principal) continue;
    detail::require(std::abs(std::abs(values(i)) - 1.0) > 1e-8,
                    "stationary distribution not unique: second eigenvalue "
                    "modulus within 1e-8 of one");
  }

  Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = vectors(i, principal).real();
  const double total = d.sum();
  detail::require(std::abs(total) > 0.0,
                  "stationary eigenvector has zero mass");
  d /= total;

  for (int i = 0; i < n; ++i) {
    detail::require(d(i) > 1e-12,
                    "stationary distribution has zero-mass state-action pair "
                    "at pair index " + std::to_string(i));
  }
  const double residual =
      ((d.transpose() * model.kernel).transpose() - d).cwiseAbs().maxCoeff();
  detail::require(residual <= 1e-10,
                  "stationary fixed-point residual exceeds 1e-10");

  model.stationary = d;
  return model;
}

/// Uniform behavior policy over actions.
inline Matrix uniform_behavior(const Problem& p) {
  return Matrix::Constant(p.n_states, p.n_actions, 1.0 / p.n_actions);
}

// ===========================================================================
// Feature radii
// ===========================================================================

struct FeatureRadius {
  double phi_max;  ///< max Euclidean row norm of the feature matrix
  double phi_2;    ///< largest singular value of the feature matrix
};

inline FeatureRadius feature_radius(const Problem& p) {
  FeatureRadius out;
  out.phi_max = p.features.rowwise().norm().maxCoeff();
  Eigen::JacobiSVD<Matrix> svd(p.features);
  out.phi_2 = svd.singularValues()(0);
  return out;
}

}  // namespace qjsr
