#pragma once

// Shared test utilities: a seeded random-problem generator and scalar-loop
// reference implementations ("oracles") that deliberately avoid the library's
// own linear-algebra code paths so the two can disagree.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "qjsr/mdp.hpp"
#include "qjsr/spectral.hpp"
#include "qjsr/switching.hpp"
#include "qjsr/types.hpp"

namespace qjsr_test {

struct GenOptions {
  bool with_eta = false;       ///< draw eta from U(0, 2); otherwise eta = 0
  bool with_behavior = false;  ///< attach a random behavior matrix
  int max_states = 3;
  int max_actions = 3;
  int max_dim = 4;
};

/// Fill one probability row: strictly positive entries, exact unit sum.
template <typename Row>
void fill_simplex_row(std::mt19937_64& rng, Row&& row) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  const int n = static_cast<int>(row.size());
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    row(j) = unif(rng);
    total += row(j);
  }
  double partial = 0.0;
  for (int j = 0; j < n - 1; ++j) {
    row(j) /= total;
    partial += row(j);
  }
  row(n - 1) = 1.0 - partial;
}

/// Seeded random problem with strictly positive transitions/sampling and
/// full-column-rank features.
inline qjsr::Problem random_problem(std::uint64_t seed, GenOptions opt = {}) {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  qjsr::Problem p;
  p.n_states = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(opt.max_states));
  p.n_actions = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(opt.max_actions));
  const int pairs = p.n_states * p.n_actions;
  const int dim_cap = std::min(opt.max_dim, pairs);
  p.feature_dim = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(dim_cap));

  p.transitions.resize(pairs, p.n_states);
  for (int i = 0; i < pairs; ++i) fill_simplex_row(rng, p.transitions.row(i));
  p.sampling.resize(pairs);
  fill_simplex_row(rng, p.sampling);

  p.rewards.resize(pairs, p.n_states);
  for (int i = 0; i < pairs; ++i) {
    for (int s = 0; s < p.n_states; ++s) p.rewards(i, s) = sym(rng);
  }

  p.features.resize(pairs, p.feature_dim);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (int i = 0; i < pairs; ++i) {
      for (int j = 0; j < p.feature_dim; ++j) p.features(i, j) = sym(rng);
    }
    Eigen::JacobiSVD<qjsr::Matrix> svd(p.features);
    if (svd.singularValues()(p.feature_dim - 1) > 0.15) break;
  }

  std::uniform_real_distribution<double> gamma_dist(0.1, 0.9);
  std::uniform_real_distribution<double> alpha_dist(0.05, 0.8);
  p.gamma = gamma_dist(rng);
  p.alpha = alpha_dist(rng);
  p.eta = 0.0;
  if (opt.with_eta) {
    std::uniform_real_distribution<double> eta_dist(0.0, 2.0);
    p.eta = eta_dist(rng);
  }
  if (opt.with_behavior) {
    p.behavior.resize(p.n_states, p.n_actions);
    for (int s = 0; s < p.n_states; ++s) fill_simplex_row(rng, p.behavior.row(s));
  }
  qjsr::validate_problem(p);
  return p;
}

/// Seeded random parameter vector with entries in [-scale, scale].
inline qjsr::Vector random_theta(std::uint64_t seed, int dim, double scale = 2.0) {
  std::mt19937_64 rng(seed ^ 0xabcdef0123456789ull);
  std::uniform_real_distribution<double> sym(-scale, scale);
  qjsr::Vector theta(dim);
  for (int j = 0; j < dim; ++j) theta(j) = sym(rng);
  return theta;
}

/// Scalar-loop mean update direction: g(theta) = Phi^T D (R + gamma P V - Phi theta).
inline qjsr::Vector oracle_g(const qjsr::Problem& p, const qjsr::Vector& theta) {
  qjsr::Vector g = qjsr::Vector::Zero(p.feature_dim);
  for (int s = 0; s < p.n_states; ++s) {
    for (int a = 0; a < p.n_actions; ++a) {
      const int i = p.index_of(s, a);
      double target = 0.0;
      for (int sp = 0; sp < p.n_states; ++sp) {
        double best = -std::numeric_limits<double>::infinity();
        for (int ap = 0; ap < p.n_actions; ++ap) {
          double q = 0.0;
          for (int j = 0; j < p.feature_dim; ++j) {
            q += p.features(p.index_of(sp, ap), j) * theta(j);
          }
          best = std::max(best, q);
        }
        target += p.transitions(i, sp) * (p.rewards(i, sp) + p.gamma * best);
      }
      double q_i = 0.0;
      for (int j = 0; j < p.feature_dim; ++j) q_i += p.features(i, j) * theta(j);
      for (int j = 0; j < p.feature_dim; ++j) {
        g(j) += p.sampling(i) * p.features(i, j) * (target - q_i);
      }
    }
  }
  return g;
}

/// Scalar-loop fixed-policy affine step: theta + alpha*(Phi^T D (R + gamma P Pi_pol Phi theta - Phi theta) - eta*theta).
inline qjsr::Vector oracle_policy_step(const qjsr::Problem& p,
                                       const qjsr::DeterministicPolicy& pol,
                                       const qjsr::Vector& theta, double alpha,
                                       double eta) {
  qjsr::Vector out = theta;
  for (int s = 0; s < p.n_states; ++s) {
    for (int a = 0; a < p.n_actions; ++a) {
      const int i = p.index_of(s, a);
      double target = 0.0;
      for (int sp = 0; sp < p.n_states; ++sp) {
        const int sel = p.index_of(sp, pol[static_cast<std::size_t>(sp)]);
        double q = 0.0;
        for (int j = 0; j < p.feature_dim; ++j) q += p.features(sel, j) * theta(j);
        target += p.transitions(i, sp) * (p.rewards(i, sp) + p.gamma * q);
      }
      double q_i = 0.0;
      for (int j = 0; j < p.feature_dim; ++j) q_i += p.features(i, j) * theta(j);
      for (int j = 0; j < p.feature_dim; ++j) {
        out(j) += alpha * p.sampling(i) * p.features(i, j) * (target - q_i);
      }
    }
  }
  out -= alpha * eta * theta;
  return out;
}

/// Fixed-policy mode matrix assembled column by column from oracle_policy_step
/// differences (the rewards cancel).
inline qjsr::Matrix oracle_mode(const qjsr::Problem& p,
                                const qjsr::DeterministicPolicy& pol,
                                double alpha, double eta) {
  const int m = p.feature_dim;
  qjsr::Matrix A(m, m);
  const qjsr::Vector zero_image =
      oracle_policy_step(p, pol, qjsr::Vector::Zero(m), alpha, eta);
  for (int j = 0; j < m; ++j) {
    qjsr::Vector e = qjsr::Vector::Zero(m);
    e(j) = 1.0;
    A.col(j) = oracle_policy_step(p, pol, e, alpha, eta) - zero_image;
  }
  return A;
}

/// Spectral norm via the symmetric eigenproblem on A^T A (the library uses
/// SVD, so this is an independent path).
inline double oracle_spectral_norm(const qjsr::Matrix& a) {
  Eigen::SelfAdjointEigenSolver<qjsr::Matrix> eig(a.transpose() * a);
  const double top = eig.eigenvalues().maxCoeff();
  return std::sqrt(std::max(0.0, top));
}

struct DepthExtremes {
  double max_norm = 0.0;
  double max_rho = 0.0;
};

/// Odometer enumeration of every length-k product (application order: the
/// word's last letter multiplies on the left), tracking max norm and max
/// spectral radius.
inline DepthExtremes oracle_depth_extremes(
    const std::vector<qjsr::Matrix>& modes, int k) {
  const int n = static_cast<int>(modes.size());
  const int m = static_cast<int>(modes.front().rows());
  std::vector<int> word(static_cast<std::size_t>(k), 0);
  DepthExtremes out;
  while (true) {
    qjsr::Matrix prod = qjsr::Matrix::Identity(m, m);
    for (int idx = 0; idx < k; ++idx) {
      prod = modes[static_cast<std::size_t>(word[static_cast<std::size_t>(idx)])] * prod;
    }
    out.max_norm = std::max(out.max_norm, oracle_spectral_norm(prod));
    out.max_rho = std::max(out.max_rho, qjsr::spectral_radius(prod));
    int pos = k - 1;
    while (pos >= 0 && word[static_cast<std::size_t>(pos)] == n - 1) {
      word[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++word[static_cast<std::size_t>(pos)];
  }
  return out;
}

/// Brute-force truncated Lyapunov value: sum_{l=0}^{T} beta^{-2l} max_{|w|=l} |A_w x|^2.
inline double oracle_lyap_value(const std::vector<qjsr::Matrix>& modes,
                                double beta, int depth, const qjsr::Vector& x) {
  const int n = static_cast<int>(modes.size());
  double total = x.squaredNorm();
  std::vector<qjsr::Vector> level{x};
  double weight = 1.0;
  for (int l = 1; l <= depth; ++l) {
    weight /= beta * beta;
    std::vector<qjsr::Vector> next;
    next.reserve(level.size() * static_cast<std::size_t>(n));
    double best = 0.0;
    for (const auto& v : level) {
      for (int i = 0; i < n; ++i) {
        next.push_back(modes[static_cast<std::size_t>(i)] * v);
        best = std::max(best, next.back().squaredNorm());
      }
    }
    total += weight * best;
    level = std::move(next);
  }
  return total;
}

}  // namespace qjsr_test
