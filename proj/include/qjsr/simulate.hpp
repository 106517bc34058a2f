#pragma once

// Trajectory simulation for deterministic, i.i.d.-sampled, and
// single-trajectory (Markovian) linear Q-learning, with per-step recording
// of realized switching modes, noise, and sampling bias, plus reproducible
// Monte Carlo ensembles with envelope overlays.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qjsr/bellman.hpp"
#include "qjsr/certificates.hpp"
#include "qjsr/lyapunov.hpp"
#include "qjsr/mdp.hpp"
#include "qjsr/rng.hpp"
#include "qjsr/switching.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

// ===========================================================================
// Trajectory record
// ===========================================================================

/// One realized run. thetas has steps+1 entries; every per-step record has
/// one entry per update. `modes` (and `mode_words`) are filled only when a
/// fixed point was supplied, since the realized mode linearizes the update
/// around it. `status` is `converged` for a run that completed all steps
/// and `diverged` when the blowup guard tripped (the trajectory then ends
/// at the diverging iterate).
struct Trajectory {
  RunKind kind = RunKind::deterministic;
  FamilyKind variant = FamilyKind::direct;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::vector<Vector> thetas;
  std::vector<StochasticPolicy> modes;
  /// Enumeration index of the realized mode when it is deterministic, else -1.
  std::vector<long long> mode_words;
  std::vector<Vector> noise_w;  ///< i.i.d. runs: w_k = ghat - g
  std::vector<Vector> xi;       ///< Markov runs: transition-reward noise
  std::vector<Vector> bias_b;   ///< Markov runs: coordinate-sampling bias
  std::vector<int> states;      ///< Markov runs: pair indices X_0..X_K

  std::optional<Vector> theta_star;
  SolveStatus status = SolveStatus::converged;
  long divergence_index = -1;
};

namespace detail {

inline bool blown_up(const Vector& theta, double divergence_scale) {
  return !theta.allFinite() || theta.norm() > divergence_scale;
}

/// Enumeration index of a deterministic stochastic policy, or -1.
inline long long policy_word(const Problem& p, const StochasticPolicy& mu) {
  if (!mu.deterministic(0.0)) return -1;
  long long word = 0;
  for (int s = 0; s < p.n_states; ++s) {
    int action = 0;
    mu.prob.row(s).maxCoeff(&action);
    word = word * p.n_actions + action;
  }
  return word;
}

inline void record_mode(const Problem& p, Trajectory& traj,
                        const Vector& theta) {
  if (!traj.theta_star.has_value()) return;
  StochasticPolicy mu = linearize_max(p, theta, *traj.theta_star);
  traj.mode_words.push_back(policy_word(p, mu));
  traj.modes.push_back(std::move(mu));
}

inline void check_step_identity(const Vector& actual, const Vector& reference,
                                const std::string& what) {
  const double scale = 1.0 + actual.lpNorm<Eigen::Infinity>();
  if ((actual - reference).lpNorm<Eigen::Infinity>() > 1e-12 * scale) {
    throw ValidationError("step decomposition identity violated: " + what);
  }
}

}  // namespace detail

// ===========================================================================
// Single steps
// ===========================================================================

/// One i.i.d.-sampled update: (s,a) ~ d, s' ~ P(.|s,a). The update equals
/// the mean map plus alpha times the recorded zero-mean noise, verified to
/// 1e-12 * scale.
struct IidStep {
  Vector theta_next;
  int pair = -1;
  int next_state = -1;
  double reward = 0.0;
  Vector ghat;
  Vector w;
};

inline IidStep step_iid(const Problem& p, const Vector& theta,
                        const CounterRng& rng, std::uint64_t step) {
  IidStep out;
  out.pair = sample_index(p.sampling, rng.uniform(step, 0));
  out.next_state = sample_index(p.transitions.row(out.pair).transpose(),
                                rng.uniform(step, 1));
  out.reward = p.rewards(out.pair, out.next_state);

  const ValueMax vm = value_max(p, theta);
  const double value_here = p.features.row(out.pair) * theta;
  const double target =
      out.reward + p.gamma * vm.v(out.next_state) - value_here;
  out.ghat = target * p.features.row(out.pair).transpose();
  out.w = out.ghat - residual_g(p, theta);
  out.theta_next = theta + p.alpha * (out.ghat - p.eta * theta);

  detail::check_step_identity(
      out.theta_next,
      step_map(p, theta, p.alpha, p.eta) + p.alpha * out.w,
      "i.i.d. update");
  return out;
}

/// One single-trajectory update at the current pair X: s' ~ P(.|X),
/// a' ~ behavior(.|s'). The next action only advances the chain; the update
/// itself uses the greedy value at s'. Decomposes exactly (to 1e-12 * scale)
/// into the mean map plus alpha * (bias + noise).
struct MarkovStep {
  Vector theta_next;
  int pair = -1;
  int next_state = -1;
  int next_action = -1;
  int next_pair = -1;
  double reward = 0.0;
  Vector xi;
  Vector bias_b;
};

inline MarkovStep step_markov(const Problem& p, const BehaviorModel& behavior,
                              int X, const Vector& theta,
                              const CounterRng& rng, std::uint64_t step) {
  if (X < 0 || X >= p.pair_count()) {
    throw ValidationError("state-action index out of range");
  }
  MarkovStep out;
  out.pair = X;
  out.next_state = sample_index(p.transitions.row(X).transpose(),
                                rng.uniform(step, 0));
  out.next_action =
      sample_index(behavior.behavior.row(out.next_state).transpose(),
                   rng.uniform(step, 1));
  out.next_pair = p.index_of(out.next_state, out.next_action);
  out.reward = p.rewards(X, out.next_state);

  const ValueMax vm = value_max(p, theta);
  const ExpectedReward er = expected_reward(p);
  const Vector phi = p.features.row(X).transpose();
  const double value_here = p.features.row(X) * theta;
  const double expected_next = p.transitions.row(X) * vm.v;

  const double target = out.reward + p.gamma * vm.v(out.next_state) - value_here;
  out.theta_next = theta + p.alpha * (target * phi - p.eta * theta);

  out.xi = phi * ((out.reward - er.R(X)) +
                  p.gamma * (vm.v(out.next_state) - expected_next));
  const double delta_here = er.R(X) + p.gamma * expected_next - value_here;
  out.bias_b = phi * delta_here - residual_g(p, theta);

  detail::check_step_identity(
      out.theta_next,
      step_map(p, theta, p.alpha, p.eta) + p.alpha * out.bias_b +
          p.alpha * out.xi,
      "single-trajectory update");
  return out;
}

// ===========================================================================
// Runs
// ===========================================================================

/// Mean-map recursion theta <- T(theta). When theta_star is supplied, each
/// step's realized mode is recorded and the switched replay
/// x_{k+1} = A_{mu_k} x_k is verified against the iterate.
inline Trajectory run_deterministic(const Problem& p, const Vector& theta0,
                                    int steps,
                                    std::optional<Vector> theta_star =
                                        std::nullopt) {
  if (steps < 1) throw ValidationError("step count must be at least 1");
  Trajectory traj;
  traj.kind = RunKind::deterministic;
  traj.variant = p.eta > 0.0 ? FamilyKind::regularized : FamilyKind::direct;
  traj.theta_star = std::move(theta_star);

  Vector theta = theta0;
  traj.thetas.push_back(theta);
  const double divergence_scale = 1e12 * (1.0 + theta.norm());

  for (int k = 0; k < steps; ++k) {
    detail::record_mode(p, traj, theta);
    const Vector next = step_map(p, theta, p.alpha, p.eta);

    if (traj.theta_star.has_value()) {
      const Vector& star = *traj.theta_star;
      const Matrix mode = mode_matrix(p, traj.modes.back(), p.alpha, p.eta);
      const Vector replay = star + mode * (theta - star);
      const double scale = 1.0 + next.lpNorm<Eigen::Infinity>() +
                           star.lpNorm<Eigen::Infinity>();
      if ((next - replay).lpNorm<Eigen::Infinity>() > 1e-12 * scale) {
        throw ValidationError(
            "switched replay mismatch at step " + std::to_string(k));
      }
    }

    theta = next;
    traj.thetas.push_back(theta);
    if (detail::blown_up(theta, divergence_scale)) {
      traj.status = SolveStatus::diverged;
      traj.divergence_index = k + 1;
      return traj;
    }
  }
  return traj;
}

/// I.i.d.-sampled run with counter-based draws: update k uses step counter
/// k+1 (0 is reserved for initialization draws).
inline Trajectory run_iid(const Problem& p, const Vector& theta0, int steps,
                          std::uint64_t seed, std::uint64_t stream = 0,
                          std::optional<Vector> theta_star = std::nullopt) {
  if (steps < 1) throw ValidationError("step count must be at least 1");
  Trajectory traj;
  traj.kind = RunKind::iid;
  traj.variant = p.eta > 0.0 ? FamilyKind::regularized : FamilyKind::direct;
  traj.seed = seed;
  traj.stream = stream;
  traj.theta_star = std::move(theta_star);

  const CounterRng rng{seed, stream};
  Vector theta = theta0;
  traj.thetas.push_back(theta);
  const double divergence_scale = 1e12 * (1.0 + theta.norm());

  for (int k = 0; k < steps; ++k) {
    detail::record_mode(p, traj, theta);
    IidStep step = step_iid(p, theta, rng, static_cast<std::uint64_t>(k) + 1);
    traj.noise_w.push_back(std::move(step.w));
    theta = std::move(step.theta_next);
    traj.thetas.push_back(theta);
    if (detail::blown_up(theta, divergence_scale)) {
      traj.status = SolveStatus::diverged;
      traj.divergence_index = k + 1;
      return traj;
    }
  }
  return traj;
}

/// Derived single-trajectory model: the chain over state-action pairs
/// induced by the behavior policy (the problem's own, or uniform when none
/// is set), with the sampling distribution replaced by the chain's
/// stationary law so the mean map matches what the trajectory averages.
struct MarkovModel {
  Problem problem;
  BehaviorModel behavior;
};

inline MarkovModel markov_problem(const Problem& p) {
  const Matrix beh =
      p.behavior.size() > 0 ? p.behavior : uniform_behavior(p);
  BehaviorModel bm = stationary_distribution(p, beh);
  Problem derived = p;
  derived.behavior = beh;
  derived.sampling = bm.stationary;
  return MarkovModel{std::move(derived), std::move(bm)};
}

/// Single-trajectory run on the problem's own sampling distribution (pass
/// the derived problem from markov_problem to match the stationary-law
/// theorems). X_0 is drawn from the chain's stationary distribution with
/// the reserved step-0 counter.
inline Trajectory run_markov(const Problem& p, const BehaviorModel& behavior,
                             const Vector& theta0, int steps,
                             std::uint64_t seed, std::uint64_t stream = 0,
                             std::optional<Vector> theta_star = std::nullopt) {
  if (steps < 1) throw ValidationError("step count must be at least 1");
  Trajectory traj;
  traj.kind = RunKind::markov;
  traj.variant = p.eta > 0.0 ? FamilyKind::regularized : FamilyKind::direct;
  traj.seed = seed;
  traj.stream = stream;
  traj.theta_star = std::move(theta_star);

  const CounterRng rng{seed, stream};
  Vector theta = theta0;
  traj.thetas.push_back(theta);
  const double divergence_scale = 1e12 * (1.0 + theta.norm());

  int X = sample_index(behavior.stationary, rng.uniform(0, 0));
  traj.states.push_back(X);

  for (int k = 0; k < steps; ++k) {
    detail::record_mode(p, traj, theta);
    MarkovStep step = step_markov(p, behavior, X, theta, rng,
                                  static_cast<std::uint64_t>(k) + 1);
    traj.xi.push_back(std::move(step.xi));
    traj.bias_b.push_back(std::move(step.bias_b));
    X = step.next_pair;
    traj.states.push_back(X);
    theta = std::move(step.theta_next);
    traj.thetas.push_back(theta);
    if (detail::blown_up(theta, divergence_scale)) {
      traj.status = SolveStatus::diverged;
      traj.divergence_index = k + 1;
      return traj;
    }
  }
  return traj;
}

// ===========================================================================
// Ensembles
// ===========================================================================

namespace detail {

/// Order-independent pairwise summation over [lo, hi) with a fixed tree.
inline double pairwise_sum(const std::vector<double>& values, std::size_t lo,
                           std::size_t hi) {
  if (hi - lo <= 8) {
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += values[i];
    return sum;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(values, lo, mid) + pairwise_sum(values, mid, hi);
}

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
};

/// Two-pass mean and standard error with pairwise reductions.
inline MeanSem mean_sem(std::vector<double>& scratch,
                        const std::vector<double>& values) {
  const std::size_t n = values.size();
  MeanSem out;
  if (n == 0) return out;
  out.mean = pairwise_sum(values, 0, n) / static_cast<double>(n);
  if (n == 1) return out;
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double centered = values[i] - out.mean;
    scratch[i] = centered * centered;
  }
  const double variance =
      pairwise_sum(scratch, 0, n) / static_cast<double>(n - 1);
  out.sem = std::sqrt(variance / static_cast<double>(n));
  return out;
}

}  // namespace detail

/// Ensemble statistics: per-step means (and standard errors of the mean) of
/// the Euclidean error and, when a certificate is available, of the
/// certificate-norm error, with the matching closed-form envelope attached
/// for overlay. Diverged runs are counted and excluded from the statistics.
struct EnsembleSummary {
  RunKind kind = RunKind::deterministic;
  int n_runs = 0;
  int steps = 0;
  std::uint64_t seed = 0;

  bool has_error_stats = false;
  Vector theta_star;
  std::vector<double> mean_err;  ///< mean ||theta_k - theta*||_2
  std::vector<double> sem_err;
  bool has_p_stats = false;
  std::vector<double> mean_p;    ///< mean p(theta_k - theta*)
  std::vector<double> sem_p;
  std::optional<Envelope> envelope;
  int diverged_runs = 0;
};

/// Run n_runs independent trajectories (stream = run index) and reduce.
/// For the markov kind the runs use the derived stationary-sampling problem
/// so that the recorded errors match the single-trajectory theorems. The
/// fixed point for error recording is taken from theta_star when supplied,
/// and otherwise solved to 1e-12 only when the certificate certifies
/// contraction; without either, error recording is disabled.
inline EnsembleSummary run_ensemble(
    const Problem& p, RunKind kind, int n_runs, int steps, std::uint64_t seed,
    const LyapunovCert* cert = nullptr,
    std::optional<Vector> theta_star = std::nullopt,
    std::optional<Vector> theta0 = std::nullopt) {
  if (n_runs < 1) throw ValidationError("ensemble needs at least one run");
  if (steps < 1) throw ValidationError("step count must be at least 1");

  std::optional<MarkovModel> markov;
  if (kind == RunKind::markov) markov = markov_problem(p);
  const Problem& pe = markov.has_value() ? markov->problem : p;

  EnsembleSummary summary;
  summary.kind = kind;
  summary.n_runs = n_runs;
  summary.steps = steps;
  summary.seed = seed;

  const Vector start =
      theta0.has_value() ? *theta0 : Vector::Zero(pe.feature_dim);

  std::optional<Vector> star = std::move(theta_star);
  if (!star.has_value() && cert != nullptr && cert->valid) {
    const MapKind map_kind = pe.eta > 0.0 ? MapKind::reg_dlq : MapKind::dlq;
    const FixedPointReport fp =
        solve_fixed_point(pe, map_kind, 1e-12, 200000, cert->view());
    if (fp.status == SolveStatus::converged) star = fp.theta_star;
  }
  summary.has_error_stats = star.has_value();
  summary.has_p_stats = star.has_value() && cert != nullptr;
  if (star.has_value()) summary.theta_star = *star;

  const std::size_t columns = static_cast<std::size_t>(steps) + 1;
  std::vector<std::vector<double>> err_runs;
  std::vector<std::vector<double>> p_runs;
  if (summary.has_error_stats) {
    err_runs.assign(columns, {});
    if (summary.has_p_stats) p_runs.assign(columns, {});
  }

  for (int run = 0; run < n_runs; ++run) {
    Trajectory traj;
    switch (kind) {
      case RunKind::deterministic:
        traj = run_deterministic(pe, start, steps);
        break;
      case RunKind::iid:
        traj = run_iid(pe, start, steps, seed,
                       static_cast<std::uint64_t>(run));
        break;
      case RunKind::markov:
        traj = run_markov(pe, markov->behavior, start, steps, seed,
                          static_cast<std::uint64_t>(run));
        break;
    }
    if (traj.status == SolveStatus::diverged) {
      ++summary.diverged_runs;
      continue;
    }
    if (!summary.has_error_stats) continue;
    for (std::size_t k = 0; k < columns; ++k) {
      const Vector x = traj.thetas[k] - *star;
      err_runs[k].push_back(x.norm());
      if (summary.has_p_stats) p_runs[k].push_back(lyap_p(*cert, x));
    }
  }

  if (summary.has_error_stats) {
    summary.mean_err.resize(columns);
    summary.sem_err.resize(columns);
    std::vector<double> scratch;
    for (std::size_t k = 0; k < columns; ++k) {
      const detail::MeanSem stats = detail::mean_sem(scratch, err_runs[k]);
      summary.mean_err[k] = stats.mean;
      summary.sem_err[k] = stats.sem;
    }
    if (summary.has_p_stats) {
      summary.mean_p.resize(columns);
      summary.sem_p.resize(columns);
      for (std::size_t k = 0; k < columns; ++k) {
        const detail::MeanSem stats = detail::mean_sem(scratch, p_runs[k]);
        summary.mean_p[k] = stats.mean;
        summary.sem_p[k] = stats.sem;
      }
    }
  }

  if (star.has_value() && cert != nullptr) {
    const BoundInputs inputs = make_bound_inputs(pe, *cert, *star);
    const Vector x0 = start - *star;
    const double x0_p = lyap_p(*cert, x0);
    const double x0_norm = x0.norm();
    switch (kind) {
      case RunKind::deterministic:
        summary.envelope = det_envelope(inputs, x0_p, x0_norm, steps);
        break;
      case RunKind::iid:
        summary.envelope = iid_envelope(inputs, x0_p, x0_norm, steps);
        break;
      case RunKind::markov:
        summary.envelope = markov_envelope(inputs, x0_p, x0_norm, steps);
        break;
    }
  }
  return summary;
}

}  // namespace qjsr
