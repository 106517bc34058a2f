#pragma once

// Built-in worked examples. Each preset is a fully validated problem; the
// registry is fixed and the CLI resolves `--preset NAME` through it.

#include <string>
#include <vector>

#include "qjsr/mdp.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

namespace detail {

/// Two-state, one-action chain with features (1, -10): the mean recursion
/// contracts (coefficient 0) while projected value iteration diverges.
inline Problem preset_elq_converges() {
  Problem p;
  p.n_states = 2;
  p.n_actions = 1;
  p.feature_dim = 1;
  p.transitions = Matrix(2, 2);
  p.transitions << 0.0, 1.0, 0.0, 1.0;
  p.rewards = Matrix::Zero(2, 2);
  p.sampling = Vector(2);
  p.sampling << 0.99, 0.01;
  p.features = Matrix(2, 1);
  p.features << 1.0, -10.0;
  p.gamma = 0.9;
  p.alpha = 0.1;
  p.eta = 0.0;
  return p;
}

/// One-state, one-action chain with feature 10: projected value iteration
/// contracts (multiplier 0.9) while the mean recursion diverges
/// (multiplier -4).
inline Problem preset_pqvi_converges() {
  Problem p;
  p.n_states = 1;
  p.n_actions = 1;
  p.feature_dim = 1;
  p.transitions = Matrix::Constant(1, 1, 1.0);
  p.rewards = Matrix::Zero(1, 1);
  p.sampling = Vector::Constant(1, 1.0);
  p.features = Matrix::Constant(1, 1, 10.0);
  p.gamma = 0.9;
  p.alpha = 0.5;
  p.eta = 0.0;
  return p;
}

/// Three-state, two-action problem with three features whose eight mode
/// norms all sit below 0.968; the stock example for certificates.
inline Problem preset_example_3d() {
  Problem p;
  p.n_states = 3;
  p.n_actions = 2;
  p.feature_dim = 3;
  p.transitions = Matrix(6, 3);
  p.transitions << 0.732545, 0.012245, 0.255210,  //
      0.6359, 0.2104, 0.1537,                     //
      0.5133, 0.1950, 0.2917,                     //
      0.4722, 0.0379, 0.4899,                     //
      0.0023, 0.8670, 0.1307,                     //
      0.7437, 0.0553, 0.2010;
  p.rewards = Matrix::Zero(6, 3);
  p.sampling = Vector(6);
  p.sampling << 0.159545, 0.019845, 0.147996, 0.222814, 0.215545, 0.234255;
  p.features = Matrix(6, 3);
  p.features << -0.0957, -0.3996, -0.5050,  //
      0.0242, 0.1328, 0.1858,               //
      0.7378, 0.4582, 0.0919,               //
      -0.4882, 0.5305, 0.2531,              //
      -0.2158, -0.1461, -0.2595,            //
      0.4013, 0.5568, -0.7554;
  p.gamma = 0.7965;
  p.alpha = 0.9;
  p.eta = 0.0;
  return p;
}

/// One-state, two-action problem whose two modes have norms 0.397 and
/// 1.304: a norm above one, yet every trajectory converges.
inline Problem preset_example_jsr_gt1() {
  Problem p;
  p.n_states = 1;
  p.n_actions = 2;
  p.feature_dim = 1;
  p.transitions = Matrix::Constant(2, 1, 1.0);
  p.rewards = Matrix::Zero(2, 1);
  p.sampling = Vector(2);
  p.sampling << 0.9, 0.1;
  p.features = Matrix(2, 1);
  p.features << 1.0, -2.0;
  p.gamma = 0.9;
  p.alpha = 0.9;
  p.eta = 0.0;
  return p;
}

/// The projected-iteration example with ridge weight 1: the regularized
/// projected iteration contracts (multiplier 90/101) while the regularized
/// mean recursion diverges (multiplier -4.5).
inline Problem preset_reg_rpvi_converges() {
  Problem p = preset_pqvi_converges();
  p.eta = 1.0;
  return p;
}

/// The mean-recursion example with ridge weight 1: the regularized mean
/// recursion contracts (multiplier -0.1) while the regularized projected
/// iteration diverges (multiplier -8.01/2.99).
inline Problem preset_reg_dlq_converges() {
  Problem p = preset_elq_converges();
  p.eta = 1.0;
  return p;
}

/// Two-state, one-action problem whose unregularized mode has norm 1.62;
/// ridge weight 20 moves it to -0.38.
inline Problem preset_example_eta20() {
  Problem p;
  p.n_states = 2;
  p.n_actions = 1;
  p.feature_dim = 1;
  p.transitions = Matrix(2, 2);
  p.transitions << 0.0, 1.0, 0.0, 1.0;
  p.rewards = Matrix::Zero(2, 2);
  p.sampling = Vector(2);
  p.sampling << 0.9, 0.1;
  p.features = Matrix(2, 1);
  p.features << 1.0, 10.0;
  p.gamma = 0.9;
  p.alpha = 0.1;
  p.eta = 20.0;
  return p;
}

/// The two-mode problem at discount 0.5: from theta0 = -2 the mean
/// recursion visits (-2, 1.6, 0.232, 0.03364) switching through modes
/// (2, 1, 1).
inline Problem preset_example_trajectory() {
  Problem p = preset_example_jsr_gt1();
  p.gamma = 0.5;
  return p;
}

}  // namespace detail

/// Fixed preset registry order.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "elq-converges",     "pqvi-converges",     "example-3d",
      "example-jsr-gt1",   "reg-rpvi-converges", "reg-dlq-converges",
      "example-eta20",     "example-trajectory",
  };
  return names;
}

/// Resolve a preset by registry name; throws ValidationError on unknown
/// names. Every returned problem passes validation.
inline Problem preset_problem(const std::string& name) {
  Problem p;
  if (name == "elq-converges") {
    p = detail::preset_elq_converges();
  } else if (name == "pqvi-converges") {
    p = detail::preset_pqvi_converges();
  } else if (name == "example-3d") {
    p = detail::preset_example_3d();
  } else if (name == "example-jsr-gt1") {
    p = detail::preset_example_jsr_gt1();
  } else if (name == "reg-rpvi-converges") {
    p = detail::preset_reg_rpvi_converges();
  } else if (name == "reg-dlq-converges") {
    p = detail::preset_reg_dlq_converges();
  } else if (name == "example-eta20") {
    p = detail::preset_example_eta20();
  } else if (name == "example-trajectory") {
    p = detail::preset_example_trajectory();
  } else {
    throw ValidationError("unknown preset: " + name);
  }
  validate_problem(p);
  return p;
}

}  // namespace qjsr
