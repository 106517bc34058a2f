#pragma once

// Bounded-depth joint-spectral-radius brackets over a mode family,
// extremal-product witnesses, divergence witnesses, the ridge rescaling
// identity, and the closed-form regularization-dependent Euclidean bounds.
//
// Word convention: a word (w1, ..., wk) lists mode indices in application
// order (w1 applied first), so its product matrix is A_{wk} ... A_{w1}.
// Words of equal depth are enumerated lexicographically.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qjsr/spectral.hpp"
#include "qjsr/switching.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

inline constexpr long long kProductCap = 10'000'000;

// ===========================================================================
// Bracket
// ===========================================================================

/// Per-depth and overall enclosure of the joint spectral radius:
///   lower_k = max_{|w|=k} rho(A_w)^{1/k}   (always a valid lower bound)
///   upper_k = max_{|w|=k} ||A_w||_2^{1/k}  (valid when depth k is exhaustive)
struct JsrBracket {
  struct DepthRow {
    int k = 0;
    double upper_k = 0.0;
    double lower_k = 0.0;
    bool exhaustive = true;  ///< false when pruning skipped words here
  };

  std::vector<DepthRow> per_depth;
  double upper = 0.0;  ///< min over exhaustive depths of upper_k
  double lower = 0.0;  ///< max over depths of lower_k
  std::vector<int> witness_upper;  ///< lexicographically-smallest word achieving upper
  std::vector<int> witness_lower;  ///< lexicographically-smallest word achieving lower
  long long products_evaluated = 0;
  bool pruned = false;
};

struct JsrOptions {
  int max_depth = 6;
  bool prune = false;
  long long product_cap = kProductCap;
};

namespace detail {

struct BracketAccumulator {
  std::vector<double> upper_pow;  ///< max product norm per depth (unnormalized)
  std::vector<double> lower_pow;  ///< max product spectral radius per depth
  std::vector<std::vector<int>> upper_word;
  std::vector<std::vector<int>> lower_word;
  std::vector<bool> exhaustive;
  double best_lower = 0.0;  ///< current max of lower_pow[k]^{1/k}
  long long products = 0;
};

inline void bracket_dfs(const std::vector<Matrix>& modes, int depth,
                        int max_depth, const Matrix& partial,
                        std::vector<int>& word, double max_mode_norm,
                        const JsrOptions& opts, BracketAccumulator& acc) {
  const int next_depth = depth + 1;
  for (int i = 0; i < static_cast<int>(modes.size()); ++i) {
    if (++acc.products > opts.product_cap) {
      throw CapExceeded("matrix product cap exceeded: more than " +
                        std::to_string(opts.product_cap) + " products");
    }
    // New letter is applied after everything in `partial`, hence the left
    // multiplication.
    const Matrix product = modes[static_cast<std::size_t>(i)] * partial;
    word.push_back(i);

    const double norm = spectral_norm(product);
    const double rho = spectral_radius(product);
    auto& up = acc.upper_pow[static_cast<std::size_t>(next_depth)];
    auto& lo = acc.lower_pow[static_cast<std::size_t>(next_depth)];
    if (norm > up) {
      up = norm;
      acc.upper_word[static_cast<std::size_t>(next_depth)] = word;
    }
    if (rho > lo) {
      lo = rho;
      acc.lower_word[static_cast<std::size_t>(next_depth)] = word;
    }
    acc.best_lower = std::max(
        acc.best_lower, std::pow(rho, 1.0 / static_cast<double>(next_depth)));

    if (next_depth < max_depth) {
      bool descend = true;
      if (opts.prune) {
        // Every extension of this word to depth k has product norm at most
        // ||product|| * max_mode_norm^{k - next_depth}; when that cannot
        // reach the current best lower bound at any remaining depth, the
        // subtree can affect neither lower_k nor the bracket, so skip it
        // and mark the deeper depths non-exhaustive.
        bool useful = false;
        double extension_norm = norm;
        for (int k = next_depth + 1; k <= max_depth; ++k) {
          extension_norm *= max_mode_norm;
          if (std::pow(extension_norm, 1.0 / static_cast<double>(k)) >=
              acc.best_lower) {
            useful = true;
            break;
          }
        }
        if (!useful) {
          descend = false;
          for (int k = next_depth + 1; k <= max_depth; ++k) {
            acc.exhaustive[static_cast<std::size_t>(k)] = false;
          }
        }
      }
      if (descend) {
        bracket_dfs(modes, next_depth, max_depth, product, word, max_mode_norm,
                    opts, acc);
      }
    }
    word.pop_back();
  }
}

}  // namespace detail

/// Depth-bounded bracket of the joint spectral radius of a family.
/// Without pruning the total product count is checked against the cap in
/// advance; with pruning the cap guards the evaluated count.
inline JsrBracket jsr_bracket(const ModeFamily& family,
                              JsrOptions opts = JsrOptions{}) {
  if (opts.max_depth < 1) {
    throw ValidationError("bracket depth must be at least 1");
  }
  const long long n_modes = static_cast<long long>(family.modes.size());
  if (n_modes == 0) throw ValidationError("mode family is empty");

  if (!opts.prune) {
    long long total = 0;
    long long level = 1;
    for (int k = 1; k <= opts.max_depth; ++k) {
      if (level > opts.product_cap / n_modes) {
        throw CapExceeded(
            "matrix product cap exceeded at depth " + std::to_string(k) +
            ": raise the cap, lower the depth, or enable pruning");
      }
      level *= n_modes;
      total += level;
      if (total > opts.product_cap) {
        throw CapExceeded(
            "matrix product cap exceeded at depth " + std::to_string(k) +
            ": raise the cap, lower the depth, or enable pruning");
      }
    }
  }

  detail::BracketAccumulator acc;
  const std::size_t rows = static_cast<std::size_t>(opts.max_depth) + 1;
  acc.upper_pow.assign(rows, 0.0);
  acc.lower_pow.assign(rows, 0.0);
  acc.upper_word.assign(rows, {});
  acc.lower_word.assign(rows, {});
  acc.exhaustive.assign(rows, true);

  double max_mode_norm = 0.0;
  for (const auto& mode : family.modes) {
    max_mode_norm = std::max(max_mode_norm, spectral_norm(mode));
  }

  std::vector<int> word;
  word.reserve(static_cast<std::size_t>(opts.max_depth));
  const Matrix identity = Matrix::Identity(family.dim, family.dim);
  detail::bracket_dfs(family.modes, 0, opts.max_depth, identity, word,
                      max_mode_norm, opts, acc);

  JsrBracket bracket;
  bracket.products_evaluated = acc.products;
  bracket.per_depth.reserve(static_cast<std::size_t>(opts.max_depth));
  bool have_upper = false;
  for (int k = 1; k <= opts.max_depth; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    JsrBracket::DepthRow row;
    row.k = k;
    row.upper_k = std::pow(acc.upper_pow[ks], 1.0 / static_cast<double>(k));
    row.lower_k = std::pow(acc.lower_pow[ks], 1.0 / static_cast<double>(k));
    row.exhaustive = acc.exhaustive[ks];
    if (!row.exhaustive) bracket.pruned = true;
    bracket.per_depth.push_back(row);

    if (row.exhaustive && (!have_upper || row.upper_k < bracket.upper)) {
      bracket.upper = row.upper_k;
      bracket.witness_upper = acc.upper_word[ks];
      have_upper = true;
    }
    if (k == 1 || row.lower_k > bracket.lower) {
      bracket.lower = row.lower_k;
      bracket.witness_lower = acc.lower_word[ks];
    }
  }
  return bracket;
}

// ===========================================================================
// Divergence witness
// ===========================================================================

/// A periodically switched divergent trajectory: repeat `word`, starting
/// from `initial` (dominant eigenvector direction of the word's product).
struct DivergenceWitness {
  std::vector<int> word;
  double rho = 0.0;              ///< rho(A_word)^{1/|word|} > 1
  Vector initial;
};

/// Extract a divergence witness from a bracket when its lower bound
/// exceeds one; otherwise nothing.
inline std::optional<DivergenceWitness> divergence_witness(
    const ModeFamily& family, const JsrBracket& bracket) {
  if (!(bracket.lower > 1.0) || bracket.witness_lower.empty()) {
    return std::nullopt;
  }
  DivergenceWitness witness;
  witness.word = bracket.witness_lower;
  Matrix product = Matrix::Identity(family.dim, family.dim);
  for (const int letter : witness.word) {
    product = family.modes[static_cast<std::size_t>(letter)] * product;
  }
  witness.rho = std::pow(spectral_radius(product),
                         1.0 / static_cast<double>(witness.word.size()));
  witness.initial = dominant_eigenvector(product);
  return witness;
}

// ===========================================================================
// Ridge rescaling identity
// ===========================================================================

/// Per-word comparison of the ridge family against the rescaled
/// unregularized family: for alpha*eta != 1,
///   A^eta_w = (1 - alpha eta)^{|w|} B_w  with B drawn from the family at
/// effective step alpha / (1 - alpha eta); at alpha*eta = 1 each ridge mode
/// equals -alpha times its drift matrix.
struct RescalingReport {
  bool critical = false;        ///< alpha*eta treated as exactly 1
  double scale_factor = 0.0;    ///< |1 - alpha eta| (0 in the critical case)
  long long words_checked = 0;
  double max_rel_defect = 0.0;
  bool ok = false;              ///< max_rel_defect <= 1e-12
};

inline RescalingReport reg_rescaling_check(const Problem& p, double alpha,
                                           double eta, int depth,
                                           long long cap = kProductCap) {
  RescalingReport report;
  const double one_minus = 1.0 - alpha * eta;
  report.critical = std::abs(one_minus) <= 1e-15;
  report.scale_factor = report.critical ? 0.0 : std::abs(one_minus);

  const ModeFamily ridge = build_family(p, alpha, eta);

  if (report.critical) {
    // A^eta_pi = -alpha (Phi^T D Phi - gamma Phi^T D P Pi Phi).
    const ProjectionCache cache = build_projection_cache(p);
    const auto policies = enumerate_policies(p);
    for (std::size_t i = 0; i < policies.size(); ++i) {
      const Matrix drift =
          cache.M - p.gamma * (cache.N * detail::selected_features(p, policies[i]));
      const Matrix expected = -alpha * drift;
      const double scale = std::max(1.0, ridge.modes[i].norm());
      const double defect = (ridge.modes[i] - expected).norm() / scale;
      report.max_rel_defect = std::max(report.max_rel_defect, defect);
      ++report.words_checked;
    }
    report.ok = report.max_rel_defect <= 1e-12;
    return report;
  }

  const ModeFamily base = build_family(p, alpha / one_minus, 0.0);
  const long long n_modes = static_cast<long long>(ridge.modes.size());

  // Depth-first over all words up to `depth`, tracking both partial
  // products in lockstep.
  struct Frame {
    Matrix ridge_product;
    Matrix base_product;
    int depth;
  };
  std::vector<Frame> stack;
  stack.push_back({Matrix::Identity(p.feature_dim, p.feature_dim),
                   Matrix::Identity(p.feature_dim, p.feature_dim), 0});
  long long budget = cap;
  while (!stack.empty()) {
    const Frame frame = stack.back();
    stack.pop_back();
    if (frame.depth == depth) continue;
    double level_scale = one_minus;
    for (int d = 0; d < frame.depth; ++d) level_scale *= one_minus;
    for (long long i = n_modes - 1; i >= 0; --i) {
      if (--budget < 0) {
        throw CapExceeded("rescaling check product cap exceeded");
      }
      Frame next;
      next.ridge_product =
          ridge.modes[static_cast<std::size_t>(i)] * frame.ridge_product;
      next.base_product =
          base.modes[static_cast<std::size_t>(i)] * frame.base_product;
      next.depth = frame.depth + 1;
      const Matrix expected = level_scale * next.base_product;
      const double scale = std::max(1.0, next.ridge_product.norm());
      const double defect = (next.ridge_product - expected).norm() / scale;
      report.max_rel_defect = std::max(report.max_rel_defect, defect);
      ++report.words_checked;
      stack.push_back(std::move(next));
    }
  }
  report.ok = report.max_rel_defect <= 1e-12;
  return report;
}

// ===========================================================================
// Drift constants and closed-form Euclidean bounds
// ===========================================================================

/// Extremal constants of the per-policy drift matrices
/// drift_pi = Phi^T D Phi - gamma Phi^T D P Pi^pi Phi.
struct DriftConstants {
  double c_Phi = 0.0;      ///< min over pi of lambda_min of the symmetric part
  double L_Phi = 0.0;      ///< max over pi of ||drift_pi||_2
  double L_Phi_eta = 0.0;  ///< max over pi of ||drift_pi + eta I||_2
};

inline DriftConstants drift_constants(const Problem& p, double eta,
                                      long long cap = kPolicyCap) {
  const ProjectionCache cache = build_projection_cache(p);
  const auto policies = enumerate_policies(p, cap);
  const Matrix identity = Matrix::Identity(p.feature_dim, p.feature_dim);

  DriftConstants out;
  bool first = true;
  for (const auto& pol : policies) {
    const Matrix drift =
        cache.M - p.gamma * (cache.N * detail::selected_features(p, pol));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(
        0.5 * (drift + drift.transpose()));
    const double lambda_min = eig.eigenvalues()(0);
    const double norm = spectral_norm(drift);
    const double norm_eta = spectral_norm(drift + eta * identity);
    if (first) {
      out.c_Phi = lambda_min;
      out.L_Phi = norm;
      out.L_Phi_eta = norm_eta;
      first = false;
    } else {
      out.c_Phi = std::min(out.c_Phi, lambda_min);
      out.L_Phi = std::max(out.L_Phi, norm);
      out.L_Phi_eta = std::max(out.L_Phi_eta, norm_eta);
    }
  }
  return out;
}

/// Closed-form Euclidean bounds on the ridge-family joint spectral radius
/// and the associated step-size conditions. Radicands are clipped at zero
/// with a flag (they are nonnegative whenever the bounds apply).
struct RegBounds {
  DriftConstants constants;
  double alpha = 0.0;
  double eta = 0.0;

  double restricted = 0.0;  ///< sqrt((1-ae)^2 - 2a(1-ae) c + a^2 L^2)
  bool restricted_applicable = false;  ///< requires 0 <= alpha*eta <= 1
  bool restricted_clipped = false;

  double sharp = 0.0;  ///< sqrt(1 - 2a(c+eta) + a^2 L_eta^2)
  bool sharp_clipped = false;

  double conservative = 0.0;  ///< sqrt(1 - 2a(c+eta) + a^2 (L+eta)^2)
  bool conservative_clipped = false;

  bool step_condition_restricted = false;
  bool step_condition_all_eta = false;
};

namespace detail {

inline double clipped_sqrt(double radicand, bool& clipped) {
  if (radicand < 0.0) {
    clipped = true;
    return 0.0;
  }
  return std::sqrt(radicand);
}

/// 0 < alpha and 1 - 2 alpha margin + alpha^2 quad < 1, i.e.
/// alpha < 2 margin / quad (any alpha when quad <= 0 and margin > 0).
inline bool step_condition(double alpha, double margin, double quad) {
  if (!(margin > 0.0) || !(alpha > 0.0)) return false;
  if (quad <= 0.0) return true;
  return alpha < 2.0 * margin / quad;
}

}  // namespace detail

inline RegBounds reg_euclidean_bounds(const Problem& p, double alpha,
                                      double eta) {
  RegBounds out;
  out.constants = drift_constants(p, eta);
  out.alpha = alpha;
  out.eta = eta;
  const double c = out.constants.c_Phi;
  const double L = out.constants.L_Phi;
  const double L_eta = out.constants.L_Phi_eta;
  const double ae = alpha * eta;

  out.restricted_applicable = ae >= 0.0 && ae <= 1.0;
  const double one_minus = 1.0 - ae;
  out.restricted = detail::clipped_sqrt(
      one_minus * one_minus - 2.0 * alpha * one_minus * c + alpha * alpha * L * L,
      out.restricted_clipped);

  out.sharp = detail::clipped_sqrt(
      1.0 - 2.0 * alpha * (c + eta) + alpha * alpha * L_eta * L_eta,
      out.sharp_clipped);

  const double L_plus = L + eta;
  out.conservative = detail::clipped_sqrt(
      1.0 - 2.0 * alpha * (c + eta) + alpha * alpha * L_plus * L_plus,
      out.conservative_clipped);

  out.step_condition_restricted =
      out.restricted_applicable &&
      detail::step_condition(alpha, c + eta, L * L + 2.0 * c * eta + eta * eta);
  out.step_condition_all_eta =
      detail::step_condition(alpha, c + eta, L_eta * L_eta);
  return out;
}

}  // namespace qjsr
