// Command-line front end: loads problems (files or presets), dispatches the
// analyses, and writes deterministic tabular outputs. Every emitted file
// embeds the fully resolved configuration so a run can be reproduced from
// its outputs alone.
//
// Exit codes: 0 success, 2 validation error, 3 non-converged or diverged
// iteration, 4 certificate refused or not accepted.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qjsr/bellman.hpp"
#include "qjsr/certificates.hpp"
#include "qjsr/io.hpp"
#include "qjsr/jsr.hpp"
#include "qjsr/lyapunov.hpp"
#include "qjsr/mdp.hpp"
#include "qjsr/presets.hpp"
#include "qjsr/rng.hpp"
#include "qjsr/simulate.hpp"
#include "qjsr/switching.hpp"
#include "qjsr/types.hpp"

namespace {

using nlohmann::json;

struct Opts {
  std::string problem_path;
  std::string preset;
  std::string out;
  std::string theta0_csv;
  std::string kind = "det";
  double alpha = 0.0;
  double eta = 0.0;
  double beta_eps = 0.975;
  double tol = 1e-12;
  int depth = 4;
  int jsr_depth = 6;
  int steps = 100;
  int runs = 1;
  int resolution = 64;
  std::uint64_t seed = 0;
  bool prune = false;
  bool radial = false;

  CLI::Option* alpha_opt = nullptr;
  CLI::Option* eta_opt = nullptr;
  CLI::Option* beta_opt = nullptr;
};

constexpr long kMaxIterations = 200000;
constexpr int kDriftPoints = 100;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct Resolved {
  qjsr::Problem problem;  ///< as loaded; alpha/eta overrides kept separate
  double alpha = 0.0;     ///< effective step size
  double eta = 0.0;       ///< effective ridge weight
  json config;
};

Resolved resolve(const Opts& o, const std::string& command) {
  if (o.preset.empty() == o.problem_path.empty()) {
    throw qjsr::ValidationError(
        "exactly one of --preset or --problem is required");
  }
  Resolved r;
  r.problem = o.preset.empty() ? qjsr::load_problem(o.problem_path)
                               : qjsr::preset_problem(o.preset);
  r.alpha = o.alpha_opt != nullptr && o.alpha_opt->count() > 0
                ? o.alpha
                : r.problem.alpha;
  r.eta = o.eta_opt != nullptr && o.eta_opt->count() > 0 ? o.eta
                                                         : r.problem.eta;
  if (!std::isfinite(r.alpha) || r.alpha < 0.0) {
    throw qjsr::ValidationError("step size override must be nonnegative");
  }
  if (!std::isfinite(r.eta) || r.eta < 0.0) {
    throw qjsr::ValidationError("ridge override must be nonnegative");
  }
  r.config["command"] = command;
  if (!o.preset.empty()) {
    r.config["preset"] = o.preset;
  } else {
    r.config["problem"] = o.problem_path;
  }
  r.config["alpha"] = r.alpha;
  r.config["eta"] = r.eta;
  return r;
}

/// Problem copy with the overrides applied, for commands that iterate it.
qjsr::Problem overridden(const Resolved& r) {
  qjsr::Problem p = r.problem;
  p.alpha = r.alpha;
  p.eta = r.eta;
  qjsr::validate_problem(p);
  return p;
}

qjsr::Vector parse_theta0(const std::string& csv, int dim) {
  if (csv.empty()) return qjsr::Vector::Zero(dim);
  std::vector<double> values;
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(item[used]) != 0) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw qjsr::ValidationError("invalid --theta0 entry: " + item);
    }
  }
  if (static_cast<int>(values.size()) != dim) {
    throw qjsr::ValidationError(
        "--theta0 must list " + std::to_string(dim) + " values, got " +
        std::to_string(values.size()));
  }
  qjsr::Vector theta0(dim);
  for (int i = 0; i < dim; ++i) theta0(i) = values[static_cast<std::size_t>(i)];
  return theta0;
}

json theta0_json(const qjsr::Vector& theta0) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < theta0.size(); ++i) arr.push_back(theta0(i));
  return arr;
}

std::string config_line(const json& config) {
  return "# config: " + config.dump() + "\n";
}

void maybe_write(const Opts& o, const std::string& name,
                 const std::string& content) {
  if (o.out.empty()) return;
  std::filesystem::create_directories(o.out);
  qjsr::write_text_file((std::filesystem::path(o.out) / name).string(),
                        content);
}

std::string policy_dashes(const qjsr::DeterministicPolicy& pol) {
  std::string out;
  for (std::size_t s = 0; s < pol.size(); ++s) {
    if (s > 0) out += "-";
    out += std::to_string(pol[s] + 1);
  }
  return out;
}

std::string word_dashes(long long word, int n_states, int n_actions) {
  if (word < 0) return "";
  qjsr::DeterministicPolicy pol(static_cast<std::size_t>(n_states), 0);
  long long rem = word;
  for (int s = n_states - 1; s >= 0; --s) {
    pol[static_cast<std::size_t>(s)] = static_cast<int>(rem % n_actions);
    rem /= n_actions;
  }
  return policy_dashes(pol);
}

json word_json(const std::vector<int>& word) {
  json arr = json::array();
  for (const int letter : word) arr.push_back(letter + 1);
  return arr;
}

json vector_json(const qjsr::Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

// ---------------------------------------------------------------------------
// modes
// ---------------------------------------------------------------------------

int cmd_modes(const Opts& o) {
  const Resolved r = resolve(o, "modes");
  const qjsr::ModeFamily family =
      qjsr::build_family(r.problem, r.alpha, r.eta);
  const auto policies = qjsr::enumerate_policies(r.problem);

  std::cout << "mode norms (alpha=" << qjsr::format_table(r.alpha)
            << ", eta=" << qjsr::format_table(r.eta) << "):\n";
  std::string csv = config_line(r.config) + "index,policy,norm\n";
  double max_norm = 0.0;
  for (std::size_t i = 0; i < family.modes.size(); ++i) {
    const double norm = qjsr::spectral_norm(family.modes[i]);
    max_norm = std::max(max_norm, norm);
    std::cout << "  " << (i + 1) << "  ("
              << policy_dashes(policies[i]) << ")  "
              << qjsr::format_table(norm) << "\n";
    csv += std::to_string(i + 1) + "," + policy_dashes(policies[i]) + "," +
           qjsr::format_full(norm) + "\n";
  }
  std::cout << "max mode norm: " << qjsr::format_table(max_norm) << "\n";
  maybe_write(o, "modes.csv", csv);
  return 0;
}

// ---------------------------------------------------------------------------
// jsr
// ---------------------------------------------------------------------------

int cmd_jsr(const Opts& o) {
  Resolved r = resolve(o, "jsr");
  r.config["jsr_depth"] = o.jsr_depth;
  r.config["prune"] = o.prune;

  const qjsr::ModeFamily family =
      qjsr::build_family(r.problem, r.alpha, r.eta);
  qjsr::JsrOptions options;
  options.max_depth = o.jsr_depth;
  options.prune = o.prune;
  const qjsr::JsrBracket bracket = qjsr::jsr_bracket(family, options);

  std::cout << "joint spectral radius bracket (alpha="
            << qjsr::format_table(r.alpha) << ", eta="
            << qjsr::format_table(r.eta) << ", depth=" << o.jsr_depth
            << ", prune=" << (o.prune ? "on" : "off") << "):\n";
  std::cout << "  k  upper_k  lower_k  exhaustive\n";
  for (const auto& row : bracket.per_depth) {
    std::cout << "  " << row.k << "  " << qjsr::format_table(row.upper_k)
              << "  " << qjsr::format_table(row.lower_k) << "  "
              << (row.exhaustive ? "yes" : "no") << "\n";
  }
  std::cout << "upper: " << qjsr::format_table(bracket.upper) << "  witness "
            << qjsr::format_word(bracket.witness_upper) << "\n";
  std::cout << "lower: " << qjsr::format_table(bracket.lower) << "  witness "
            << qjsr::format_word(bracket.witness_lower) << "\n";
  std::cout << "products evaluated: " << bracket.products_evaluated << "\n";

  json out;
  out["config"] = r.config;
  out["upper"] = bracket.upper;
  out["lower"] = bracket.lower;
  out["witness_upper"] = word_json(bracket.witness_upper);
  out["witness_lower"] = word_json(bracket.witness_lower);
  out["products_evaluated"] = bracket.products_evaluated;
  out["pruned"] = bracket.pruned;
  json rows = json::array();
  for (const auto& row : bracket.per_depth) {
    rows.push_back({{"k", row.k},
                    {"upper_k", row.upper_k},
                    {"lower_k", row.lower_k},
                    {"exhaustive", row.exhaustive}});
  }
  out["per_depth"] = std::move(rows);

  const auto witness = qjsr::divergence_witness(family, bracket);
  if (witness.has_value()) {
    std::cout << "divergence witness: word " << qjsr::format_word(witness->word)
              << ", growth rate " << qjsr::format_table(witness->rho)
              << "\n";
    out["divergence_witness"] = {{"word", word_json(witness->word)},
                                 {"rho", witness->rho},
                                 {"initial", vector_json(witness->initial)}};
  } else {
    out["divergence_witness"] = nullptr;
  }
  maybe_write(o, "jsr.json", out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// lyap
// ---------------------------------------------------------------------------

int cmd_lyap(const Opts& o) {
  Resolved r = resolve(o, "lyap");
  r.config["beta_eps"] = o.beta_eps;
  r.config["depth"] = o.depth;
  r.config["seed"] = o.seed;
  r.config["points"] = kDriftPoints;

  const qjsr::ModeFamily family =
      qjsr::build_family(r.problem, r.alpha, r.eta);
  const qjsr::LyapunovCert cert =
      qjsr::build_cert(family, o.beta_eps, o.depth);

  const qjsr::CounterRng rng{o.seed, 1};
  int violations = 0;
  double max_defect = 0.0;
  for (int i = 0; i < kDriftPoints; ++i) {
    qjsr::Vector x(family.dim);
    for (int j = 0; j < family.dim; ++j) {
      x(j) = rng.gaussian(static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(j));
    }
    const qjsr::DriftReport report = qjsr::check_drift(cert, x);
    max_defect = std::max(max_defect, report.max_cross_depth_defect);
    if (!report.cross_depth_ok || !report.monotone_ok ||
        !report.homogeneity_ok || !report.sandwich_ok) {
      ++violations;
    }
  }

  std::cout << "certificate (beta_eps=" << qjsr::format_table(o.beta_eps)
            << ", T=" << o.depth << "):\n";
  std::cout << "  max mode norm: " << qjsr::format_table(cert.max_mode_norm)
            << (cert.valid ? "  (accepted)" : "  (NOT accepted)") << "\n";
  std::cout << "  depth-1 lower bound: "
            << qjsr::format_table(cert.depth1_lower) << "\n";
  std::cout << "  norm-equivalence constant (upper): "
            << qjsr::format_table(cert.c_eps_upper)
            << (cert.c_is_estimate ? "  (tail estimated)" : "") << "\n";
  std::cout << "  drift check: " << kDriftPoints << " points, " << violations
            << " violations\n";

  json out;
  out["config"] = r.config;
  out["beta_eps"] = cert.beta_eps;
  out["T"] = cert.T;
  out["valid"] = cert.valid;
  out["max_mode_norm"] = cert.max_mode_norm;
  out["depth1_lower"] = cert.depth1_lower;
  out["c_eps_upper"] = cert.c_eps_upper;
  out["c_is_estimate"] = cert.c_is_estimate;
  out["tail_eta"] = cert.tail_eta;
  out["tail_C0"] = cert.tail_C0;
  out["tail_value"] = cert.tail_value;
  json norms = json::array();
  for (const double n : cert.max_norms) norms.push_back(n);
  out["max_norms_per_depth"] = std::move(norms);
  out["drift"] = {{"points", kDriftPoints},
                  {"violations", violations},
                  {"max_cross_depth_defect", max_defect}};
  maybe_write(o, "lyap.json", out.dump(2) + "\n");

  if (!cert.valid) {
    std::cerr << "certificate not accepted: max mode norm "
              << qjsr::format_full(cert.max_mode_norm)
              << " is not below beta_eps "
              << qjsr::format_full(cert.beta_eps) << "\n";
    return 4;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// normball
// ---------------------------------------------------------------------------

int cmd_normball(const Opts& o) {
  Resolved r = resolve(o, "normball");
  r.config["beta_eps"] = o.beta_eps;
  r.config["depth"] = o.depth;
  r.config["resolution"] = o.resolution;
  r.config["radial"] = o.radial;

  const qjsr::ModeFamily family =
      qjsr::build_family(r.problem, r.alpha, r.eta);
  const qjsr::LyapunovCert cert =
      qjsr::build_cert(family, o.beta_eps, o.depth);
  const auto points = qjsr::normball_mesh(cert, o.resolution, o.radial);

  std::string csv = "# beta=" + qjsr::format_full(o.beta_eps) +
                    " T=" + std::to_string(o.depth) + "\n" +
                    config_line(r.config);
  std::string header;
  for (int c = 0; c < family.dim; ++c) {
    header += "x_" + std::to_string(c + 1) + ",";
  }
  csv += header + "radius\n";
  double min_radius = std::numeric_limits<double>::infinity();
  double max_radius = 0.0;
  for (const auto& point : points) {
    const double radius = point.norm();
    min_radius = std::min(min_radius, radius);
    max_radius = std::max(max_radius, radius);
    std::string row;
    for (Eigen::Index c = 0; c < point.size(); ++c) {
      row += qjsr::format_full(point(c)) + ",";
    }
    csv += row + qjsr::format_full(radius) + "\n";
  }

  if (o.out.empty()) {
    std::cout << csv;
  } else {
    maybe_write(o, "normball.csv", csv);
    std::cout << "norm-ball boundary: " << points.size() << " points, radius ["
              << qjsr::format_table(min_radius) << ", "
              << qjsr::format_table(max_radius) << "], ratio "
              << qjsr::format_table(max_radius / min_radius) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

qjsr::RunKind parse_kind(const std::string& kind) {
  if (kind == "det" || kind == "deterministic") {
    return qjsr::RunKind::deterministic;
  }
  if (kind == "iid") return qjsr::RunKind::iid;
  if (kind == "markov") return qjsr::RunKind::markov;
  throw qjsr::ValidationError("unknown --kind: " + kind +
                              " (expected det, iid, or markov)");
}

std::string trajectory_csv(const qjsr::Problem& p, const json& config,
                           const qjsr::Trajectory& traj,
                           const qjsr::LyapunovCert* cert) {
  const bool with_star = traj.theta_star.has_value();
  const bool with_p = with_star && cert != nullptr;
  std::string csv = config_line(config) + "k";
  for (int c = 0; c < p.feature_dim; ++c) {
    csv += ",theta_" + std::to_string(c + 1);
  }
  if (with_star) csv += ",mode,x_norm";
  if (with_p) csv += ",p_x";
  csv += "\n";
  for (std::size_t k = 0; k < traj.thetas.size(); ++k) {
    csv += std::to_string(k);
    for (Eigen::Index c = 0; c < traj.thetas[k].size(); ++c) {
      csv += "," + qjsr::format_full(traj.thetas[k](c));
    }
    if (with_star) {
      csv += ",";
      if (k < traj.mode_words.size()) {
        csv += word_dashes(traj.mode_words[k], p.n_states, p.n_actions);
      }
      const qjsr::Vector x = traj.thetas[k] - *traj.theta_star;
      csv += "," + qjsr::format_full(x.norm());
      if (with_p) csv += "," + qjsr::format_full(qjsr::lyap_p(*cert, x));
    }
    csv += "\n";
  }
  return csv;
}

std::string ensemble_csv(const json& config,
                         const qjsr::EnsembleSummary& summary) {
  std::string csv = config_line(config);
  const bool env = summary.envelope.has_value();
  if (env) {
    const qjsr::Envelope& e = *summary.envelope;
    csv += "# lambda=" + qjsr::format_full(e.lambda) +
           " residual=" + qjsr::format_full(e.residual) +
           " applicable=" + (e.applicable ? std::string("1") : std::string("0")) +
           " limsup=" + qjsr::format_full(e.limsup) +
           " estimate=" + (e.estimate ? std::string("1") : std::string("0")) +
           "\n";
  }
  csv += "k";
  if (summary.has_error_stats) csv += ",mean_err,sem_err";
  if (summary.has_p_stats) csv += ",mean_p,sem_p";
  if (env) csv += ",env_p,env_euclid,env_q";
  csv += "\n";
  for (int k = 0; k <= summary.steps; ++k) {
    const auto i = static_cast<std::size_t>(k);
    csv += std::to_string(k);
    if (summary.has_error_stats) {
      csv += "," + qjsr::format_full(summary.mean_err[i]) + "," +
             qjsr::format_full(summary.sem_err[i]);
    }
    if (summary.has_p_stats) {
      csv += "," + qjsr::format_full(summary.mean_p[i]) + "," +
             qjsr::format_full(summary.sem_p[i]);
    }
    if (env) {
      csv += "," + qjsr::format_full(summary.envelope->curve[i]) + "," +
             qjsr::format_full(summary.envelope->curve_euclid[i]) + "," +
             qjsr::format_full(summary.envelope->curve_q[i]);
    }
    csv += "\n";
  }
  return csv;
}

int cmd_simulate(const Opts& o) {
  Resolved r = resolve(o, "simulate");
  const qjsr::RunKind kind = parse_kind(o.kind);
  const bool want_cert = o.beta_opt != nullptr && o.beta_opt->count() > 0;
  const qjsr::Problem base = overridden(r);
  const qjsr::Vector theta0 = parse_theta0(o.theta0_csv, base.feature_dim);

  r.config["kind"] = o.kind;
  r.config["steps"] = o.steps;
  r.config["runs"] = o.runs;
  r.config["seed"] = o.seed;
  r.config["theta0"] = theta0_json(theta0);
  r.config["tol"] = o.tol;
  r.config["cert"] = want_cert;
  if (want_cert) {
    r.config["beta_eps"] = o.beta_eps;
    r.config["depth"] = o.depth;
  }

  // The run problem: for the markov kind the derived stationary-sampling
  // problem drives both the trajectory and any certificate.
  std::optional<qjsr::MarkovModel> markov;
  if (kind == qjsr::RunKind::markov) markov = qjsr::markov_problem(base);
  const qjsr::Problem& run_problem =
      markov.has_value() ? markov->problem : base;

  std::optional<qjsr::LyapunovCert> cert;
  if (want_cert) {
    cert = qjsr::build_cert(qjsr::build_family(run_problem), o.beta_eps,
                            o.depth);
  }

  std::optional<qjsr::Vector> theta_star;
  if (cert.has_value() && cert->valid) {
    const qjsr::MapKind map_kind =
        run_problem.eta > 0.0 ? qjsr::MapKind::reg_dlq : qjsr::MapKind::dlq;
    const qjsr::FixedPointReport fp = qjsr::solve_fixed_point(
        run_problem, map_kind, o.tol, kMaxIterations, cert->view());
    if (fp.status == qjsr::SolveStatus::converged) theta_star = fp.theta_star;
  }

  if (o.runs == 1) {
    qjsr::Trajectory traj;
    switch (kind) {
      case qjsr::RunKind::deterministic:
        traj = qjsr::run_deterministic(run_problem, theta0, o.steps,
                                       theta_star);
        break;
      case qjsr::RunKind::iid:
        traj = qjsr::run_iid(run_problem, theta0, o.steps, o.seed, 0,
                             theta_star);
        break;
      case qjsr::RunKind::markov:
        traj = qjsr::run_markov(run_problem, markov->behavior, theta0,
                                o.steps, o.seed, 0, theta_star);
        break;
    }
    maybe_write(o, "trajectory.csv",
                trajectory_csv(run_problem, r.config, traj,
                               cert.has_value() ? &*cert : nullptr));
    const qjsr::Vector& last = traj.thetas.back();
    std::cout << "trajectory: " << (traj.thetas.size() - 1) << " steps, final theta (";
    for (Eigen::Index c = 0; c < last.size(); ++c) {
      std::cout << (c > 0 ? ", " : "") << qjsr::format_table(last(c));
    }
    std::cout << "), status " << qjsr::to_string(traj.status) << "\n";
    if (traj.status == qjsr::SolveStatus::diverged) {
      std::cerr << "trajectory diverged at step " << traj.divergence_index
                << "\n";
      return 3;
    }
    return 0;
  }

  const qjsr::EnsembleSummary summary = qjsr::run_ensemble(
      base, kind, o.runs, o.steps, o.seed,
      cert.has_value() ? &*cert : nullptr, theta_star, theta0);
  maybe_write(o, "ensemble.csv", ensemble_csv(r.config, summary));
  std::cout << "ensemble: " << summary.n_runs << " runs, "
            << summary.diverged_runs << " diverged\n";
  if (summary.has_error_stats) {
    std::cout << "final mean error: "
              << qjsr::format_table(summary.mean_err.back()) << "\n";
  } else {
    std::cout << "error recording disabled (no certified fixed point)\n";
  }
  if (summary.envelope.has_value()) {
    std::cout << "envelope: lambda="
              << qjsr::format_table(summary.envelope->lambda) << ", applicable="
              << (summary.envelope->applicable ? "yes" : "no") << "\n";
  }
  if (summary.diverged_runs > 0) {
    std::cerr << summary.diverged_runs << " of " << summary.n_runs
              << " runs diverged\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

std::string envelope_csv(const json& config, const qjsr::Envelope& env) {
  std::string csv = config_line(config);
  csv += "# lambda=" + qjsr::format_full(env.lambda) +
         " residual=" + qjsr::format_full(env.residual) +
         " applicable=" + (env.applicable ? std::string("1") : std::string("0")) +
         " limsup=" + qjsr::format_full(env.limsup) +
         " estimate=" + (env.estimate ? std::string("1") : std::string("0")) +
         "\n";
  csv += "k,p_bound,euclid_bound,q_bound\n";
  for (std::size_t k = 0; k < env.curve.size(); ++k) {
    csv += std::to_string(k) + "," + qjsr::format_full(env.curve[k]) + "," +
           qjsr::format_full(env.curve_euclid[k]) + "," +
           qjsr::format_full(env.curve_q[k]) + "\n";
  }
  return csv;
}

void print_envelope_row(const std::string& name, const qjsr::Envelope& env) {
  std::cout << "  " << name << "  lambda=" << qjsr::format_table(env.lambda)
            << "  residual=" << qjsr::format_table(env.residual)
            << "  applicable=" << (env.applicable ? "yes" : "no")
            << "  limsup="
            << (env.applicable ? qjsr::format_table(env.limsup)
                               : std::string("inf"))
            << "\n";
}

int cmd_certify(const Opts& o) {
  Resolved r = resolve(o, "certify");
  const qjsr::Problem p = overridden(r);
  const qjsr::Vector theta0 = parse_theta0(o.theta0_csv, p.feature_dim);
  r.config["beta_eps"] = o.beta_eps;
  r.config["depth"] = o.depth;
  r.config["steps"] = o.steps;
  r.config["theta0"] = theta0_json(theta0);
  r.config["tol"] = o.tol;

  const qjsr::LyapunovCert cert =
      qjsr::build_cert(qjsr::build_family(p), o.beta_eps, o.depth);
  if (!cert.valid) {
    std::cerr << "certificate not accepted: max mode norm "
              << qjsr::format_full(cert.max_mode_norm)
              << " is not below beta_eps " << qjsr::format_full(cert.beta_eps)
              << "\n";
    return 4;
  }

  const qjsr::MapKind map_kind =
      p.eta > 0.0 ? qjsr::MapKind::reg_dlq : qjsr::MapKind::dlq;
  const qjsr::FixedPointReport fp =
      qjsr::solve_fixed_point(p, map_kind, o.tol, kMaxIterations, cert.view());
  if (fp.status != qjsr::SolveStatus::converged) {
    std::cerr << "fixed-point solve " << qjsr::to_string(fp.status) << "\n";
    return 3;
  }
  std::cout << "fixed point: converged in " << fp.iterations
            << " iterations, residual "
            << qjsr::format_full(fp.final_residual) << "\n";
  std::cout << "sqrt(C): " << qjsr::format_table(std::sqrt(cert.c_eps_upper))
            << (cert.c_is_estimate ? " (tail estimated)" : "") << "\n";

  const qjsr::BoundInputs inputs =
      qjsr::make_bound_inputs(p, cert, fp.theta_star);
  const qjsr::Vector x0 = theta0 - fp.theta_star;
  const double x0_p = qjsr::lyap_p(cert, x0);
  const double x0_norm = x0.norm();

  std::cout << "envelopes (beta_eps=" << qjsr::format_table(o.beta_eps)
            << ", T=" << o.depth << ", steps=" << o.steps << "):\n";
  const qjsr::Envelope det =
      qjsr::det_envelope(inputs, x0_p, x0_norm, o.steps);
  print_envelope_row("det   ", det);
  maybe_write(o, "envelope_det.csv", envelope_csv(r.config, det));

  const qjsr::Envelope iid =
      qjsr::iid_envelope(inputs, x0_p, x0_norm, o.steps);
  print_envelope_row("iid   ", iid);
  maybe_write(o, "envelope_iid.csv", envelope_csv(r.config, iid));

  // The single-trajectory envelope lives on the derived stationary-sampling
  // problem; its certificate and fixed point are rebuilt there and the
  // envelope is skipped when that certificate is not accepted.
  const qjsr::MarkovModel markov = qjsr::markov_problem(p);
  bool markov_done = false;
  try {
    const qjsr::LyapunovCert cert_m = qjsr::build_cert(
        qjsr::build_family(markov.problem), o.beta_eps, o.depth);
    if (cert_m.valid) {
      const qjsr::FixedPointReport fp_m =
          qjsr::solve_fixed_point(markov.problem, map_kind, o.tol,
                                  kMaxIterations, cert_m.view());
      if (fp_m.status == qjsr::SolveStatus::converged) {
        const qjsr::BoundInputs inputs_m =
            qjsr::make_bound_inputs(markov.problem, cert_m, fp_m.theta_star);
        const qjsr::Vector x0_m = theta0 - fp_m.theta_star;
        const qjsr::Envelope markov_env = qjsr::markov_envelope(
            inputs_m, qjsr::lyap_p(cert_m, x0_m), x0_m.norm(), o.steps);
        print_envelope_row("markov", markov_env);
        maybe_write(o, "envelope_markov.csv",
                    envelope_csv(r.config, markov_env));
        markov_done = true;
      }
    }
  } catch (const qjsr::CertRefused&) {
    // fall through to the skip note
  }
  if (!markov_done) {
    std::cout << "  markov  skipped: certificate not accepted on the derived "
                 "stationary-sampling problem at this rate\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// regbounds
// ---------------------------------------------------------------------------

int cmd_regbounds(const Opts& o) {
  Resolved r = resolve(o, "regbounds");
  r.config["jsr_depth"] = o.jsr_depth;

  const qjsr::RegBounds bounds =
      qjsr::reg_euclidean_bounds(r.problem, r.alpha, r.eta);
  qjsr::Problem with_eta = r.problem;
  with_eta.eta = r.eta;
  const qjsr::SupContraction sup = qjsr::rpvi_sup_contraction(with_eta);
  const qjsr::RescalingReport rescaling =
      qjsr::reg_rescaling_check(r.problem, r.alpha, r.eta, o.jsr_depth);

  std::cout << "drift constants (eta=" << qjsr::format_table(r.eta) << "):\n";
  std::cout << "  c_Phi: " << qjsr::format_table(bounds.constants.c_Phi)
            << "\n";
  std::cout << "  L_Phi: " << qjsr::format_table(bounds.constants.L_Phi)
            << "\n";
  std::cout << "  L_Phi_eta: "
            << qjsr::format_table(bounds.constants.L_Phi_eta) << "\n";
  std::cout << "euclidean mode-norm bounds (alpha="
            << qjsr::format_table(r.alpha) << "):\n";
  std::cout << "  restricted (0<=alpha*eta<=1): "
            << qjsr::format_table(bounds.restricted)
            << (bounds.restricted_applicable ? "" : "  (not applicable)")
            << (bounds.restricted_clipped ? "  (clipped)" : "") << "\n";
  std::cout << "  sharp (all eta): " << qjsr::format_table(bounds.sharp)
            << (bounds.sharp_clipped ? "  (clipped)" : "") << "\n";
  std::cout << "  conservative: " << qjsr::format_table(bounds.conservative)
            << (bounds.conservative_clipped ? "  (clipped)" : "") << "\n";
  std::cout << "  step condition (restricted): "
            << (bounds.step_condition_restricted ? "holds" : "fails") << "\n";
  std::cout << "  step condition (all eta): "
            << (bounds.step_condition_all_eta ? "holds" : "fails") << "\n";
  std::cout << "projected-iteration sup-norm factor: "
            << qjsr::format_table(sup.value)
            << (sup.contraction ? "  (contraction)" : "") << "\n";
  std::cout << "ridge rescaling identity: "
            << (rescaling.ok ? "holds" : "VIOLATED") << " over "
            << rescaling.words_checked << " words, max defect "
            << qjsr::format_full(rescaling.max_rel_defect)
            << (rescaling.critical ? "  (critical alpha*eta=1 case)" : "")
            << "\n";

  json out;
  out["config"] = r.config;
  out["c_Phi"] = bounds.constants.c_Phi;
  out["L_Phi"] = bounds.constants.L_Phi;
  out["L_Phi_eta"] = bounds.constants.L_Phi_eta;
  out["restricted"] = bounds.restricted;
  out["restricted_applicable"] = bounds.restricted_applicable;
  out["restricted_clipped"] = bounds.restricted_clipped;
  out["sharp"] = bounds.sharp;
  out["sharp_clipped"] = bounds.sharp_clipped;
  out["conservative"] = bounds.conservative;
  out["conservative_clipped"] = bounds.conservative_clipped;
  out["step_condition_restricted"] = bounds.step_condition_restricted;
  out["step_condition_all_eta"] = bounds.step_condition_all_eta;
  out["rpvi_sup_factor"] = sup.value;
  out["rpvi_sup_contraction"] = sup.contraction;
  out["rescaling"] = {{"ok", rescaling.ok},
                      {"critical", rescaling.critical},
                      {"scale_factor", rescaling.scale_factor},
                      {"words_checked", rescaling.words_checked},
                      {"max_rel_defect", rescaling.max_rel_defect}};
  maybe_write(o, "regbounds.json", out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

int cmd_presets(const Opts& o) {
  for (const auto& name : qjsr::preset_names()) {
    const qjsr::Problem p = qjsr::preset_problem(name);
    std::cout << name << "  (|S|=" << p.n_states << ", |A|=" << p.n_actions
              << ", m=" << p.feature_dim << ")\n";
    if (!o.out.empty()) {
      std::filesystem::create_directories(o.out);
      qjsr::save_problem(
          p, (std::filesystem::path(o.out) / (name + ".json")).string());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switched-system analysis of linear Q-learning"};
  app.require_subcommand(1);

  std::deque<Opts> all_opts;
  std::deque<std::function<int()>> handlers;
  std::function<int()> run;

  auto add_common = [](CLI::App* sub, Opts& o, bool with_problem = true) {
    if (with_problem) {
      sub->add_option("--problem", o.problem_path, "problem JSON file");
      sub->add_option("--preset", o.preset, "built-in problem name");
      o.alpha_opt = sub->add_option("--alpha", o.alpha, "step size override");
      o.eta_opt = sub->add_option("--eta", o.eta, "ridge weight override");
    }
    sub->add_option("--out", o.out, "output directory for data files");
  };
  auto add_cert = [](CLI::App* sub, Opts& o) {
    o.beta_opt = sub->add_option("--beta-eps", o.beta_eps,
                                 "certificate decay rate (default 0.975)");
    sub->add_option("--depth", o.depth,
                    "certificate truncation depth T (default 4)");
  };

  auto attach = [&](CLI::App* sub, Opts& o, int (*fn)(const Opts&)) {
    handlers.emplace_back([fn, &o]() { return fn(o); });
    auto& handler = handlers.back();
    sub->callback([&run, &handler]() { run = handler; });
  };

  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub = app.add_subcommand("modes", "per-policy mode norms");
    add_common(sub, o);
    attach(sub, o, cmd_modes);
  }
  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub =
        app.add_subcommand("jsr", "joint spectral radius bracket");
    add_common(sub, o);
    sub->add_option("--jsr-depth", o.jsr_depth,
                    "maximum product depth (default 6)");
    sub->add_flag("--prune", o.prune, "prune via the running lower bound");
    attach(sub, o, cmd_jsr);
  }
  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub = app.add_subcommand(
        "lyap", "build the truncated norm certificate and drift-check it");
    add_common(sub, o);
    add_cert(sub, o);
    sub->add_option("--seed", o.seed, "seed for the drift-check points");
    attach(sub, o, cmd_lyap);
  }
  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub = app.add_subcommand(
        "normball", "boundary mesh of the certificate-norm unit ball");
    add_common(sub, o);
    add_cert(sub, o);
    sub->add_option("--resolution", o.resolution,
                    "mesh resolution (default 64)");
    sub->add_flag("--radial", o.radial,
                  "seeded radial directions (any dimension)");
    attach(sub, o, cmd_normball);
  }
  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub = app.add_subcommand(
        "simulate", "run trajectories or Monte Carlo ensembles");
    add_common(sub, o);
    sub->add_option("--kind", o.kind, "det, iid, or markov (default det)");
    sub->add_option("--steps", o.steps, "updates per run (default 100)");
    sub->add_option("--runs", o.runs,
                    "trajectories; more than one reduces to an ensemble");
    sub->add_option("--seed", o.seed, "ensemble seed (stream = run index)");
    sub->add_option("--theta0", o.theta0_csv,
                    "comma-separated initial parameter (default zeros)");
    sub->add_option("--tol", o.tol, "fixed-point tolerance (default 1e-12)");
    add_cert(sub, o);
    attach(sub, o, cmd_simulate);
  }
  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub = app.add_subcommand(
        "certify", "closed-form error envelopes for all three samplings");
    add_common(sub, o);
    add_cert(sub, o);
    sub->add_option("--steps", o.steps, "envelope horizon (default 100)");
    sub->add_option("--theta0", o.theta0_csv,
                    "comma-separated initial parameter (default zeros)");
    sub->add_option("--tol", o.tol, "fixed-point tolerance (default 1e-12)");
    attach(sub, o, cmd_certify);
  }
  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub = app.add_subcommand(
        "regbounds", "ridge drift constants and closed-form norm bounds");
    add_common(sub, o);
    sub->add_option("--jsr-depth", o.jsr_depth,
                    "rescaling-check word depth (default 4 here)");
    o.jsr_depth = 4;
    attach(sub, o, cmd_regbounds);
  }
  {
    Opts& o = all_opts.emplace_back();
    CLI::App* sub = app.add_subcommand(
        "presets", "list built-in problems (dump files with --out)");
    add_common(sub, o, /*with_problem=*/false);
    attach(sub, o, cmd_presets);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    return run();
  } catch (const qjsr::CertRefused& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const qjsr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const qjsr::CapExceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
