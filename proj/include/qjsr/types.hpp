#pragma once

// Core vocabulary shared by every module: dense matrix aliases, status
// enums, typed error categories, and numeric formatting helpers.

#include <Eigen/Dense>

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace qjsr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ===========================================================================
// Status enums
// ===========================================================================

/// Outcome of an iterative fixed-point solve.
enum class SolveStatus { converged, non_converged, diverged };

/// Which deterministic map a solver or trajectory iterates.
enum class MapKind { dlq, reg_dlq };

/// Sampling model of a simulated trajectory.
enum class RunKind { deterministic, iid, markov };

/// Whether a mode family carries the ridge shift.
enum class FamilyKind { direct, regularized };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::non_converged: return "non-converged";
    case SolveStatus::diverged: return "diverged";
  }
  return "unknown";
}

inline const char* to_string(MapKind m) {
  return m == MapKind::dlq ? "dlq" : "reg_dlq";
}

inline const char* to_string(RunKind k) {
  switch (k) {
    case RunKind::deterministic: return "deterministic";
    case RunKind::iid: return "iid";
    case RunKind::markov: return "markov";
  }
  return "unknown";
}

inline const char* to_string(FamilyKind k) {
  return k == FamilyKind::direct ? "direct" : "regularized";
}

// ===========================================================================
// Error categories
// ===========================================================================

/// Input data violates a documented invariant (bad file, bad override).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// An enumeration (policies or matrix products) exceeds its configured cap.
class CapExceeded : public std::runtime_error {
 public:
  explicit CapExceeded(const std::string& what) : std::runtime_error(what) {}
};

/// A norm certificate cannot be constructed at the requested decay rate.
class CertRefused : public std::runtime_error {
 public:
  explicit CertRefused(const std::string& what) : std::runtime_error(what) {}
};

// ===========================================================================
// Small shared value types
// ===========================================================================

/// Minimal contraction evidence consumed by the fixed-point solver: decay
/// rate below one plus the validity of the certificate that produced it.
struct ContractionView {
  double beta_eps = 1.0;
  bool valid = false;
};

// ===========================================================================
// Formatting helpers (17 significant digits for data files, 4 decimals for
// human-facing tables)
// ===========================================================================

inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_table(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

/// Render an index word (0-based internally) as 1-based "(i1,i2,...)".
inline std::string format_word(const std::vector<int>& word) {
  std::string out = "(";
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(word[i] + 1);
  }
  out += ")";
  return out;
}

}  // namespace qjsr
