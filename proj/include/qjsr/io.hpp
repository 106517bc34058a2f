#pragma once

// Problem-file serialization and small text-output helpers. The on-disk
// problem format is JSON with transitions and rewards nested as
// [state][action][next_state] and pair-indexed blocks (features, sampling)
// in action-major order matching Problem::index_of.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qjsr/mdp.hpp"
#include "qjsr/types.hpp"

namespace qjsr {

namespace detail {

inline const nlohmann::json& json_field(const nlohmann::json& j,
                                        const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError("problem file missing field: " + key);
  }
  return *it;
}

inline double json_number(const nlohmann::json& j, const std::string& key) {
  const nlohmann::json& field = json_field(j, key);
  if (!field.is_number()) {
    throw ValidationError("problem field must be a number: " + key);
  }
  return field.get<double>();
}

inline int json_count(const nlohmann::json& j, const std::string& key) {
  const nlohmann::json& field = json_field(j, key);
  if (!field.is_number_integer() || field.get<long long>() < 1) {
    throw ValidationError("problem field must be a positive integer: " + key);
  }
  return field.get<int>();
}

inline void require_array(const nlohmann::json& j, std::size_t size,
                          const std::string& what) {
  if (!j.is_array() || j.size() != size) {
    throw ValidationError("problem field " + what + " must be an array of " +
                          std::to_string(size) + " entries");
  }
}

}  // namespace detail

/// Parse a problem from its JSON representation.
inline Problem problem_from_json(const nlohmann::json& j) {
  Problem p;
  p.n_states = detail::json_count(j, "n_states");
  p.n_actions = detail::json_count(j, "n_actions");
  p.gamma = detail::json_number(j, "gamma");
  p.alpha = detail::json_number(j, "alpha");
  p.eta = j.contains("eta") ? detail::json_number(j, "eta") : 0.0;

  const int pairs = p.n_states * p.n_actions;

  const nlohmann::json& transition = detail::json_field(j, "transition");
  detail::require_array(transition, static_cast<std::size_t>(p.n_states),
                        "transition");
  p.transitions = Matrix::Zero(pairs, p.n_states);
  const nlohmann::json& reward = detail::json_field(j, "reward");
  const bool scalar_reward = reward.is_number();
  if (!scalar_reward) {
    detail::require_array(reward, static_cast<std::size_t>(p.n_states),
                          "reward");
  }
  p.rewards = Matrix::Constant(pairs, p.n_states,
                               scalar_reward ? reward.get<double>() : 0.0);
  for (int s = 0; s < p.n_states; ++s) {
    const nlohmann::json& trans_row = transition[static_cast<std::size_t>(s)];
    detail::require_array(trans_row, static_cast<std::size_t>(p.n_actions),
                          "transition[" + std::to_string(s) + "]");
    for (int a = 0; a < p.n_actions; ++a) {
      const nlohmann::json& probs = trans_row[static_cast<std::size_t>(a)];
      detail::require_array(probs, static_cast<std::size_t>(p.n_states),
                            "transition[" + std::to_string(s) + "][" +
                                std::to_string(a) + "]");
      for (int sp = 0; sp < p.n_states; ++sp) {
        p.transitions(p.index_of(s, a), sp) =
            probs[static_cast<std::size_t>(sp)].get<double>();
      }
      if (!scalar_reward) {
        const nlohmann::json& rew =
            reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
        detail::require_array(rew, static_cast<std::size_t>(p.n_states),
                              "reward[" + std::to_string(s) + "][" +
                                  std::to_string(a) + "]");
        for (int sp = 0; sp < p.n_states; ++sp) {
          p.rewards(p.index_of(s, a), sp) =
              rew[static_cast<std::size_t>(sp)].get<double>();
        }
      }
    }
  }

  const nlohmann::json& features = detail::json_field(j, "features");
  detail::require_array(features, static_cast<std::size_t>(pairs), "features");
  const nlohmann::json& first = features[0];
  if (!first.is_array() || first.empty()) {
    throw ValidationError("problem field features must hold nonempty rows");
  }
  p.feature_dim = static_cast<int>(first.size());
  p.features = Matrix::Zero(pairs, p.feature_dim);
  for (int i = 0; i < pairs; ++i) {
    const nlohmann::json& row = features[static_cast<std::size_t>(i)];
    detail::require_array(row, static_cast<std::size_t>(p.feature_dim),
                          "features[" + std::to_string(i) + "]");
    for (int c = 0; c < p.feature_dim; ++c) {
      p.features(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }

  const nlohmann::json& sampling = detail::json_field(j, "sampling");
  detail::require_array(sampling, static_cast<std::size_t>(pairs), "sampling");
  p.sampling = Vector::Zero(pairs);
  for (int i = 0; i < pairs; ++i) {
    p.sampling(i) = sampling[static_cast<std::size_t>(i)].get<double>();
  }

  if (j.contains("behavior")) {
    const nlohmann::json& behavior = j["behavior"];
    detail::require_array(behavior, static_cast<std::size_t>(p.n_states),
                          "behavior");
    p.behavior = Matrix::Zero(p.n_states, p.n_actions);
    for (int s = 0; s < p.n_states; ++s) {
      const nlohmann::json& row = behavior[static_cast<std::size_t>(s)];
      detail::require_array(row, static_cast<std::size_t>(p.n_actions),
                            "behavior[" + std::to_string(s) + "]");
      for (int a = 0; a < p.n_actions; ++a) {
        p.behavior(s, a) = row[static_cast<std::size_t>(a)].get<double>();
      }
    }
  }

  validate_problem(p);
  return p;
}

/// Serialize a problem to the on-disk JSON layout.
inline nlohmann::json problem_to_json(const Problem& p) {
  nlohmann::json j;
  j["n_states"] = p.n_states;
  j["n_actions"] = p.n_actions;
  j["gamma"] = p.gamma;
  j["alpha"] = p.alpha;
  j["eta"] = p.eta;

  nlohmann::json transition = nlohmann::json::array();
  nlohmann::json reward = nlohmann::json::array();
  for (int s = 0; s < p.n_states; ++s) {
    nlohmann::json trans_row = nlohmann::json::array();
    nlohmann::json rew_row = nlohmann::json::array();
    for (int a = 0; a < p.n_actions; ++a) {
      nlohmann::json probs = nlohmann::json::array();
      nlohmann::json rews = nlohmann::json::array();
      for (int sp = 0; sp < p.n_states; ++sp) {
        probs.push_back(p.transitions(p.index_of(s, a), sp));
        rews.push_back(p.rewards(p.index_of(s, a), sp));
      }
      trans_row.push_back(std::move(probs));
      rew_row.push_back(std::move(rews));
    }
    transition.push_back(std::move(trans_row));
    reward.push_back(std::move(rew_row));
  }
  j["transition"] = std::move(transition);
  j["reward"] = std::move(reward);

  nlohmann::json features = nlohmann::json::array();
  nlohmann::json sampling = nlohmann::json::array();
  for (int i = 0; i < p.pair_count(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < p.feature_dim; ++c) row.push_back(p.features(i, c));
    features.push_back(std::move(row));
    sampling.push_back(p.sampling(i));
  }
  j["features"] = std::move(features);
  j["sampling"] = std::move(sampling);

  if (p.behavior.size() > 0) {
    nlohmann::json behavior = nlohmann::json::array();
    for (int s = 0; s < p.n_states; ++s) {
      nlohmann::json row = nlohmann::json::array();
      for (int a = 0; a < p.n_actions; ++a) row.push_back(p.behavior(s, a));
      behavior.push_back(std::move(row));
    }
    j["behavior"] = std::move(behavior);
  }
  return j;
}

inline Problem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open problem file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("problem file is not valid JSON: " +
                          std::string(e.what()));
  }
  return problem_from_json(j);
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open output file: " + path);
  out << content;
  if (!out) throw ValidationError("failed writing output file: " + path);
}

inline void save_problem(const Problem& p, const std::string& path) {
  write_text_file(path, problem_to_json(p).dump(2) + "\n");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace qjsr
