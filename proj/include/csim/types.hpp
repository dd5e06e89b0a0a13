#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace csim {

enum class EnvKind { Abr, Lb };

inline std::string to_string(EnvKind kind) { return kind == EnvKind::Abr ? "abr" : "lb"; }

inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "abr") return EnvKind::Abr;
  if (s == "lb") return EnvKind::Lb;
  throw std::invalid_argument("unknown env_kind: " + s);
}

// One logged decision step: what the component saw, what it did, what the
// rest of the system measured, and (synthetic data only) the latent state
// that generated the measurement. latent_truth never feeds training.
struct Step {
  std::vector<double> obs;
  int action = 0;
  std::vector<double> trace;
  std::vector<double> latent_truth;
};

struct Trajectory {
  std::int64_t id = 0;
  int policy_id = 0;
  std::vector<Step> steps;

  int horizon() const { return static_cast<int>(steps.size()); }
};

// A policy is a kind tag plus named scalar parameters, e.g.
// {"bba", {reservoir: 5, cushion: 5}}. Environments interpret the kinds.
struct PolicySpec {
  std::string kind;
  std::map<std::string, double> params;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  std::string name() const {
    std::string out = kind;
    for (const auto& [k, v] : params) {
      out += "_" + k + "=" + std::to_string(v);
    }
    return out;
  }

  bool operator==(const PolicySpec& other) const = default;
};

inline void to_json(nlohmann::json& j, const PolicySpec& spec) {
  j = nlohmann::json{{"kind", spec.kind}, {"params", spec.params}};
}

inline void from_json(const nlohmann::json& j, PolicySpec& spec) {
  j.at("kind").get_to(spec.kind);
  spec.params = j.value("params", std::map<std::string, double>{});
}

// A randomized-trial dataset: trajectories with uniformly random policy
// assignment plus everything needed to regenerate or replay them.
struct RCTDataset {
  EnvKind env_kind = EnvKind::Abr;
  std::uint64_t seed = 0;
  std::vector<PolicySpec> policy_registry;
  nlohmann::json env_config;
  std::vector<Trajectory> trajectories;
  int action_count = 0;
  int trace_dim = 0;
  bool synthetic = true;

  std::int64_t total_steps() const {
    std::int64_t n = 0;
    for (const auto& t : trajectories) n += t.horizon();
    return n;
  }
};

}  // namespace csim
