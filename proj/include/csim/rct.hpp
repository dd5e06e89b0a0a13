#pragma once

#include <cstdint>
#include <vector>

#include "csim/abr_env.hpp"
#include "csim/lb_env.hpp"
#include "csim/types.hpp"

namespace csim {

// Collects an RCT dataset: every trajectory gets fresh latent draws and a
// policy chosen uniformly at random from the registry.
RCTDataset collect(EnvKind env_kind, const nlohmann::json& env_config,
                   const std::vector<PolicySpec>& registry, int n_trajectories, std::uint64_t seed);

// Replays the stored latent sequence of one trajectory under a different
// policy through the true environment dynamics. This is the evaluation
// oracle; it needs a synthetic dataset (latent_truth present). With
// target == source policy it reproduces the logged trajectory bit-exactly.
Trajectory counterfactual_ground_truth(const RCTDataset& dataset, int traj_index,
                                       const PolicySpec& target, int target_policy_id = -1);

}  // namespace csim
