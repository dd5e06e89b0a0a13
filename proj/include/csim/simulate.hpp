#pragma once

#include <vector>

#include "csim/train.hpp"
#include "csim/types.hpp"

namespace csim {

// One counterfactual rollout. For ABR the trajectory's trace carries the
// reconstructed throughput and the implied download time; next_buffers is
// the simulator's buffer chain (one value per step, the buffer at the next
// request), kept separate so the dynamics head and the throughput head can
// disagree measurably. For LB, latencies come from the known queue model.
struct RolloutResult {
  Trajectory trajectory;
  std::vector<double> next_buffers;        // ABR
  std::vector<double> dyn_download_times;  // ABR: dynamics-head download time
  std::vector<double> latencies;           // LB
};

// Latent-factor rollout: extracts u_t from the factual step, re-encodes the
// target policy's action, reconstructs the trace bilinearly (clamped to a
// small positive floor) and advances the state with the dynamics head (ABR)
// or the queue model (LB). Policies observe simulated state and history.
RolloutResult causalsim_rollout(const CausalSimModel& model, const RCTDataset& dataset, int traj_index,
                                const PolicySpec& target, int target_policy_id = -1);

// Replays the factual throughput as if it were exogenous. ABR only; the
// load-balancing trace has no policy-independent reading, so LB calls are
// rejected.
RolloutResult expertsim_rollout(const RCTDataset& dataset, int traj_index, const PolicySpec& target,
                                int target_policy_id = -1);

// Supervised-baseline rollout: chains the learned step dynamics on factual
// traces and counterfactual actions.
RolloutResult slsim_rollout(const SLSimModel& model, const RCTDataset& dataset, int traj_index,
                            const PolicySpec& target, int target_policy_id = -1);

// Buffer at the next request implied by each logged step; the oracle-side
// counterpart of RolloutResult::next_buffers.
std::vector<double> next_buffer_series(const Trajectory& traj, double chunk_seconds, double buffer_cap);

}  // namespace csim
