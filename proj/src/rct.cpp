#include "csim/rct.hpp"

#include <stdexcept>

namespace csim {

RCTDataset collect(EnvKind env_kind, const nlohmann::json& env_config,
                   const std::vector<PolicySpec>& registry, int n_trajectories, std::uint64_t seed) {
  if (registry.empty()) throw std::invalid_argument("policy registry must not be empty");

  RCTDataset ds;
  ds.env_kind = env_kind;
  ds.seed = seed;
  ds.policy_registry = registry;
  ds.env_config = env_config;
  ds.trajectories.reserve(n_trajectories);

  Rng assign(sub_seed(seed, 0, stream::kAssign));
  if (env_kind == EnvKind::Abr) {
    const AbrConfig cfg = abr_config_from_json(env_config);
    ds.action_count = cfg.action_count();
    ds.trace_dim = 2;
    for (int i = 0; i < n_trajectories; ++i) {
      const int policy_id = assign.uniform_int(static_cast<int>(registry.size()));
      const NetworkPath path = gen_markov_trace(sub_seed(seed, i, stream::kTrace), cfg.horizon, cfg);
      Rng policy_rng(sub_seed(seed, i, stream::kPolicy));
      ds.trajectories.push_back(run_episode(path.capacities, path.rtt, registry[policy_id], policy_id,
                                            cfg, cfg.horizon, policy_rng, i));
    }
  } else {
    const LbConfig cfg = lb_config_from_json(env_config);
    if (cfg.rates.empty()) throw std::invalid_argument("LB env_config must carry the fleet rates");
    ds.action_count = cfg.n_servers;
    ds.trace_dim = 1;
    for (int i = 0; i < n_trajectories; ++i) {
      const int policy_id = assign.uniform_int(static_cast<int>(registry.size()));
      const JobStream jobs = gen_job_sizes(sub_seed(seed, i, stream::kJobs), cfg.horizon, cfg);
      Rng policy_rng(sub_seed(seed, i, stream::kPolicy));
      ds.trajectories.push_back(
          run_lb_episode(cfg, jobs.sizes, registry[policy_id], policy_id, policy_rng, i));
    }
  }
  return ds;
}

Trajectory counterfactual_ground_truth(const RCTDataset& dataset, int traj_index,
                                       const PolicySpec& target, int target_policy_id) {
  const Trajectory& source = dataset.trajectories.at(traj_index);
  if (source.steps.empty()) throw std::invalid_argument("cannot replay an empty trajectory");
  if (source.steps.front().latent_truth.empty()) {
    throw std::invalid_argument("counterfactual ground truth needs stored latents (synthetic data)");
  }

  // The policy stream depends only on (dataset seed, trajectory id), so an
  // identity replay consumes the exact random choices of collection.
  Rng policy_rng(sub_seed(dataset.seed, source.id, stream::kPolicy));
  const int horizon = source.horizon();

  if (dataset.env_kind == EnvKind::Abr) {
    const AbrConfig cfg = abr_config_from_json(dataset.env_config);
    std::vector<double> capacities;
    capacities.reserve(horizon);
    for (const Step& s : source.steps) capacities.push_back(s.latent_truth[0]);
    const double rtt = source.steps.front().latent_truth[1];
    return run_episode(capacities, rtt, target, target_policy_id, cfg, horizon, policy_rng, source.id);
  }

  const LbConfig cfg = lb_config_from_json(dataset.env_config);
  std::vector<double> sizes;
  sizes.reserve(horizon);
  for (const Step& s : source.steps) sizes.push_back(s.latent_truth[0]);
  return run_lb_episode(cfg, sizes, target, target_policy_id, policy_rng, source.id);
}

}  // namespace csim
