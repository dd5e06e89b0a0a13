#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csim/simulate.hpp"
#include "csim/train.hpp"
#include "csim/types.hpp"

namespace csim {

enum class SimulatorKind { CausalSim, ExpertSim, SLSim };

std::string to_string(SimulatorKind kind);

struct Simulators {
  const CausalSimModel* causal = nullptr;
  const SLSimModel* sl = nullptr;
};

// Metrics for simulating one target policy over one source group.
// ABR: emd compares the pooled simulated buffer distribution with the
// target group's logged one; mape/mse compare per-step next-buffer chains
// with the per-step counterfactual oracle. LB: mape/latency_mape compare
// processing times and latencies with the oracle replay.
struct PairMetrics {
  int source_policy = -1;
  int target_policy = -1;
  std::string simulator;
  double emd = std::numeric_limits<double>::quiet_NaN();
  double mape = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double latency_mape = std::numeric_limits<double>::quiet_NaN();
  int n_rollouts = 0;
};

// source_cap < 0 simulates every source trajectory.
PairMetrics evaluate_pair(const RCTDataset& dataset, SimulatorKind kind, const Simulators& sims,
                          int source_policy_id, int target_policy_id, int source_cap = -1);

struct EvalReport {
  std::vector<PairMetrics> entries;
  std::uint64_t dataset_hash = 0;
  std::map<int, std::uint64_t> model_hash_by_target;
  std::uint64_t seed = 0;

  std::vector<double> collect(const std::string& simulator, double PairMetrics::* field) const;
};

// Full ordered-pair grid: for every target in `targets`, every other policy
// acts as a source; the target's own group is skipped. Models are per
// target (trained with that policy left out); a missing model skips the
// pair with a warning entry count of zero rather than failing the run.
EvalReport eval_grid(const RCTDataset& dataset, const std::vector<int>& targets,
                     const std::map<int, CausalSimModel>& causal_models,
                     const std::map<int, SLSimModel>& sl_models,
                     const std::vector<SimulatorKind>& kinds, int source_cap = -1);

void write_eval_csv(const EvalReport& report, const std::string& path);
EvalReport read_eval_csv(const std::string& path);

struct ParetoPoint {
  PolicySpec spec;
  double stall_rate = 0.0;
  double mean_bitrate = 0.0;
  double mean_qoe = 0.0;
  // Percentile bootstrap over trajectories (1000 resamples), 2.5%..97.5%.
  double stall_rate_lo = 0.0;
  double stall_rate_hi = 0.0;
  bool on_frontier = false;
};

// Grid-evaluates a policy family over the whole dataset via latent-factor
// rollouts and marks the non-dominated set under (min stall, max bitrate).
std::vector<ParetoPoint> pareto_sweep(const CausalSimModel& model, const RCTDataset& dataset,
                                      const std::vector<PolicySpec>& grid, int source_cap = -1);

}  // namespace csim
