#include <cmath>
#include <set>

#include "csim/eval.hpp"
#include "csim/metrics.hpp"
#include "csim/train.hpp"

namespace csim {

namespace {

// Mean pair metric for one trained model: buffer EMD for streaming, oracle
// MAPE for load balancing, averaged over the given ordered pairs.
double mean_pair_metric(const RCTDataset& dataset, const CausalSimModel& model,
                        const std::vector<std::pair<int, int>>& pairs, int source_cap) {
  Simulators sims;
  sims.causal = &model;
  double total = 0.0;
  for (const auto& [source, target] : pairs) {
    const PairMetrics m =
        evaluate_pair(dataset, SimulatorKind::CausalSim, sims, source, target, source_cap);
    total += dataset.env_kind == EnvKind::Abr ? m.emd : m.mape;
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace

TuneResult tune_hyperparams(const RCTDataset& dataset, const Hyperparams& base,
                            const std::vector<double>& kappa_grid, int heldout_policy_id) {
  if (kappa_grid.empty()) throw std::invalid_argument("empty hyperparameter grid");

  std::set<int> present;
  for (const auto& traj : dataset.trajectories) present.insert(traj.policy_id);
  present.erase(heldout_policy_id);
  if (present.size() < 3) {
    throw std::invalid_argument("proxy tuning needs at least three in-training policies");
  }

  std::vector<std::pair<int, int>> validation_pairs;
  for (int source : present) {
    for (int target : present) {
      if (source != target) validation_pairs.emplace_back(source, target);
    }
  }
  std::vector<std::pair<int, int>> test_pairs;
  if (heldout_policy_id >= 0) {
    for (int source : present) test_pairs.emplace_back(source, heldout_policy_id);
  }

  TuneResult result;
  result.kappa_grid = kappa_grid;
  for (std::size_t g = 0; g < kappa_grid.size(); ++g) {
    Hyperparams hyper = base;
    hyper.kappa = kappa_grid[g];
    hyper.seed = sub_seed(base.seed, g, stream::kInit);  // independent run per grid point
    const CausalSimModel model = train_causalsim(dataset, hyper, heldout_policy_id);
    result.validation_metric.push_back(
        mean_pair_metric(dataset, model, validation_pairs, base.tune_source_cap));
    if (!test_pairs.empty()) {
      result.test_metric.push_back(mean_pair_metric(dataset, model, test_pairs, base.tune_source_cap));
    }
  }

  result.best_index = 0;
  for (std::size_t g = 1; g < kappa_grid.size(); ++g) {
    if (result.validation_metric[g] < result.validation_metric[result.best_index]) {
      result.best_index = static_cast<int>(g);
    }
  }
  result.best_kappa = kappa_grid[result.best_index];
  if (result.test_metric.size() >= 2) {
    result.validation_test_pcc = pcc(result.validation_metric, result.test_metric);
  }
  return result;
}

}  // namespace csim
