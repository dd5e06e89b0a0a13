#include "csim/outcome_tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace csim {

std::int64_t OutcomeTensor::column_of(std::int64_t traj_id, int t) const {
  auto it = std::lower_bound(column_key.begin(), column_key.end(), std::make_pair(traj_id, t));
  if (it == column_key.end() || *it != std::make_pair(traj_id, t)) {
    throw std::out_of_range("no tensor column for (traj, t)");
  }
  return it - column_key.begin();
}

OutcomeTensor build_outcome_tensor(const RCTDataset& dataset) {
  OutcomeTensor tensor;
  tensor.action_count = dataset.action_count;
  tensor.trace_dim = dataset.trace_dim;
  tensor.columns = dataset.total_steps();

  std::vector<const Trajectory*> ordered;
  ordered.reserve(dataset.trajectories.size());
  for (const auto& traj : dataset.trajectories) ordered.push_back(&traj);
  std::sort(ordered.begin(), ordered.end(),
            [](const Trajectory* a, const Trajectory* b) { return a->id < b->id; });

  tensor.values.assign(static_cast<std::size_t>(tensor.action_count) * tensor.columns * tensor.trace_dim, 0.0);
  tensor.observed_action.reserve(tensor.columns);
  tensor.column_policy.reserve(tensor.columns);
  tensor.column_key.reserve(tensor.columns);

  std::int64_t beta = 0;
  for (const Trajectory* traj : ordered) {
    int t = 1;
    for (const Step& step : traj->steps) {
      if (step.action < 0 || step.action >= tensor.action_count) {
        throw std::invalid_argument("step action outside the dataset action space");
      }
      if (static_cast<int>(step.trace.size()) != tensor.trace_dim) {
        throw std::invalid_argument("step trace dimension disagrees with dataset trace_dim");
      }
      for (int g = 0; g < tensor.trace_dim; ++g) {
        tensor.values[tensor.index(step.action, beta, g)] = step.trace[g];
      }
      tensor.observed_action.push_back(step.action);
      tensor.column_policy.push_back(traj->policy_id);
      tensor.column_key.emplace_back(traj->id, t);
      ++beta;
      ++t;
    }
  }
  return tensor;
}

}  // namespace csim
