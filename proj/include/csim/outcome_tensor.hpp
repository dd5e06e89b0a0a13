#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "csim/types.hpp"

namespace csim {

// The A x U x D potential-outcome view of a dataset. Columns enumerate all
// (trajectory, step) pairs in lexicographic order; exactly one row per
// column is observed, recorded in observed_action. Unobserved cells of
// `values` are zero and must only be read through the mask.
struct OutcomeTensor {
  int action_count = 0;
  std::int64_t columns = 0;
  int trace_dim = 0;
  std::vector<double> values;
  std::vector<int> observed_action;
  std::vector<int> column_policy;
  std::vector<std::pair<std::int64_t, int>> column_key;  // (traj id, t), t is 1-based

  std::size_t index(int action, std::int64_t column, int dim) const {
    return (static_cast<std::size_t>(action) * columns + column) * trace_dim + dim;
  }

  bool observed(int action, std::int64_t column) const { return observed_action[column] == action; }

  double observed_value(std::int64_t column, int dim) const {
    return values[index(observed_action[column], column, dim)];
  }

  std::int64_t column_of(std::int64_t traj_id, int t) const;
};

OutcomeTensor build_outcome_tensor(const RCTDataset& dataset);

}  // namespace csim
