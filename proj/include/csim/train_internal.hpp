#pragma once

#include <cmath>
#include <vector>

#include "csim/net.hpp"
#include "csim/types.hpp"

namespace csim {

struct CausalSimModel;

namespace internal {

// Flattened per-step training features; rows line up across all members.
struct TrainTensors {
  Matrix ext_in;        // extractor input
  Matrix enc_in;        // action-encoder input
  Matrix dyn_aux;       // ABR: (buffer, prev throughput, size), scaled
  Matrix dyn_target;    // ABR: (next buffer, download time), scaled
  Matrix trace_target;  // scaled trace component the bilinear head fits
  std::vector<int> labels;
};

double scale_of(const std::vector<double>& values);

// Extractor input layouts, shared by training, rollouts and audits.
// ABR: (thpt', log thpt', dtime', log dtime', size'). LB: (ptime',
// log ptime', server one-hot). Primed values are scale-only normalized.
inline constexpr int kAbrExtDim = 5;
inline int lb_ext_dim(int actions) { return 2 + actions; }

template <typename Row>
void fill_abr_ext_row(Row&& row, double thpt_scaled, double dtime_scaled, double size_scaled) {
  row(0) = thpt_scaled;
  row(1) = std::log(std::max(thpt_scaled, 1e-12));
  row(2) = dtime_scaled;
  row(3) = std::log(std::max(dtime_scaled, 1e-12));
  row(4) = size_scaled;
}

template <typename Row>
void fill_lb_ext_row(Row&& row, double ptime_scaled, int action) {
  row(0) = ptime_scaled;
  row(1) = std::log(std::max(ptime_scaled, 1e-12));
  row(2 + action) = 1.0;
}

// Maps dataset policy ids to dense class labels over the policies present
// after exclusion; fills policy_ids with the inverse map.
std::vector<int> training_label_map(const RCTDataset& dataset, int exclude_policy_id,
                                    std::vector<int>& policy_ids);

// Builders used by training; they compute the scales (ABR order: thpt,
// dtime, size, buffer).
TrainTensors build_abr_tensors(const RCTDataset& dataset, int exclude_policy_id,
                               std::vector<int>& policy_ids, double* scales_out);
TrainTensors build_lb_tensors(const RCTDataset& dataset, int exclude_policy_id,
                              std::vector<int>& policy_ids, double* ptime_scale_out);

// Extractor inputs for an existing model's scales, with one row per step in
// dataset order (ABR drops each trajectory's last step, matching training).
struct ModelInputs {
  Matrix ext_in;
  std::vector<int> policy_id;            // dataset policy id per row
  std::vector<double> first_latent;      // latent_truth[0] per row, if present
};

ModelInputs build_model_inputs(const CausalSimModel& model, const RCTDataset& dataset,
                               int exclude_policy_id);

Matrix gather_rows(const Matrix& m, const std::vector<int>& idx);
std::vector<int> sample_indices(Rng& rng, int n, int batch);

}  // namespace internal
}  // namespace csim
