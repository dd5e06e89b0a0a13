#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "csim/net.hpp"
#include "csim/types.hpp"

namespace csim {

struct Hyperparams {
  int rank = 2;
  double kappa = 1.0;
  std::vector<double> kappa_grid{0.01, 0.1, 1.0, 10.0, 100.0};
  int num_train_it = 3000;
  int num_disc_it = 10;
  int batch_size = 1024;
  int disc_batch_size = 0;  // 0 means batch_size; the inner loop dominates runtime
  double lr_extractor = 1e-3;
  double lr_discriminator = 1e-3;
  double lr_predictor = 1e-3;
  double lr_decay = 0.3;                      // multiplier applied at each milestone
  std::vector<double> lr_decay_at{0.6, 0.85}; // fractions of num_train_it
  LossKind pred_loss = LossKind::Huber;
  double huber_delta = 0.2;
  double eta = 1.0;  // download-time loss weight relative to buffer
  std::vector<int> hidden_extractor{64, 64};
  Activation extractor_activation = Activation::Identity;
  std::vector<int> hidden_discriminator{64, 64};
  std::vector<int> hidden_encoder{32, 32};  // empty means a linear encoder
  std::vector<int> hidden_dynamics{64, 64};
  std::uint64_t seed = 1;
  int tune_source_cap = 30;  // rollouts per (source, target) pair while tuning
};

nlohmann::json hyperparams_to_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

Hyperparams default_abr_hyperparams();
Hyperparams default_lb_hyperparams();

// Latent-factor counterfactual model: an extractor adversarially trained
// against a policy discriminator, a bilinear trace head <enc(a), u>, and
// (streaming only) a learned dynamics head for the next observation.
struct CausalSimModel {
  EnvKind env_kind = EnvKind::Abr;
  int rank = 2;
  double kappa = 1.0;
  Hyperparams hyper;
  std::vector<int> policy_ids;  // dataset policy id per discriminator class
  DenseNet extractor, discriminator, action_encoder, dynamics;

  // Scale-only normalization so the multiplicative trace structure survives.
  double thpt_scale = 1.0, dtime_scale = 1.0, size_scale = 1.0, buffer_scale = 1.0;
  double ptime_scale = 1.0;
  std::uint64_t dataset_hash = 0;

  int class_of_policy(int policy_id) const;
};

// Supervised one-net baseline fitting the step dynamics directly.
struct SLSimModel {
  EnvKind env_kind = EnvKind::Abr;
  Hyperparams hyper;
  DenseNet net;
  double thpt_scale = 1.0, dtime_scale = 1.0, size_scale = 1.0, buffer_scale = 1.0;
  double ptime_scale = 1.0;
  std::uint64_t dataset_hash = 0;
};

// Analytic gradients of one joint simulation-module step at the model's
// current parameters, exposed so the gradient-routing tests can check them
// against finite differences. extractor_grads differentiates
// L_pred - kappa * L_disc; the predictor grads differentiate L_pred alone.
struct JointStep {
  Gradients extractor_grads;
  Gradients encoder_grads;
  Gradients dynamics_grads;  // ABR only
  double pred_loss = 0.0;
  double disc_loss = 0.0;
};

JointStep causalsim_joint_step(const CausalSimModel& model, const Matrix& ext_in, const Matrix& enc_in,
                               const Matrix& dyn_aux, const Matrix& dyn_target,
                               const Matrix& trace_target, const std::vector<int>& labels);

// Adversarial training loop: num_disc_it discriminator steps on fresh
// minibatches, then one step where the extractor descends
// grad(L_pred - kappa * L_disc) and the predictor nets descend grad(L_pred).
// Trajectories of exclude_policy_id are left out of the training set.
CausalSimModel train_causalsim(const RCTDataset& dataset, const Hyperparams& hyper,
                               int exclude_policy_id = -1);

SLSimModel train_slsim(const RCTDataset& dataset, const Hyperparams& hyper, int exclude_policy_id = -1);

struct TuneResult {
  std::vector<double> kappa_grid;
  std::vector<double> validation_metric;  // mean metric over in-training pairs
  std::vector<double> test_metric;        // vs the held-out policy, if given
  int best_index = 0;
  double best_kappa = 1.0;
  std::optional<double> validation_test_pcc;
};

// Leave-one-out style proxy tuning: for each kappa, train and score the
// model by simulating every in-training policy from every other, comparing
// against the in-training ground truth (buffer EMD for streaming, oracle
// MAPE for load balancing). heldout_policy_id is excluded from training and
// only used for the diagnostic test metric.
TuneResult tune_hyperparams(const RCTDataset& dataset, const Hyperparams& base,
                            const std::vector<double>& kappa_grid, int heldout_policy_id = -1);

nlohmann::json causalsim_to_json(const CausalSimModel& model);
CausalSimModel causalsim_from_json(const nlohmann::json& j);
nlohmann::json slsim_to_json(const SLSimModel& model);
SLSimModel slsim_from_json(const nlohmann::json& j);

// Per-class mean predicted probability (rows: true policy class) plus
// argmax accuracy and population shares of the training classes.
struct ConfusionReport {
  std::vector<int> policy_ids;
  Matrix mean_probabilities;  // K x K
  Matrix argmax_counts;       // K x K
  std::vector<double> population_share;
  double argmax_accuracy = 0.0;
};

ConfusionReport confusion_matrix(const CausalSimModel& model, const RCTDataset& dataset);

// Extractor outputs over every training step of the dataset (policies the
// model was trained on), with the matching first latent-truth component.
struct LatentComparison {
  std::vector<double> extracted;  // first latent coordinate per step
  std::vector<double> truth;
  Matrix all_coordinates;         // N x rank
};

LatentComparison extract_latents(const CausalSimModel& model, const RCTDataset& dataset,
                                 int exclude_policy_id = -1);

}  // namespace csim
