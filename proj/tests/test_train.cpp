#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "csim/rct.hpp"
#include "csim/train.hpp"
#include "csim/train_internal.hpp"

using namespace csim;

namespace {

RCTDataset small_abr_dataset(int n = 60, int horizon = 20, std::uint64_t seed = 3) {
  AbrConfig cfg;
  cfg.horizon = horizon;
  return collect(EnvKind::Abr, abr_config_to_json(cfg), default_abr_policies(), n, seed);
}

RCTDataset small_lb_dataset(int n = 60, int horizon = 40, std::uint64_t seed = 5) {
  LbConfig cfg;
  cfg.rates = gen_fleet(2).rates;
  cfg.horizon = horizon;
  return collect(EnvKind::Lb, lb_config_to_json(cfg), default_lb_policies(), n, seed);
}

Hyperparams toy_hyper(EnvKind kind) {
  Hyperparams h = kind == EnvKind::Abr ? default_abr_hyperparams() : default_lb_hyperparams();
  h.num_train_it = 5;
  h.batch_size = 64;
  h.hidden_extractor = {4};
  h.hidden_discriminator = {4};
  h.hidden_encoder = kind == EnvKind::Abr ? std::vector<int>{4} : std::vector<int>{};
  h.hidden_dynamics = {4};
  return h;
}

bool nets_equal(const DenseNet& a, const DenseNet& b) {
  if (a.layer_dims != b.layer_dims) return false;
  for (int l = 0; l < a.layer_count(); ++l) {
    if ((a.weights[l] - b.weights[l]).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((a.biases[l] - b.biases[l]).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

// Scalar objectives at the model's current parameters, recomputed from
// scratch; used as the finite-difference reference for gradient routing.
std::pair<double, double> objectives(const CausalSimModel& model, const Matrix& ext_in,
                                     const Matrix& enc_in, const Matrix& dyn_aux,
                                     const Matrix& dyn_target, const Matrix& trace_target,
                                     const std::vector<int>& labels) {
  const JointStep step =
      causalsim_joint_step(model, ext_in, enc_in, dyn_aux, dyn_target, trace_target, labels);
  return {step.pred_loss, step.disc_loss};
}

}  // namespace

TEST_CASE("train_causalsim rejects single-policy datasets") {
  AbrConfig cfg;
  cfg.horizon = 5;
  const auto ds = collect(EnvKind::Abr, abr_config_to_json(cfg), {PolicySpec{"random", {}}}, 10, 1);
  CHECK_THROWS_AS(train_causalsim(ds, toy_hyper(EnvKind::Abr)), std::invalid_argument);
}

TEST_CASE("gradient routing: extractor follows pred - kappa*disc, predictor follows pred alone") {
  for (EnvKind kind : {EnvKind::Abr, EnvKind::Lb}) {
    const RCTDataset ds = kind == EnvKind::Abr ? small_abr_dataset() : small_lb_dataset();
    Hyperparams h = toy_hyper(kind);
    h.kappa = 0.7;
    CausalSimModel model = train_causalsim(ds, h, -1);

    std::vector<int> policy_ids;
    internal::TrainTensors data;
    if (kind == EnvKind::Abr) {
      double scales[4];
      data = internal::build_abr_tensors(ds, -1, policy_ids, scales);
    } else {
      double ps;
      data = internal::build_lb_tensors(ds, -1, policy_ids, &ps);
    }
    const std::vector<int> idx{0, 3, 5, 11, 17, 23};
    const Matrix ext_in = internal::gather_rows(data.ext_in, idx);
    const Matrix enc_in = internal::gather_rows(data.enc_in, idx);
    const Matrix dyn_aux = kind == EnvKind::Abr ? internal::gather_rows(data.dyn_aux, idx) : Matrix();
    const Matrix dyn_target =
        kind == EnvKind::Abr ? internal::gather_rows(data.dyn_target, idx) : Matrix();
    const Matrix trace = internal::gather_rows(data.trace_target, idx);
    std::vector<int> labels;
    for (int i : idx) labels.push_back(data.labels[i]);

    const JointStep step =
        causalsim_joint_step(model, ext_in, enc_in, dyn_aux, dyn_target, trace, labels);

    const double h_fd = 1e-5;
    auto fd = [&](double& param, bool total) {
      const double orig = param;
      param = orig + h_fd;
      auto [pred_p, disc_p] = objectives(model, ext_in, enc_in, dyn_aux, dyn_target, trace, labels);
      param = orig - h_fd;
      auto [pred_m, disc_m] = objectives(model, ext_in, enc_in, dyn_aux, dyn_target, trace, labels);
      param = orig;
      const double obj_p = total ? pred_p - h.kappa * disc_p : pred_p;
      const double obj_m = total ? pred_m - h.kappa * disc_m : pred_m;
      return (obj_p - obj_m) / (2.0 * h_fd);
    };

    for (int l = 0; l < model.extractor.layer_count(); ++l) {
      for (int probe = 0; probe < 4; ++probe) {
        const int r = probe % model.extractor.weights[l].rows();
        const int c = (probe * 7) % model.extractor.weights[l].cols();
        const double analytic = step.extractor_grads.weights[l](r, c);
        const double numeric = fd(model.extractor.weights[l](r, c), true);
        CHECK(std::fabs(analytic - numeric) <=
              1e-4 * std::max({std::fabs(analytic), std::fabs(numeric), 1e-6}));
      }
    }
    for (int l = 0; l < model.action_encoder.layer_count(); ++l) {
      const double analytic = step.encoder_grads.weights[l](0, 0);
      const double numeric = fd(model.action_encoder.weights[l](0, 0), false);
      CHECK(std::fabs(analytic - numeric) <=
            1e-4 * std::max({std::fabs(analytic), std::fabs(numeric), 1e-6}));
    }
    if (kind == EnvKind::Abr) {
      const double analytic = step.dynamics_grads.weights[0](1, 1);
      const double numeric = fd(model.dynamics.weights[0](1, 1), false);
      CHECK(std::fabs(analytic - numeric) <=
            1e-4 * std::max({std::fabs(analytic), std::fabs(numeric), 1e-6}));
    }
  }
}

TEST_CASE("kappa = 0 removes the discriminator from the extractor gradient") {
  const RCTDataset ds = small_lb_dataset();
  Hyperparams h = toy_hyper(EnvKind::Lb);
  h.kappa = 0.0;
  CausalSimModel model = train_causalsim(ds, h, -1);

  std::vector<int> policy_ids;
  double ps;
  const auto data = internal::build_lb_tensors(ds, -1, policy_ids, &ps);
  const std::vector<int> idx{0, 1, 2, 3};
  std::vector<int> labels;
  for (int i : idx) labels.push_back(data.labels[i]);
  const Matrix ext_in = internal::gather_rows(data.ext_in, idx);
  const Matrix enc_in = internal::gather_rows(data.enc_in, idx);
  const Matrix trace = internal::gather_rows(data.trace_target, idx);

  const JointStep before = causalsim_joint_step(model, ext_in, enc_in, {}, {}, trace, labels);
  // Scrambling the discriminator must not change the extractor gradient.
  model.discriminator = DenseNet::glorot(model.discriminator.layer_dims, 999);
  const JointStep after = causalsim_joint_step(model, ext_in, enc_in, {}, {}, trace, labels);
  for (int l = 0; l < model.extractor.layer_count(); ++l) {
    CHECK((before.extractor_grads.weights[l] - after.extractor_grads.weights[l])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("training is deterministic: same seed, same final weights") {
  const RCTDataset ds = small_abr_dataset(30, 10);
  Hyperparams h = toy_hyper(EnvKind::Abr);
  h.num_train_it = 20;
  const CausalSimModel a = train_causalsim(ds, h, 0);
  const CausalSimModel b = train_causalsim(ds, h, 0);
  CHECK(nets_equal(a.extractor, b.extractor));
  CHECK(nets_equal(a.discriminator, b.discriminator));
  CHECK(nets_equal(a.action_encoder, b.action_encoder));
  CHECK(nets_equal(a.dynamics, b.dynamics));

  const SLSimModel sa = train_slsim(ds, h, 0);
  const SLSimModel sb = train_slsim(ds, h, 0);
  CHECK(nets_equal(sa.net, sb.net));
}

TEST_CASE("minibatch sampling covers every index with high probability") {
  Rng rng(1);
  const int n = 500;
  std::set<int> seen;
  for (int draw = 0; draw < 40; ++draw) {
    for (int i : internal::sample_indices(rng, n, 256)) seen.insert(i);
  }
  CHECK(static_cast<int>(seen.size()) == n);
}

TEST_CASE("slsim training reduces the loss over the training set") {
  const RCTDataset ds = small_lb_dataset(80, 50);
  Hyperparams h = default_lb_hyperparams();
  h.num_train_it = 400;
  h.batch_size = 512;
  h.hidden_dynamics = {32, 32};

  std::vector<int> policy_ids;
  double ps;
  const auto data = internal::build_lb_tensors(ds, -1, policy_ids, &ps);

  Hyperparams h0 = h;
  h0.num_train_it = 1;
  const SLSimModel initial = train_slsim(ds, h0, -1);
  const SLSimModel trained = train_slsim(ds, h, -1);
  const double before = loss(LossKind::Mse, initial.net.forward(data.ext_in), data.trace_target).value;
  const double after = loss(LossKind::Mse, trained.net.forward(data.ext_in), data.trace_target).value;
  CHECK(after < before);
}

TEST_CASE("checkpoint json round-trips both model kinds") {
  const RCTDataset ds = small_abr_dataset(30, 8);
  Hyperparams h = toy_hyper(EnvKind::Abr);
  const CausalSimModel model = train_causalsim(ds, h, -1);
  const CausalSimModel back = causalsim_from_json(causalsim_to_json(model));
  CHECK(nets_equal(model.extractor, back.extractor));
  CHECK(nets_equal(model.dynamics, back.dynamics));
  CHECK(back.thpt_scale == model.thpt_scale);
  CHECK(back.policy_ids == model.policy_ids);

  const SLSimModel sl = train_slsim(ds, h, -1);
  const SLSimModel sl_back = slsim_from_json(slsim_to_json(sl));
  CHECK(nets_equal(sl.net, sl_back.net));
}

TEST_CASE("tune: singleton grid returns it, tiny registries are rejected") {
  const RCTDataset ds = small_lb_dataset(40, 10);
  Hyperparams h = toy_hyper(EnvKind::Lb);
  h.num_train_it = 3;
  h.tune_source_cap = 2;
  const TuneResult result = tune_hyperparams(ds, h, {2.5}, -1);
  CHECK(result.best_kappa == 2.5);
  CHECK(result.validation_metric.size() == 1);

  AbrConfig cfg;
  cfg.horizon = 5;
  const auto two = collect(EnvKind::Abr, abr_config_to_json(cfg),
                           {PolicySpec{"random", {}}, PolicySpec{"rate", {}}}, 10, 1);
  CHECK_THROWS_AS(tune_hyperparams(two, h, {1.0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(tune_hyperparams(ds, h, {}, -1), std::invalid_argument);
}
