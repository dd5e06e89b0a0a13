#include "csim/train.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "csim/abr_env.hpp"
#include "csim/lb_env.hpp"
#include "csim/train_internal.hpp"

namespace csim {

nlohmann::json hyperparams_to_json(const Hyperparams& h) {
  return nlohmann::json{
      {"rank", h.rank},
      {"kappa", h.kappa},
      {"kappa_grid", h.kappa_grid},
      {"num_train_it", h.num_train_it},
      {"num_disc_it", h.num_disc_it},
      {"batch_size", h.batch_size},
      {"disc_batch_size", h.disc_batch_size},
      {"lr_extractor", h.lr_extractor},
      {"lr_discriminator", h.lr_discriminator},
      {"lr_predictor", h.lr_predictor},
      {"lr_decay", h.lr_decay},
      {"lr_decay_at", h.lr_decay_at},
      {"pred_loss", to_string(h.pred_loss)},
      {"huber_delta", h.huber_delta},
      {"eta", h.eta},
      {"hidden_extractor", h.hidden_extractor},
      {"extractor_activation", to_string(h.extractor_activation)},
      {"hidden_discriminator", h.hidden_discriminator},
      {"hidden_encoder", h.hidden_encoder},
      {"hidden_dynamics", h.hidden_dynamics},
      {"seed", h.seed},
      {"tune_source_cap", h.tune_source_cap},
  };
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams h;
  h.rank = j.value("rank", h.rank);
  h.kappa = j.value("kappa", h.kappa);
  h.kappa_grid = j.value("kappa_grid", h.kappa_grid);
  h.num_train_it = j.value("num_train_it", h.num_train_it);
  h.num_disc_it = j.value("num_disc_it", h.num_disc_it);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.disc_batch_size = j.value("disc_batch_size", h.disc_batch_size);
  h.lr_extractor = j.value("lr_extractor", h.lr_extractor);
  h.lr_discriminator = j.value("lr_discriminator", h.lr_discriminator);
  h.lr_predictor = j.value("lr_predictor", h.lr_predictor);
  h.lr_decay = j.value("lr_decay", h.lr_decay);
  h.lr_decay_at = j.value("lr_decay_at", h.lr_decay_at);
  h.pred_loss = loss_kind_from_string(j.value("pred_loss", to_string(h.pred_loss)));
  h.huber_delta = j.value("huber_delta", h.huber_delta);
  h.eta = j.value("eta", h.eta);
  h.hidden_extractor = j.value("hidden_extractor", h.hidden_extractor);
  h.extractor_activation =
      activation_from_string(j.value("extractor_activation", to_string(h.extractor_activation)));
  h.hidden_discriminator = j.value("hidden_discriminator", h.hidden_discriminator);
  h.hidden_encoder = j.value("hidden_encoder", h.hidden_encoder);
  h.hidden_dynamics = j.value("hidden_dynamics", h.hidden_dynamics);
  h.seed = j.value("seed", h.seed);
  h.tune_source_cap = j.value("tune_source_cap", h.tune_source_cap);
  return h;
}

Hyperparams default_abr_hyperparams() {
  Hyperparams h;
  h.rank = 2;
  h.pred_loss = LossKind::Huber;
  h.huber_delta = 0.2;
  h.eta = 1.0;
  return h;
}

Hyperparams default_lb_hyperparams() {
  Hyperparams h;
  h.rank = 1;
  h.num_train_it = 3000;
  h.pred_loss = LossKind::RelativeMse;
  h.huber_delta = 0.05;   // relative-loss denominator floor
  h.kappa = 0.3;
  h.hidden_encoder = {};  // linear map from the server one-hot
  // A log-linear extractor suits the positive multiplicative trace; the
  // per-action gauge it learns is identified by the discriminator alone.
  h.hidden_extractor = {};
  h.extractor_activation = Activation::Exp;
  return h;
}

int CausalSimModel::class_of_policy(int policy_id) const {
  for (std::size_t i = 0; i < policy_ids.size(); ++i) {
    if (policy_ids[i] == policy_id) return static_cast<int>(i);
  }
  return -1;
}

namespace internal {

double scale_of(const std::vector<double>& values) {
  if (values.empty()) return 1.0;
  double sum = 0.0, sq = 0.0;
  for (double v : values) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(values.size());
  const double var = std::max(0.0, sq / n - (sum / n) * (sum / n));
  const double sd = std::sqrt(var);
  return sd > 1e-12 ? sd : 1.0;
}

std::vector<int> training_label_map(const RCTDataset& dataset, int exclude_policy_id,
                                    std::vector<int>& policy_ids) {
  std::vector<int> label_of(dataset.policy_registry.size(), -1);
  policy_ids.clear();
  for (const auto& traj : dataset.trajectories) {
    if (traj.policy_id == exclude_policy_id) continue;
    if (label_of[traj.policy_id] < 0) {
      label_of[traj.policy_id] = 0;  // mark as present
    }
  }
  for (std::size_t p = 0; p < label_of.size(); ++p) {
    if (label_of[p] == 0) {
      label_of[p] = static_cast<int>(policy_ids.size());
      policy_ids.push_back(static_cast<int>(p));
    }
  }
  return label_of;
}

TrainTensors build_abr_tensors(const RCTDataset& dataset, int exclude_policy_id,
                               std::vector<int>& policy_ids, double* scales_out) {
  const AbrConfig cfg = abr_config_from_json(dataset.env_config);
  const auto label_of = training_label_map(dataset, exclude_policy_id, policy_ids);

  std::vector<double> thpt, dtime, size, buffer, prevm, bnext;
  std::vector<int> labels;
  for (const auto& traj : dataset.trajectories) {
    if (traj.policy_id == exclude_policy_id) continue;
    for (int t = 0; t + 1 < traj.horizon(); ++t) {
      const Step& s = traj.steps[t];
      thpt.push_back(s.trace[0]);
      dtime.push_back(s.trace[1]);
      size.push_back(cfg.chunk_size(s.action));
      buffer.push_back(s.obs[0]);
      prevm.push_back(s.obs[1]);
      bnext.push_back(traj.steps[t + 1].obs[0]);
      labels.push_back(label_of[traj.policy_id]);
    }
  }
  const double ts = scale_of(thpt), ds = scale_of(dtime), ss = scale_of(size), bs = scale_of(buffer);
  scales_out[0] = ts;
  scales_out[1] = ds;
  scales_out[2] = ss;
  scales_out[3] = bs;

  const Eigen::Index n = static_cast<Eigen::Index>(thpt.size());
  TrainTensors out;
  out.ext_in.resize(n, kAbrExtDim);
  out.enc_in.resize(n, 1);
  out.dyn_aux.resize(n, 3);
  out.dyn_target.resize(n, 2);
  out.trace_target.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    fill_abr_ext_row(out.ext_in.row(i), thpt[i] / ts, dtime[i] / ds, size[i] / ss);
    out.enc_in(i, 0) = size[i] / ss;
    out.dyn_aux(i, 0) = buffer[i] / bs;
    out.dyn_aux(i, 1) = prevm[i] / ts;
    out.dyn_aux(i, 2) = size[i] / ss;
    out.dyn_target(i, 0) = bnext[i] / bs;
    out.dyn_target(i, 1) = dtime[i] / ds;
    out.trace_target(i, 0) = thpt[i] / ts;
  }
  out.labels = std::move(labels);
  return out;
}

TrainTensors build_lb_tensors(const RCTDataset& dataset, int exclude_policy_id,
                              std::vector<int>& policy_ids, double* ptime_scale_out) {
  const auto label_of = training_label_map(dataset, exclude_policy_id, policy_ids);
  const int actions = dataset.action_count;

  std::vector<double> ptime;
  std::vector<int> action, labels;
  for (const auto& traj : dataset.trajectories) {
    if (traj.policy_id == exclude_policy_id) continue;
    for (const Step& s : traj.steps) {
      ptime.push_back(s.trace[0]);
      action.push_back(s.action);
      labels.push_back(label_of[traj.policy_id]);
    }
  }
  const double ps = scale_of(ptime);
  *ptime_scale_out = ps;

  const Eigen::Index n = static_cast<Eigen::Index>(ptime.size());
  TrainTensors out;
  out.ext_in = Matrix::Zero(n, lb_ext_dim(actions));
  out.enc_in = Matrix::Zero(n, actions);
  out.trace_target.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    fill_lb_ext_row(out.ext_in.row(i), ptime[i] / ps, action[i]);
    out.enc_in(i, action[i]) = 1.0;
    out.trace_target(i, 0) = ptime[i] / ps;
  }
  out.labels = std::move(labels);
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

std::vector<int> sample_indices(Rng& rng, int n, int batch) {
  std::vector<int> idx(batch);
  for (int i = 0; i < batch; ++i) idx[i] = rng.uniform_int(n);
  return idx;
}

ModelInputs build_model_inputs(const CausalSimModel& model, const RCTDataset& dataset,
                               int exclude_policy_id) {
  ModelInputs out;
  std::int64_t n = 0;
  for (const auto& traj : dataset.trajectories) {
    if (traj.policy_id == exclude_policy_id) continue;
    n += model.env_kind == EnvKind::Abr ? traj.horizon() - 1 : traj.horizon();
  }
  out.ext_in = Matrix::Zero(
      n, model.env_kind == EnvKind::Abr ? kAbrExtDim : lb_ext_dim(dataset.action_count));

  Eigen::Index i = 0;
  if (model.env_kind == EnvKind::Abr) {
    const AbrConfig cfg = abr_config_from_json(dataset.env_config);
    for (const auto& traj : dataset.trajectories) {
      if (traj.policy_id == exclude_policy_id) continue;
      for (int t = 0; t + 1 < traj.horizon(); ++t) {
        const Step& s = traj.steps[t];
        fill_abr_ext_row(out.ext_in.row(i++), s.trace[0] / model.thpt_scale,
                         s.trace[1] / model.dtime_scale, cfg.chunk_size(s.action) / model.size_scale);
        out.policy_id.push_back(traj.policy_id);
        if (!s.latent_truth.empty()) out.first_latent.push_back(s.latent_truth[0]);
      }
    }
  } else {
    for (const auto& traj : dataset.trajectories) {
      if (traj.policy_id == exclude_policy_id) continue;
      for (const Step& s : traj.steps) {
        fill_lb_ext_row(out.ext_in.row(i++), s.trace[0] / model.ptime_scale, s.action);
        out.policy_id.push_back(traj.policy_id);
        if (!s.latent_truth.empty()) out.first_latent.push_back(s.latent_truth[0]);
      }
    }
  }
  return out;
}

}  // namespace internal

namespace {

std::vector<int> dims_with_hidden(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

// Per-action gauge multipliers (geometric mean one) for a rank-1 trace,
// estimated from within-trajectory mean ratios: trace levels inside one
// trajectory share the same latent regime, so the log difference of two
// actions' mean traces there observes the log gauge difference directly.
// A weighted least squares over all trajectory pairs ties the per-action
// log gauges together. Returns empty when coverage is too thin.
std::vector<double> trajectory_gauge(const RCTDataset& dataset, int exclude_policy_id) {
  const int actions = dataset.action_count;
  Matrix laplacian = Matrix::Zero(actions, actions);
  Vector rhs = Vector::Zero(actions);
  std::vector<double> sums(actions), counts(actions);
  bool any = false;
  for (const auto& traj : dataset.trajectories) {
    if (traj.policy_id == exclude_policy_id) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (const Step& s : traj.steps) {
      sums[s.action] += s.trace[0];
      counts[s.action] += 1.0;
    }
    for (int a = 0; a < actions; ++a) {
      if (counts[a] < 5.0) continue;
      for (int b = a + 1; b < actions; ++b) {
        if (counts[b] < 5.0) continue;
        const double diff = std::log(sums[a] / counts[a]) - std::log(sums[b] / counts[b]);
        const double weight = 1.0 / (1.0 / counts[a] + 1.0 / counts[b]);
        // diff estimates g_b - g_a for log gauges g.
        laplacian(a, a) += weight;
        laplacian(b, b) += weight;
        laplacian(a, b) -= weight;
        laplacian(b, a) -= weight;
        rhs(a) -= weight * diff;
        rhs(b) += weight * diff;
        any = true;
      }
    }
  }
  if (!any) return {};
  for (int a = 0; a < actions; ++a) {
    if (laplacian(a, a) == 0.0) return {};  // an action with no paired coverage
  }
  // The Laplacian is singular along the all-ones gauge direction; pin the
  // mean of the log gauges to zero.
  laplacian.array() += 1.0 / actions;
  const Vector g = laplacian.ldlt().solve(rhs);
  std::vector<double> gauge(actions);
  for (int a = 0; a < actions; ++a) gauge[a] = std::exp(g(a) - g.mean());
  return gauge;
}

// eta-weighted two-head loss for (next buffer, download time) targets.
LossResult weighted_two_head_loss(LossKind kind, double delta, double eta, const Matrix& pred,
                                  const Matrix& target) {
  const double wb = 1.0 / (eta + 1.0);
  const double wd = eta / (eta + 1.0);
  LossResult lb = loss(kind, pred.col(0), target.col(0), delta);
  LossResult ld = loss(kind, pred.col(1), target.col(1), delta);
  LossResult out;
  out.value = wb * lb.value + wd * ld.value;
  out.grad.resize(pred.rows(), 2);
  out.grad.col(0) = wb * lb.grad;
  out.grad.col(1) = wd * ld.grad;
  return out;
}

}  // namespace

JointStep causalsim_joint_step(const CausalSimModel& model, const Matrix& ext_in, const Matrix& enc_in,
                               const Matrix& dyn_aux, const Matrix& dyn_target,
                               const Matrix& trace_target, const std::vector<int>& labels) {
  JointStep out;
  ForwardCache ext_cache, disc_cache, enc_cache, dyn_cache;
  const Matrix latents = forward_cached(model.extractor, ext_in, ext_cache);

  const Matrix logits = forward_cached(model.discriminator, latents, disc_cache);
  const LossResult ce = softmax_cross_entropy(logits, labels);
  out.disc_loss = ce.value;
  const Matrix latent_grad_disc = backward(model.discriminator, disc_cache, ce.grad).input;

  const Matrix enc_out = forward_cached(model.action_encoder, enc_in, enc_cache);
  Matrix trace_hat = (enc_out.array() * latents.array()).rowwise().sum().matrix();

  Matrix trace_hat_grad;  // dL_pred / d(trace_hat)
  if (model.env_kind == EnvKind::Abr) {
    Matrix dyn_in(ext_in.rows(), dyn_aux.cols() + 1);
    dyn_in.leftCols(dyn_aux.cols()) = dyn_aux;
    dyn_in.col(dyn_aux.cols()) = trace_hat;
    const Matrix pred = forward_cached(model.dynamics, dyn_in, dyn_cache);
    const LossResult pl =
        weighted_two_head_loss(model.hyper.pred_loss, model.hyper.huber_delta, model.hyper.eta, pred,
                               dyn_target);
    out.pred_loss = pl.value;
    out.dynamics_grads = backward(model.dynamics, dyn_cache, pl.grad);
    trace_hat_grad = out.dynamics_grads.input.col(dyn_aux.cols());
  } else {
    const LossResult pl = loss(model.hyper.pred_loss, trace_hat, trace_target, model.hyper.huber_delta);
    out.pred_loss = pl.value;
    trace_hat_grad = pl.grad;
  }

  // Bilinear head: d(trace_hat)/d(latent) = enc_out and vice versa.
  const Matrix latent_grad_pred =
      (enc_out.array().colwise() * trace_hat_grad.col(0).array()).matrix();
  const Matrix enc_grad =
      (latents.array().colwise() * trace_hat_grad.col(0).array()).matrix();
  out.encoder_grads = backward(model.action_encoder, enc_cache, enc_grad);

  const Matrix latent_total = latent_grad_pred - model.kappa * latent_grad_disc;
  out.extractor_grads = backward(model.extractor, ext_cache, latent_total);
  return out;
}

CausalSimModel train_causalsim(const RCTDataset& dataset, const Hyperparams& hyper,
                               int exclude_policy_id) {
  CausalSimModel model;
  model.env_kind = dataset.env_kind;
  model.rank = hyper.rank;
  model.kappa = hyper.kappa;
  model.hyper = hyper;

  internal::TrainTensors data;
  if (dataset.env_kind == EnvKind::Abr) {
    double scales[4];
    data = internal::build_abr_tensors(dataset, exclude_policy_id, model.policy_ids, scales);
    model.thpt_scale = scales[0];
    model.dtime_scale = scales[1];
    model.size_scale = scales[2];
    model.buffer_scale = scales[3];
  } else {
    data = internal::build_lb_tensors(dataset, exclude_policy_id, model.policy_ids, &model.ptime_scale);
  }
  const int classes = static_cast<int>(model.policy_ids.size());
  if (classes < 2) {
    throw std::invalid_argument("adversarial training needs at least two source policies");
  }
  const int n = static_cast<int>(data.ext_in.rows());
  if (n == 0) throw std::invalid_argument("no training steps after exclusions");

  model.extractor = DenseNet::glorot(
      dims_with_hidden(static_cast<int>(data.ext_in.cols()), hyper.hidden_extractor, hyper.rank),
      sub_seed(hyper.seed, 1, stream::kInit), hyper.extractor_activation);
  const bool log_linear_extractor = dataset.env_kind == EnvKind::Lb && hyper.rank == 1 &&
                                    hyper.hidden_extractor.empty() &&
                                    hyper.extractor_activation == Activation::Exp;
  std::vector<double> gauge;
  if (log_linear_extractor) {
    // Start at the within-trajectory gauge estimate (falling back to the
    // exogenous-trace gauge), so u = m * gauge(a) and enc(a) = 1/gauge(a)
    // reproduce the factual trace exactly from step 0; adversarial training
    // refines the gauge from there.
    gauge = trajectory_gauge(dataset, exclude_policy_id);
    model.extractor.weights[0].setZero();
    model.extractor.weights[0](1, 0) = 1.0;  // the log-trace input column
    for (int a = 0; a < dataset.action_count; ++a) {
      model.extractor.weights[0](2 + a, 0) = gauge.empty() ? 0.0 : std::log(gauge[a]);
    }
    model.extractor.biases[0].setZero();
  }
  model.discriminator = DenseNet::glorot(
      dims_with_hidden(hyper.rank, hyper.hidden_discriminator, classes),
      sub_seed(hyper.seed, 2, stream::kInit));
  model.action_encoder = DenseNet::glorot(
      dims_with_hidden(static_cast<int>(data.enc_in.cols()), hyper.hidden_encoder, hyper.rank),
      sub_seed(hyper.seed, 3, stream::kInit));
  if (log_linear_extractor && hyper.hidden_encoder.empty()) {
    model.action_encoder.weights[0].setZero();
    model.action_encoder.biases[0].setZero();
    for (int a = 0; a < dataset.action_count; ++a) {
      model.action_encoder.weights[0](a, 0) = gauge.empty() ? 1.0 : 1.0 / gauge[a];
    }
  }
  if (dataset.env_kind == EnvKind::Abr) {
    model.dynamics = DenseNet::glorot(
        dims_with_hidden(static_cast<int>(data.dyn_aux.cols()) + 1, hyper.hidden_dynamics, 2),
        sub_seed(hyper.seed, 4, stream::kInit));
  }

  AdamState adam_ext(model.extractor, hyper.lr_extractor);
  AdamState adam_disc(model.discriminator, hyper.lr_discriminator);
  AdamState adam_enc(model.action_encoder, hyper.lr_predictor);
  std::optional<AdamState> adam_dyn;
  if (dataset.env_kind == EnvKind::Abr) adam_dyn.emplace(model.dynamics, hyper.lr_predictor);

  Rng batch_rng(sub_seed(hyper.seed, 5, stream::kBatch));
  const int batch = std::min(hyper.batch_size, n);
  const int disc_batch = std::min(hyper.disc_batch_size > 0 ? hyper.disc_batch_size : batch, n);
  std::vector<int> batch_labels(batch);
  std::vector<int> disc_labels(disc_batch);

  std::vector<int> decay_points;
  for (double frac : hyper.lr_decay_at) {
    decay_points.push_back(static_cast<int>(frac * hyper.num_train_it));
  }
  for (int it = 0; it < hyper.num_train_it; ++it) {
    for (int point : decay_points) {
      if (it == point && it > 0) {
        adam_ext.lr *= hyper.lr_decay;
        adam_disc.lr *= hyper.lr_decay;
        adam_enc.lr *= hyper.lr_decay;
        if (adam_dyn) adam_dyn->lr *= hyper.lr_decay;
      }
    }
    for (int j = 0; j < hyper.num_disc_it; ++j) {
      const auto idx = internal::sample_indices(batch_rng, n, disc_batch);
      for (int i = 0; i < disc_batch; ++i) disc_labels[i] = data.labels[idx[i]];
      const Matrix latents = model.extractor.forward(internal::gather_rows(data.ext_in, idx));
      ForwardCache cache;
      const Matrix logits = forward_cached(model.discriminator, latents, cache);
      const LossResult ce = softmax_cross_entropy(logits, disc_labels);
      adam_disc.step(model.discriminator, backward(model.discriminator, cache, ce.grad));
    }

    const auto idx = internal::sample_indices(batch_rng, n, batch);
    for (int i = 0; i < batch; ++i) batch_labels[i] = data.labels[idx[i]];
    const JointStep step = causalsim_joint_step(
        model, internal::gather_rows(data.ext_in, idx), internal::gather_rows(data.enc_in, idx),
        dataset.env_kind == EnvKind::Abr ? internal::gather_rows(data.dyn_aux, idx) : Matrix(),
        dataset.env_kind == EnvKind::Abr ? internal::gather_rows(data.dyn_target, idx) : Matrix(),
        internal::gather_rows(data.trace_target, idx), batch_labels);
    adam_ext.step(model.extractor, step.extractor_grads);
    adam_enc.step(model.action_encoder, step.encoder_grads);
    if (dataset.env_kind == EnvKind::Abr) adam_dyn->step(model.dynamics, step.dynamics_grads);
  }
  return model;
}

SLSimModel train_slsim(const RCTDataset& dataset, const Hyperparams& hyper, int exclude_policy_id) {
  SLSimModel model;
  model.env_kind = dataset.env_kind;
  model.hyper = hyper;

  internal::TrainTensors data;
  Matrix input, target;
  std::vector<int> policy_ids;
  if (dataset.env_kind == EnvKind::Abr) {
    double scales[4];
    data = internal::build_abr_tensors(dataset, exclude_policy_id, policy_ids, scales);
    model.thpt_scale = scales[0];
    model.dtime_scale = scales[1];
    model.size_scale = scales[2];
    model.buffer_scale = scales[3];
    // (buffer, factual throughput, chunk size) -> (next buffer, download time)
    input.resize(data.ext_in.rows(), 3);
    input.col(0) = data.dyn_aux.col(0);
    input.col(1) = data.ext_in.col(0);
    input.col(2) = data.dyn_aux.col(2);
    target = data.dyn_target;
  } else {
    data = internal::build_lb_tensors(dataset, exclude_policy_id, policy_ids, &model.ptime_scale);
    // (observed processing time, target server one-hot) -> processing time
    input = data.ext_in;
    target = data.trace_target;
  }
  const int n = static_cast<int>(input.rows());
  if (n == 0) throw std::invalid_argument("no training steps after exclusions");

  model.net = DenseNet::glorot(
      dims_with_hidden(static_cast<int>(input.cols()), hyper.hidden_dynamics,
                       static_cast<int>(target.cols())),
      sub_seed(hyper.seed, 7, stream::kInit));
  AdamState adam(model.net, hyper.lr_predictor);
  Rng batch_rng(sub_seed(hyper.seed, 8, stream::kBatch));
  const int batch = std::min(hyper.batch_size, n);

  std::vector<int> decay_points;
  for (double frac : hyper.lr_decay_at) {
    decay_points.push_back(static_cast<int>(frac * hyper.num_train_it));
  }
  for (int it = 0; it < hyper.num_train_it; ++it) {
    for (int point : decay_points) {
      if (it == point && it > 0) adam.lr *= hyper.lr_decay;
    }
    const auto idx = internal::sample_indices(batch_rng, n, batch);
    const Matrix x = internal::gather_rows(input, idx);
    const Matrix y = internal::gather_rows(target, idx);
    ForwardCache cache;
    const Matrix pred = forward_cached(model.net, x, cache);
    const LossResult pl = dataset.env_kind == EnvKind::Abr
                              ? weighted_two_head_loss(hyper.pred_loss, hyper.huber_delta, hyper.eta,
                                                       pred, y)
                              : loss(hyper.pred_loss, pred, y, hyper.huber_delta);
    adam.step(model.net, backward(model.net, cache, pl.grad));
  }
  return model;
}

namespace {

nlohmann::json scales_to_json(double thpt, double dtime, double size, double buffer, double ptime) {
  return nlohmann::json{{"thpt_scale", thpt},
                        {"dtime_scale", dtime},
                        {"size_scale", size},
                        {"buffer_scale", buffer},
                        {"ptime_scale", ptime}};
}

}  // namespace

nlohmann::json causalsim_to_json(const CausalSimModel& model) {
  nlohmann::json j;
  j["env_kind"] = to_string(model.env_kind);
  j["rank"] = model.rank;
  j["kappa"] = model.kappa;
  j["hyperparams"] = hyperparams_to_json(model.hyper);
  j["policy_ids"] = model.policy_ids;
  j["extractor"] = net_to_json(model.extractor);
  j["discriminator"] = net_to_json(model.discriminator);
  j["action_encoder"] = net_to_json(model.action_encoder);
  if (model.env_kind == EnvKind::Abr) j["dynamics"] = net_to_json(model.dynamics);
  j["normalization"] = scales_to_json(model.thpt_scale, model.dtime_scale, model.size_scale,
                                      model.buffer_scale, model.ptime_scale);
  j["dataset_fingerprint"] = model.dataset_hash;
  return j;
}

CausalSimModel causalsim_from_json(const nlohmann::json& j) {
  CausalSimModel model;
  model.env_kind = env_kind_from_string(j.at("env_kind").get<std::string>());
  model.rank = j.at("rank").get<int>();
  model.kappa = j.at("kappa").get<double>();
  model.hyper = hyperparams_from_json(j.at("hyperparams"));
  model.policy_ids = j.at("policy_ids").get<std::vector<int>>();
  model.extractor = net_from_json(j.at("extractor"));
  model.discriminator = net_from_json(j.at("discriminator"));
  model.action_encoder = net_from_json(j.at("action_encoder"));
  if (model.env_kind == EnvKind::Abr) model.dynamics = net_from_json(j.at("dynamics"));
  const auto& s = j.at("normalization");
  model.thpt_scale = s.at("thpt_scale").get<double>();
  model.dtime_scale = s.at("dtime_scale").get<double>();
  model.size_scale = s.at("size_scale").get<double>();
  model.buffer_scale = s.at("buffer_scale").get<double>();
  model.ptime_scale = s.at("ptime_scale").get<double>();
  model.dataset_hash = j.value("dataset_fingerprint", 0ULL);
  return model;
}

nlohmann::json slsim_to_json(const SLSimModel& model) {
  nlohmann::json j;
  j["env_kind"] = to_string(model.env_kind);
  j["hyperparams"] = hyperparams_to_json(model.hyper);
  j["net"] = net_to_json(model.net);
  j["normalization"] = scales_to_json(model.thpt_scale, model.dtime_scale, model.size_scale,
                                      model.buffer_scale, model.ptime_scale);
  j["dataset_fingerprint"] = model.dataset_hash;
  return j;
}

SLSimModel slsim_from_json(const nlohmann::json& j) {
  SLSimModel model;
  model.env_kind = env_kind_from_string(j.at("env_kind").get<std::string>());
  model.hyper = hyperparams_from_json(j.at("hyperparams"));
  model.net = net_from_json(j.at("net"));
  const auto& s = j.at("normalization");
  model.thpt_scale = s.at("thpt_scale").get<double>();
  model.dtime_scale = s.at("dtime_scale").get<double>();
  model.size_scale = s.at("size_scale").get<double>();
  model.buffer_scale = s.at("buffer_scale").get<double>();
  model.ptime_scale = s.at("ptime_scale").get<double>();
  model.dataset_hash = j.value("dataset_fingerprint", 0ULL);
  return model;
}

ConfusionReport confusion_matrix(const CausalSimModel& model, const RCTDataset& dataset) {
  const internal::ModelInputs inputs = internal::build_model_inputs(model, dataset, -1);

  const int classes = static_cast<int>(model.policy_ids.size());
  ConfusionReport report;
  report.policy_ids = model.policy_ids;
  report.mean_probabilities = Matrix::Zero(classes, classes);
  report.argmax_counts = Matrix::Zero(classes, classes);
  report.population_share.assign(classes, 0.0);

  std::int64_t total = 0;
  std::int64_t correct = 0;
  std::vector<std::int64_t> row_count(classes, 0);

  const Eigen::Index chunk = 65536;
  for (Eigen::Index start = 0; start < inputs.ext_in.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, inputs.ext_in.rows() - start);
    const Matrix latents = model.extractor.forward(inputs.ext_in.middleRows(start, len));
    const Matrix probs = softmax_rows(model.discriminator.forward(latents));
    for (Eigen::Index i = 0; i < len; ++i) {
      const int row = model.class_of_policy(inputs.policy_id[start + i]);
      if (row < 0) continue;  // left-out policy, not a discriminator class
      ++row_count[row];
      ++total;
      report.mean_probabilities.row(row) += probs.row(i);
      Eigen::Index argmax;
      probs.row(i).maxCoeff(&argmax);
      report.argmax_counts(row, argmax) += 1.0;
      if (static_cast<int>(argmax) == row) ++correct;
    }
  }
  for (int r = 0; r < classes; ++r) {
    if (row_count[r] > 0) report.mean_probabilities.row(r) /= static_cast<double>(row_count[r]);
    report.population_share[r] = total > 0 ? static_cast<double>(row_count[r]) / total : 0.0;
  }
  report.argmax_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  return report;
}

LatentComparison extract_latents(const CausalSimModel& model, const RCTDataset& dataset,
                                 int exclude_policy_id) {
  const internal::ModelInputs inputs = internal::build_model_inputs(model, dataset, exclude_policy_id);

  LatentComparison out;
  out.all_coordinates.resize(inputs.ext_in.rows(), model.rank);
  const Eigen::Index chunk = 65536;
  for (Eigen::Index start = 0; start < inputs.ext_in.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, inputs.ext_in.rows() - start);
    out.all_coordinates.middleRows(start, len) =
        model.extractor.forward(inputs.ext_in.middleRows(start, len));
  }
  out.extracted.assign(out.all_coordinates.col(0).data(),
                       out.all_coordinates.col(0).data() + out.all_coordinates.rows());
  out.truth = inputs.first_latent;
  return out;
}

}  // namespace csim
