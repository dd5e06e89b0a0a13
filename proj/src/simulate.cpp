#include "csim/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "csim/abr_env.hpp"
#include "csim/lb_env.hpp"
#include "csim/train_internal.hpp"

namespace csim {

namespace {

constexpr double kThroughputFloorMbps = 1e-3;
constexpr double kProcessingFloorSeconds = 1e-4;

void check_env(EnvKind model_env, EnvKind data_env) {
  if (model_env != data_env) {
    throw std::invalid_argument("model and dataset environments disagree");
  }
}

// Batched extractor pass over the factual steps of one trajectory.
Matrix factual_latents_abr(const CausalSimModel& model, const Trajectory& source, const AbrConfig& cfg) {
  Matrix ext_in(source.horizon(), internal::kAbrExtDim);
  for (int t = 0; t < source.horizon(); ++t) {
    const Step& s = source.steps[t];
    internal::fill_abr_ext_row(ext_in.row(t), s.trace[0] / model.thpt_scale,
                               s.trace[1] / model.dtime_scale,
                               cfg.chunk_size(s.action) / model.size_scale);
  }
  return model.extractor.forward(ext_in);
}

// Encoder outputs for all actions at once; the encoder input depends only
// on the action.
Matrix encoder_table_abr(const CausalSimModel& model, const AbrConfig& cfg) {
  Matrix enc_in(cfg.action_count(), 1);
  for (int a = 0; a < cfg.action_count(); ++a) enc_in(a, 0) = cfg.chunk_size(a) / model.size_scale;
  return model.action_encoder.forward(enc_in);
}

}  // namespace

std::vector<double> next_buffer_series(const Trajectory& traj, double chunk_seconds, double buffer_cap) {
  std::vector<double> out;
  out.reserve(traj.steps.size());
  for (const Step& s : traj.steps) {
    const BufferUpdate bu = buffer_update(s.obs[0], s.trace[1], chunk_seconds, buffer_cap);
    out.push_back(bu.next_buffer);
  }
  return out;
}

RolloutResult causalsim_rollout(const CausalSimModel& model, const RCTDataset& dataset, int traj_index,
                                const PolicySpec& target, int target_policy_id) {
  check_env(model.env_kind, dataset.env_kind);
  const Trajectory& source = dataset.trajectories.at(traj_index);
  Rng policy_rng(sub_seed(dataset.seed, source.id, stream::kPolicy));

  RolloutResult out;
  out.trajectory.id = source.id;
  out.trajectory.policy_id = target_policy_id;

  if (model.env_kind == EnvKind::Abr) {
    const AbrConfig cfg = abr_config_from_json(dataset.env_config);
    const Matrix latents = factual_latents_abr(model, source, cfg);
    const Matrix enc_table = encoder_table_abr(model, cfg);

    AbrState state;
    state.buffer = source.steps.front().obs[0];
    double prev_thpt = source.steps.front().obs[1];
    Matrix dyn_in(1, 4);
    for (int t = 0; t < source.horizon(); ++t) {
      const int action = abr_policy_decide(target, state, cfg, policy_rng);
      const double size = cfg.chunk_size(action);
      const double recon_scaled = enc_table.row(action).dot(latents.row(t));
      const double thpt = std::max(recon_scaled * model.thpt_scale, kThroughputFloorMbps);
      const double dtime = size / thpt;

      dyn_in(0, 0) = state.buffer / model.buffer_scale;
      dyn_in(0, 1) = prev_thpt / model.thpt_scale;
      dyn_in(0, 2) = size / model.size_scale;
      dyn_in(0, 3) = thpt / model.thpt_scale;
      const Matrix pred = model.dynamics.forward(dyn_in);
      const double next_buffer =
          std::clamp(pred(0, 0) * model.buffer_scale, 0.0, cfg.buffer_cap);
      const double dyn_dtime = pred(0, 1) * model.dtime_scale;

      Step step;
      step.obs = {state.buffer, prev_thpt};
      step.action = action;
      step.trace = {thpt, dtime};
      out.trajectory.steps.push_back(std::move(step));
      out.next_buffers.push_back(next_buffer);
      out.dyn_download_times.push_back(dyn_dtime);

      state.buffer = next_buffer;
      state.t = t + 1;
      state.push_history(thpt, dtime, cfg.ladder[action]);
      prev_thpt = thpt;
    }
    return out;
  }

  const LbConfig cfg = lb_config_from_json(dataset.env_config);
  Matrix ext_in(1, internal::lb_ext_dim(cfg.n_servers));
  Matrix enc_in = Matrix::Identity(cfg.n_servers, cfg.n_servers);
  const Matrix enc_table = model.action_encoder.forward(enc_in);

  LbQueues queues(cfg.n_servers);
  TrackerState tracker(cfg.n_servers);
  const double delta = cfg.inter_arrival();
  for (int k = 0; k < source.horizon(); ++k) {
    const Step& factual = source.steps[k];
    queues.advance(k == 0 ? 0.0 : delta);
    const auto counts = queues.counts();
    const int server = lb_policy_decide(target, counts, tracker, cfg.rates, policy_rng);

    ext_in.setZero();
    internal::fill_lb_ext_row(ext_in.row(0), factual.trace[0] / model.ptime_scale, factual.action);
    const Matrix latent = model.extractor.forward(ext_in);
    const double recon_scaled = enc_table.row(server).dot(latent.row(0));
    const double processing = std::max(recon_scaled * model.ptime_scale, kProcessingFloorSeconds);

    Step step;
    step.obs.assign(counts.begin(), counts.end());
    step.action = server;
    step.trace = {processing};
    out.trajectory.steps.push_back(std::move(step));
    out.latencies.push_back(queues.outstanding_work(server) + processing);

    queues.push(server, processing);
    tracker.observe(server, processing);
  }
  return out;
}

RolloutResult expertsim_rollout(const RCTDataset& dataset, int traj_index, const PolicySpec& target,
                                int target_policy_id) {
  if (dataset.env_kind != EnvKind::Abr) {
    throw std::invalid_argument(
        "trace replay assumes the trace is exogenous; load-balancing processing times are not, so "
        "there is no ExpertSim for LB");
  }
  const Trajectory& source = dataset.trajectories.at(traj_index);
  const AbrConfig cfg = abr_config_from_json(dataset.env_config);
  Rng policy_rng(sub_seed(dataset.seed, source.id, stream::kPolicy));

  RolloutResult out;
  out.trajectory.id = source.id;
  out.trajectory.policy_id = target_policy_id;

  AbrState state;
  state.buffer = source.steps.front().obs[0];
  double prev_thpt = source.steps.front().obs[1];
  for (int t = 0; t < source.horizon(); ++t) {
    const int action = abr_policy_decide(target, state, cfg, policy_rng);
    const double size = cfg.chunk_size(action);
    const double thpt = source.steps[t].trace[0];  // replayed as exogenous
    const double dtime = size / thpt;

    Step step;
    step.obs = {state.buffer, prev_thpt};
    step.action = action;
    step.trace = {thpt, dtime};
    out.trajectory.steps.push_back(std::move(step));

    const BufferUpdate bu = buffer_update(state.buffer, dtime, cfg.chunk_seconds, cfg.buffer_cap);
    out.next_buffers.push_back(bu.next_buffer);
    out.dyn_download_times.push_back(dtime);

    state.buffer = bu.next_buffer;
    state.t = t + 1;
    state.push_history(thpt, dtime, cfg.ladder[action]);
    prev_thpt = thpt;
  }
  return out;
}

RolloutResult slsim_rollout(const SLSimModel& model, const RCTDataset& dataset, int traj_index,
                            const PolicySpec& target, int target_policy_id) {
  check_env(model.env_kind, dataset.env_kind);
  const Trajectory& source = dataset.trajectories.at(traj_index);
  Rng policy_rng(sub_seed(dataset.seed, source.id, stream::kPolicy));

  RolloutResult out;
  out.trajectory.id = source.id;
  out.trajectory.policy_id = target_policy_id;

  if (model.env_kind == EnvKind::Abr) {
    const AbrConfig cfg = abr_config_from_json(dataset.env_config);
    AbrState state;
    state.buffer = source.steps.front().obs[0];
    double prev_thpt = source.steps.front().obs[1];
    Matrix in(1, 3);
    for (int t = 0; t < source.horizon(); ++t) {
      const int action = abr_policy_decide(target, state, cfg, policy_rng);
      const double size = cfg.chunk_size(action);
      const double factual_thpt = source.steps[t].trace[0];

      in(0, 0) = state.buffer / model.buffer_scale;
      in(0, 1) = factual_thpt / model.thpt_scale;
      in(0, 2) = size / model.size_scale;
      const Matrix pred = model.net.forward(in);
      const double next_buffer =
          std::clamp(pred(0, 0) * model.buffer_scale, 0.0, cfg.buffer_cap);
      const double dtime = std::max(pred(0, 1) * model.dtime_scale, 0.0);

      Step step;
      step.obs = {state.buffer, prev_thpt};
      step.action = action;
      step.trace = {factual_thpt, dtime};
      out.trajectory.steps.push_back(std::move(step));
      out.next_buffers.push_back(next_buffer);
      out.dyn_download_times.push_back(dtime);

      state.buffer = next_buffer;
      state.t = t + 1;
      state.push_history(factual_thpt, dtime, cfg.ladder[action]);
      prev_thpt = factual_thpt;
    }
    return out;
  }

  const LbConfig cfg = lb_config_from_json(dataset.env_config);
  LbQueues queues(cfg.n_servers);
  TrackerState tracker(cfg.n_servers);
  const double delta = cfg.inter_arrival();
  Matrix in(1, 1 + cfg.n_servers);
  for (int k = 0; k < source.horizon(); ++k) {
    const Step& factual = source.steps[k];
    queues.advance(k == 0 ? 0.0 : delta);
    const auto counts = queues.counts();
    const int server = lb_policy_decide(target, counts, tracker, cfg.rates, policy_rng);

    in.setZero();
    in(0, 0) = factual.trace[0] / model.ptime_scale;
    in(0, 1 + server) = 1.0;
    const Matrix pred = model.net.forward(in);
    const double processing = std::max(pred(0, 0) * model.ptime_scale, kProcessingFloorSeconds);

    Step step;
    step.obs.assign(counts.begin(), counts.end());
    step.action = server;
    step.trace = {processing};
    out.trajectory.steps.push_back(std::move(step));
    out.latencies.push_back(queues.outstanding_work(server) + processing);

    queues.push(server, processing);
    tracker.observe(server, processing);
  }
  return out;
}

}  // namespace csim
