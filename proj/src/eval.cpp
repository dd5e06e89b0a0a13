#include "csim/eval.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "csim/abr_env.hpp"
#include "csim/dataset_io.hpp"
#include "csim/lb_env.hpp"
#include "csim/metrics.hpp"
#include "csim/rct.hpp"

namespace csim {

std::string to_string(SimulatorKind kind) {
  switch (kind) {
    case SimulatorKind::CausalSim: return "causalsim";
    case SimulatorKind::ExpertSim: return "expertsim";
    case SimulatorKind::SLSim: return "slsim";
  }
  return "causalsim";
}

namespace {

RolloutResult run_simulator(SimulatorKind kind, const Simulators& sims, const RCTDataset& dataset,
                            int traj_index, const PolicySpec& target, int target_policy_id) {
  switch (kind) {
    case SimulatorKind::CausalSim:
      if (sims.causal == nullptr) throw std::invalid_argument("no latent-factor model supplied");
      return causalsim_rollout(*sims.causal, dataset, traj_index, target, target_policy_id);
    case SimulatorKind::ExpertSim:
      return expertsim_rollout(dataset, traj_index, target, target_policy_id);
    case SimulatorKind::SLSim:
      if (sims.sl == nullptr) throw std::invalid_argument("no supervised model supplied");
      return slsim_rollout(*sims.sl, dataset, traj_index, target, target_policy_id);
  }
  throw std::invalid_argument("unknown simulator");
}

}  // namespace

PairMetrics evaluate_pair(const RCTDataset& dataset, SimulatorKind kind, const Simulators& sims,
                          int source_policy_id, int target_policy_id, int source_cap) {
  PairMetrics out;
  out.source_policy = source_policy_id;
  out.target_policy = target_policy_id;
  out.simulator = to_string(kind);
  const PolicySpec& target = dataset.policy_registry.at(target_policy_id);

  std::vector<int> source_indices;
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    if (dataset.trajectories[i].policy_id == source_policy_id) {
      source_indices.push_back(static_cast<int>(i));
      if (source_cap > 0 && static_cast<int>(source_indices.size()) >= source_cap) break;
    }
  }
  if (source_indices.empty()) {
    throw std::invalid_argument("no source trajectories for policy " + std::to_string(source_policy_id));
  }
  out.n_rollouts = static_cast<int>(source_indices.size());

  if (dataset.env_kind == EnvKind::Abr) {
    const AbrConfig cfg = abr_config_from_json(dataset.env_config);
    std::vector<double> sim_buffers, oracle_nb_all, sim_nb_all;
    double mse_total = 0.0;
    for (int idx : source_indices) {
      const RolloutResult rollout = run_simulator(kind, sims, dataset, idx, target, target_policy_id);
      for (const Step& s : rollout.trajectory.steps) sim_buffers.push_back(s.obs[0]);

      const Trajectory oracle = counterfactual_ground_truth(dataset, idx, target, target_policy_id);
      const auto oracle_nb = next_buffer_series(oracle, cfg.chunk_seconds, cfg.buffer_cap);
      mse_total += mse(oracle_nb, rollout.next_buffers);
      oracle_nb_all.insert(oracle_nb_all.end(), oracle_nb.begin(), oracle_nb.end());
      sim_nb_all.insert(sim_nb_all.end(), rollout.next_buffers.begin(), rollout.next_buffers.end());
    }
    out.mape = mape(oracle_nb_all, sim_nb_all);
    out.mse = mse_total / static_cast<double>(source_indices.size());

    std::vector<double> target_buffers;
    for (const auto& traj : dataset.trajectories) {
      if (traj.policy_id != target_policy_id) continue;
      for (const Step& s : traj.steps) target_buffers.push_back(s.obs[0]);
    }
    if (!target_buffers.empty()) out.emd = emd(sim_buffers, target_buffers);
    return out;
  }

  const LbConfig cfg = lb_config_from_json(dataset.env_config);
  std::vector<double> oracle_pt, sim_pt, oracle_lat, sim_lat;
  double mse_total = 0.0;
  for (int idx : source_indices) {
    const RolloutResult rollout = run_simulator(kind, sims, dataset, idx, target, target_policy_id);
    const Trajectory oracle = counterfactual_ground_truth(dataset, idx, target, target_policy_id);
    const auto oracle_latencies = lb_latencies(oracle, cfg);
    std::vector<double> o_pt, s_pt;
    for (const Step& s : oracle.steps) o_pt.push_back(s.trace[0]);
    for (const Step& s : rollout.trajectory.steps) s_pt.push_back(s.trace[0]);
    mse_total += mse(o_pt, s_pt);
    oracle_pt.insert(oracle_pt.end(), o_pt.begin(), o_pt.end());
    sim_pt.insert(sim_pt.end(), s_pt.begin(), s_pt.end());
    oracle_lat.insert(oracle_lat.end(), oracle_latencies.begin(), oracle_latencies.end());
    sim_lat.insert(sim_lat.end(), rollout.latencies.begin(), rollout.latencies.end());
  }
  out.mape = mape(oracle_pt, sim_pt);
  out.mse = mse_total / static_cast<double>(source_indices.size());
  // Oracle latencies include zero waits on an empty fleet only when the
  // processing time is also zero, which the size floor rules out.
  out.latency_mape = mape(oracle_lat, sim_lat);
  return out;
}

std::vector<double> EvalReport::collect(const std::string& simulator,
                                        double PairMetrics::* field) const {
  std::vector<double> out;
  for (const auto& e : entries) {
    if (e.simulator == simulator && !std::isnan(e.*field)) out.push_back(e.*field);
  }
  return out;
}

EvalReport eval_grid(const RCTDataset& dataset, const std::vector<int>& targets,
                     const std::map<int, CausalSimModel>& causal_models,
                     const std::map<int, SLSimModel>& sl_models,
                     const std::vector<SimulatorKind>& kinds, int source_cap) {
  EvalReport report;
  report.seed = dataset.seed;
  for (int target : targets) {
    for (std::size_t source = 0; source < dataset.policy_registry.size(); ++source) {
      const int source_id = static_cast<int>(source);
      if (source_id == target) continue;  // the diagonal is not a counterfactual
      for (SimulatorKind kind : kinds) {
        Simulators sims;
        if (kind == SimulatorKind::CausalSim) {
          auto it = causal_models.find(target);
          if (it == causal_models.end()) continue;  // no model for this target: skip
          sims.causal = &it->second;
        }
        if (kind == SimulatorKind::SLSim) {
          auto it = sl_models.find(target);
          if (it == sl_models.end()) continue;
          sims.sl = &it->second;
        }
        report.entries.push_back(evaluate_pair(dataset, kind, sims, source_id, target, source_cap));
      }
    }
  }
  return report;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "simulator,source_policy,target_policy,n_rollouts,emd,mape,mse,latency_mape\n";
  for (const auto& e : report.entries) {
    out << e.simulator << "," << e.source_policy << "," << e.target_policy << "," << e.n_rollouts
        << "," << format_double(e.emd) << "," << format_double(e.mape) << "," << format_double(e.mse)
        << "," << format_double(e.latency_mape) << "\n";
  }
}

EvalReport read_eval_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  EvalReport report;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    PairMetrics e;
    std::getline(ss, e.simulator, ',');
    std::getline(ss, field, ',');
    e.source_policy = std::stoi(field);
    std::getline(ss, field, ',');
    e.target_policy = std::stoi(field);
    std::getline(ss, field, ',');
    e.n_rollouts = std::stoi(field);
    std::getline(ss, field, ',');
    e.emd = std::stod(field);
    std::getline(ss, field, ',');
    e.mape = std::stod(field);
    std::getline(ss, field, ',');
    e.mse = std::stod(field);
    std::getline(ss, field, ',');
    e.latency_mape = std::stod(field);
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::vector<ParetoPoint> pareto_sweep(const CausalSimModel& model, const RCTDataset& dataset,
                                      const std::vector<PolicySpec>& grid, int source_cap) {
  if (dataset.env_kind != EnvKind::Abr) {
    throw std::invalid_argument("parameter sweeps are defined for the streaming environment");
  }
  if (grid.empty()) throw std::invalid_argument("empty parameter grid");
  const AbrConfig cfg = abr_config_from_json(dataset.env_config);

  std::vector<ParetoPoint> points;
  points.reserve(grid.size());
  for (const PolicySpec& spec : grid) {
    double bitrate_sum = 0.0, qoe_sum = 0.0;
    std::int64_t steps = 0;
    int used = 0;
    std::vector<std::pair<double, double>> per_traj;  // (stall seconds, playback seconds)
    for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
      if (source_cap > 0 && used >= source_cap) break;
      ++used;
      const RolloutResult r = causalsim_rollout(model, dataset, static_cast<int>(i), spec, -1);
      per_traj.emplace_back(rebuffer_seconds(r.trajectory),
                            cfg.chunk_seconds * r.trajectory.horizon());
      for (const Step& s : r.trajectory.steps) bitrate_sum += cfg.ladder[s.action];
      for (double q : qoe_per_step(r.trajectory, cfg.ladder)) qoe_sum += q;
      steps += r.trajectory.horizon();
    }
    double stall_seconds = 0.0, session_seconds = 0.0;
    for (const auto& [stall, playback] : per_traj) {
      stall_seconds += stall;
      session_seconds += stall + playback;
    }
    ParetoPoint p;
    p.spec = spec;
    p.stall_rate = session_seconds > 0 ? stall_seconds / session_seconds : 0.0;
    p.mean_bitrate = steps > 0 ? bitrate_sum / static_cast<double>(steps) : 0.0;
    p.mean_qoe = steps > 0 ? qoe_sum / static_cast<double>(steps) : 0.0;

    // Percentile bootstrap over trajectories for the stall rate.
    Rng boot(sub_seed(dataset.seed, points.size(), stream::kBatch));
    std::vector<double> resampled;
    const int n = static_cast<int>(per_traj.size());
    for (int b = 0; b < 1000 && n > 0; ++b) {
      double stalls = 0.0, session = 0.0;
      for (int i = 0; i < n; ++i) {
        const auto& [stall, playback] = per_traj[boot.uniform_int(n)];
        stalls += stall;
        session += stall + playback;
      }
      resampled.push_back(session > 0 ? stalls / session : 0.0);
    }
    std::sort(resampled.begin(), resampled.end());
    if (!resampled.empty()) {
      p.stall_rate_lo = resampled[static_cast<std::size_t>(0.025 * (resampled.size() - 1))];
      p.stall_rate_hi = resampled[static_cast<std::size_t>(0.975 * (resampled.size() - 1))];
    }
    points.push_back(std::move(p));
  }

  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      if (i == j) continue;
      const bool weakly_better = points[j].stall_rate <= points[i].stall_rate &&
                                 points[j].mean_bitrate >= points[i].mean_bitrate;
      const bool strictly = points[j].stall_rate < points[i].stall_rate ||
                            points[j].mean_bitrate > points[i].mean_bitrate;
      dominated = weakly_better && strictly;
    }
    points[i].on_frontier = !dominated;
  }
  return points;
}

}  // namespace csim
