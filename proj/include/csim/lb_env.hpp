#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include <json.hpp>

#include "csim/rng.hpp"
#include "csim/types.hpp"

namespace csim {

struct ServerFleet {
  std::vector<double> rates;  // work units per second, r_i = e^{u_i}
};

struct LbConfig {
  int n_servers = 8;
  std::vector<double> rates;      // filled from gen_fleet at collection time
  double load_factor = 0.8;       // offered load relative to total capacity
  double size_floor = 0.1;
  double regime_change_p = 1.0 / 12000.0;
  double mu_low = 10.0;
  double mu_high = 316.22776601683796;  // 10^2.5
  double sigma_frac = 0.5;              // sigma ~ U(0, sigma_frac * mu)
  int horizon = 300;

  // Deterministic inter-arrival gap: mean job size over the offered work rate.
  double inter_arrival() const;
};

nlohmann::json lb_config_to_json(const LbConfig& cfg);
LbConfig lb_config_from_json(const nlohmann::json& j);

// Mean of the bounded Pareto(alpha=1) regime means, used to set the arrival gap.
double expected_job_size(const LbConfig& cfg);

ServerFleet gen_fleet(std::uint64_t seed, int n_servers = 8);

struct JobStream {
  std::vector<double> sizes;
  int regime_changes = 0;
};

JobStream gen_job_sizes(std::uint64_t seed, int length, const LbConfig& cfg);

// Per-server FIFO queues draining continuously at rate 1, work measured in
// seconds-at-that-server.
class LbQueues {
 public:
  explicit LbQueues(int n_servers) : jobs_(n_servers), work_(n_servers, 0.0) {}

  void advance(double dt);
  void push(int server, double processing_seconds);
  double outstanding_work(int server) const { return work_[server]; }
  std::vector<int> counts() const;
  int n_servers() const { return static_cast<int>(jobs_.size()); }

 private:
  std::vector<std::deque<double>> jobs_;  // remaining processing seconds, FIFO
  std::vector<double> work_;
};

struct LbStepResult {
  double processing = 0.0;
  double latency = 0.0;
};

// Advances the clock by delta, then assigns a job of the given size to
// `server`: processing = size / rate, latency = queued work + processing.
LbStepResult lb_step(LbQueues& queues, const std::vector<double>& rates, double job_size, int server,
                     double delta);

// Running processing-time means for the tracker policy; rates are
// identifiable from them only up to the unknown job-size scale.
struct TrackerState {
  std::vector<double> sum;
  std::vector<std::int64_t> count;
  double global_sum = 0.0;
  std::int64_t global_count = 0;

  explicit TrackerState(int n_servers) : sum(n_servers, 0.0), count(n_servers, 0) {}
  void observe(int server, double processing);
  // m_bar / m_bar_i, with unobserved servers at 1.
  std::vector<double> rate_estimates() const;
};

// Kinds: server_limited (params i, j), shortest_queue, power_of_k (param k),
// random, oracle, tracker, fixed (param server). Ties break to the lowest
// server index.
int lb_policy_decide(const PolicySpec& spec, const std::vector<int>& counts, const TrackerState& tracker,
                     const std::vector<double>& rates, Rng& rng);

// Runs one job sequence through the fleet. Steps log obs = queue counts at
// arrival, trace = processing time, latent = job size.
Trajectory run_lb_episode(const LbConfig& cfg, std::span<const double> sizes, const PolicySpec& spec,
                          int policy_id, Rng& policy_rng, std::int64_t traj_id);

// Reconstructs per-step latency from a logged episode by replaying the
// queues with the recorded routing and processing times.
std::vector<double> lb_latencies(const Trajectory& traj, const LbConfig& cfg);

// The sixteen balancing policies used by the load-balancing experiments.
std::vector<PolicySpec> default_lb_policies();

}  // namespace csim
