#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include <json.hpp>

#include "csim/rng.hpp"
#include "csim/types.hpp"

namespace csim {

// Parameters of the Markov-modulated capacity generator for one path.
struct MarkovParams {
  double v = 0.0;       // expected dwell time of the mean state, steps
  double p = 0.0;       // per-step change probability, 1/v
  double low = 0.0;     // mean-state bounds, Mbps
  double high = 0.0;
  double s0 = 0.0;      // initial mean state
  double c_sigma = 0.0; // relative noise of the per-step capacity draw
};

struct NetworkPath {
  double rtt = 0.0;                 // seconds
  std::vector<double> capacities;   // latent capacity per chunk, Mbps
  std::vector<double> mean_states;  // Markov mean per step, for diagnostics
  MarkovParams markov;
};

struct AbrConfig {
  std::vector<double> ladder{0.3, 0.75, 1.2, 1.85, 2.85, 4.3};  // Mbps, ascending
  double chunk_seconds = 4.0;
  double buffer_cap = 10.0;
  double rtt_low = 0.010, rtt_high = 0.500;
  double capacity_floor = 0.05;  // Mbps
  double mean_low = 0.5, mean_high = 4.5;  // mean-state sampling range, Mbps
  double mean_spread_min = 0.3;            // required (h-l)/(h+l)
  double dwell_low = 30.0, dwell_high = 100.0;
  double sigma_low = 0.05, sigma_high = 0.3;
  int horizon = 100;

  int action_count() const { return static_cast<int>(ladder.size()); }
  // Chunk size implied by a ladder index, in megabits.
  double chunk_size(int action) const { return ladder[action] * chunk_seconds; }
  // Slow start opens at two MTU-sized packets per RTT, expressed in Mbps.
  double start_rate(double rtt) const { return 2.0 * 1500.0 * 8.0 / 1e6 / rtt; }
};

nlohmann::json abr_config_to_json(const AbrConfig& cfg);
AbrConfig abr_config_from_json(const nlohmann::json& j);

// Positive root of 1 - exp(-x(h-s)) - exp(-x(s-l)) = 0: the Laplace rate at
// which half the mass around s falls outside [l, h]. Bisection to 1e-10.
double solve_lambda(double low, double high, double s_prev);

NetworkPath gen_markov_trace(std::uint64_t seed, int length, const AbrConfig& cfg);

// Continuous slow-start model: the rate grows as start_rate * 2^(t/rtt)
// until it reaches capacity, then stays there. Returns the time to move
// chunk_mb megabits. capacity <= start_rate degrades to a constant-rate
// transfer.
double download_time(double chunk_mb, double capacity, double rtt, double start_rate);

// chunk_mb / download_time, written as its own closed form.
double achieved_throughput_closed_form(double chunk_mb, double capacity, double rtt, double start_rate);

struct BufferUpdate {
  double next_buffer = 0.0;  // buffer at the next chunk request (after any wait)
  double rebuffer = 0.0;     // stall seconds incurred by this download
  double wait = 0.0;         // pause before the next request when the cap is hit
};

BufferUpdate buffer_update(double buffer, double download_seconds, double chunk_seconds, double buffer_cap);

// Rolling per-chunk view the policies see.
struct AbrState {
  double buffer = 0.0;
  int t = 0;
  // (achieved throughput, download time, bitrate), oldest first, last 5 kept.
  std::deque<std::array<double, 3>> history;

  void push_history(double throughput, double dtime, double bitrate) {
    history.push_back({throughput, dtime, bitrate});
    if (history.size() > 5) history.pop_front();
  }
};

// Bitrate index chosen by `spec` in `state`. Supported kinds: bba, bola,
// random, bba_random, mpc, rate, rate_optimistic, rate_pessimistic.
int abr_policy_decide(const PolicySpec& spec, const AbrState& state, const AbrConfig& cfg, Rng& rng);

// Runs one streaming session over the given per-chunk capacities. Steps
// log obs = (buffer, previous throughput), trace = (throughput, download
// time), latent = (capacity, rtt).
Trajectory run_episode(std::span<const double> capacities, double rtt, const PolicySpec& spec,
                       int policy_id, const AbrConfig& cfg, int horizon, Rng& policy_rng,
                       std::int64_t traj_id);

// The nine bitrate policies used by the synthetic streaming experiments.
std::vector<PolicySpec> default_abr_policies();

}  // namespace csim
