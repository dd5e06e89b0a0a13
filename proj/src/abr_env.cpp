#include "csim/abr_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace csim {

nlohmann::json abr_config_to_json(const AbrConfig& cfg) {
  return nlohmann::json{
      {"ladder", cfg.ladder},
      {"chunk_seconds", cfg.chunk_seconds},
      {"buffer_cap", cfg.buffer_cap},
      {"rtt_low", cfg.rtt_low},
      {"rtt_high", cfg.rtt_high},
      {"capacity_floor", cfg.capacity_floor},
      {"mean_low", cfg.mean_low},
      {"mean_high", cfg.mean_high},
      {"mean_spread_min", cfg.mean_spread_min},
      {"dwell_low", cfg.dwell_low},
      {"dwell_high", cfg.dwell_high},
      {"sigma_low", cfg.sigma_low},
      {"sigma_high", cfg.sigma_high},
      {"horizon", cfg.horizon},
  };
}

AbrConfig abr_config_from_json(const nlohmann::json& j) {
  AbrConfig cfg;
  cfg.ladder = j.value("ladder", cfg.ladder);
  cfg.chunk_seconds = j.value("chunk_seconds", cfg.chunk_seconds);
  cfg.buffer_cap = j.value("buffer_cap", cfg.buffer_cap);
  cfg.rtt_low = j.value("rtt_low", cfg.rtt_low);
  cfg.rtt_high = j.value("rtt_high", cfg.rtt_high);
  cfg.capacity_floor = j.value("capacity_floor", cfg.capacity_floor);
  cfg.mean_low = j.value("mean_low", cfg.mean_low);
  cfg.mean_high = j.value("mean_high", cfg.mean_high);
  cfg.mean_spread_min = j.value("mean_spread_min", cfg.mean_spread_min);
  cfg.dwell_low = j.value("dwell_low", cfg.dwell_low);
  cfg.dwell_high = j.value("dwell_high", cfg.dwell_high);
  cfg.sigma_low = j.value("sigma_low", cfg.sigma_low);
  cfg.sigma_high = j.value("sigma_high", cfg.sigma_high);
  cfg.horizon = j.value("horizon", cfg.horizon);
  if (!std::is_sorted(cfg.ladder.begin(), cfg.ladder.end()) ||
      std::adjacent_find(cfg.ladder.begin(), cfg.ladder.end()) != cfg.ladder.end()) {
    throw std::invalid_argument("bitrate ladder must be strictly increasing");
  }
  return cfg;
}

double solve_lambda(double low, double high, double s_prev) {
  if (!(low < s_prev && s_prev < high)) {
    throw std::invalid_argument("solve_lambda needs low < s_prev < high");
  }
  auto f = [&](double x) {
    return 1.0 - std::exp(-x * (high - s_prev)) - std::exp(-x * (s_prev - low));
  };
  double lo = 1e-12;
  double hi = 1.0;
  while (f(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 1e12) throw std::runtime_error("solve_lambda failed to bracket a root");
  }
  // f is strictly increasing from -1 toward 1, so the root is unique.
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

NetworkPath gen_markov_trace(std::uint64_t seed, int length, const AbrConfig& cfg) {
  if (length < 1) throw std::invalid_argument("trace length must be >= 1");
  Rng rng(seed);
  NetworkPath path;
  path.rtt = rng.uniform(cfg.rtt_low, cfg.rtt_high);

  MarkovParams mp;
  mp.v = rng.uniform(cfg.dwell_low, cfg.dwell_high);
  mp.p = 1.0 / mp.v;
  const int kMaxTries = 10000;
  int tries = 0;
  for (;; ++tries) {
    if (tries >= kMaxTries) throw std::runtime_error("mean-state bound sampling exceeded retry cap");
    double a = rng.uniform(cfg.mean_low, cfg.mean_high);
    double b = rng.uniform(cfg.mean_low, cfg.mean_high);
    mp.low = std::min(a, b);
    mp.high = std::max(a, b);
    if (mp.high > mp.low && (mp.high - mp.low) / (mp.high + mp.low) > cfg.mean_spread_min) break;
  }
  mp.s0 = rng.uniform(mp.low, mp.high);
  mp.c_sigma = rng.uniform(cfg.sigma_low, cfg.sigma_high);
  path.markov = mp;

  path.capacities.reserve(length);
  path.mean_states.reserve(length);
  double state = mp.s0;
  for (int t = 0; t < length; ++t) {
    if (rng.uniform() < mp.p) {
      const double lambda = solve_lambda(mp.low, mp.high, state);
      int tries2 = 0;
      for (;; ++tries2) {
        if (tries2 >= kMaxTries) throw std::runtime_error("truncated Laplace sampling exceeded retry cap");
        const double candidate = rng.laplace(state, lambda);
        if (candidate >= mp.low && candidate <= mp.high) {
          state = candidate;
          break;
        }
      }
    }
    path.mean_states.push_back(state);
    const double capacity = std::max(cfg.capacity_floor, rng.normal(state, state * mp.c_sigma));
    path.capacities.push_back(capacity);
  }
  return path;
}

double download_time(double chunk_mb, double capacity, double rtt, double start_rate) {
  if (chunk_mb <= 0.0 || capacity <= 0.0) {
    throw std::invalid_argument("download_time needs positive chunk size and capacity");
  }
  if (capacity <= start_rate) return chunk_mb / capacity;
  const double rtt_hat = rtt / std::log(2.0);
  const double ramp_mb = rtt_hat * (capacity - start_rate);  // data moved while ramping up
  if (chunk_mb >= ramp_mb) {
    return rtt_hat * std::log(capacity / start_rate) + (chunk_mb - ramp_mb) / capacity;
  }
  // Transfer completes inside the ramp: chunk = start_rate * rtt_hat * (e^(d/rtt_hat) - 1).
  return rtt_hat * std::log(chunk_mb / (rtt_hat * start_rate) + 1.0);
}

double achieved_throughput_closed_form(double chunk_mb, double capacity, double rtt, double start_rate) {
  if (chunk_mb <= 0.0 || capacity <= 0.0) {
    throw std::invalid_argument("achieved throughput needs positive chunk size and capacity");
  }
  if (capacity <= start_rate) return capacity;
  const double rtt_hat = rtt / std::log(2.0);
  if (chunk_mb >= rtt_hat * (capacity - start_rate)) {
    return capacity /
           (1.0 + rtt_hat * (capacity * std::log(capacity / start_rate) - capacity + start_rate) / chunk_mb);
  }
  return chunk_mb / (rtt_hat * std::log(chunk_mb / (rtt_hat * start_rate) + 1.0));
}

BufferUpdate buffer_update(double buffer, double download_seconds, double chunk_seconds, double buffer_cap) {
  BufferUpdate out;
  out.rebuffer = std::max(0.0, download_seconds - buffer);
  const double after = std::max(0.0, buffer - download_seconds) + chunk_seconds;
  if (after > buffer_cap) {
    out.wait = after - buffer_cap;
    out.next_buffer = buffer_cap;
  } else {
    out.next_buffer = after;
  }
  return out;
}

namespace {

// Buffer-map policy: lowest rate below the reservoir, highest above
// reservoir + cushion, in between the largest ladder entry at or under a
// linear interpolation of the rate range.
int bba_decide(double buffer, double reservoir, double cushion, const AbrConfig& cfg) {
  const int top = cfg.action_count() - 1;
  if (buffer <= reservoir) return 0;
  if (buffer >= reservoir + cushion) return top;
  const double frac = (buffer - reservoir) / cushion;
  const double value = cfg.ladder.front() + frac * (cfg.ladder.back() - cfg.ladder.front());
  int choice = 0;
  for (int i = 0; i <= top; ++i) {
    if (cfg.ladder[i] <= value) choice = i;
  }
  return choice;
}

int bola_decide(double buffer, double v_param, double gamma, const AbrConfig& cfg) {
  const double q_chunks = buffer / cfg.chunk_seconds;
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int m = 0; m < cfg.action_count(); ++m) {
    const double size = cfg.chunk_size(m);
    const double utility = std::log(size / cfg.chunk_size(0));
    const double score = (v_param * (utility + gamma * cfg.chunk_seconds) - q_chunks) / size;
    if (score > best_score) {
      best_score = score;
      best = m;
    }
  }
  return best;
}

double harmonic_mean_throughput(const AbrState& state) {
  double inv_sum = 0.0;
  for (const auto& h : state.history) inv_sum += 1.0 / h[0];
  return static_cast<double>(state.history.size()) / inv_sum;
}

int largest_at_most(double estimate, const AbrConfig& cfg) {
  int choice = 0;
  for (int i = 0; i < cfg.action_count(); ++i) {
    if (cfg.ladder[i] <= estimate) choice = i;
  }
  return choice;
}

int mpc_decide(const AbrState& state, const AbrConfig& cfg, double rebuffer_penalty, int lookahead) {
  const double estimate = harmonic_mean_throughput(state);
  const double q_prev0 = state.history.back()[2];
  const int actions = cfg.action_count();
  std::vector<int> plan(lookahead, 0);
  std::vector<int> best_plan;
  double best_total = -std::numeric_limits<double>::infinity();
  // Exhaustive search over actions^lookahead sequences, lexicographic order
  // so ties resolve toward lower bitrates.
  const std::int64_t n_plans = static_cast<std::int64_t>(std::pow(actions, lookahead));
  for (std::int64_t code = 0; code < n_plans; ++code) {
    std::int64_t rem = code;
    for (int i = lookahead - 1; i >= 0; --i) {
      plan[i] = static_cast<int>(rem % actions);
      rem /= actions;
    }
    double buffer = state.buffer;
    double q_prev = q_prev0;
    double total = 0.0;
    for (int i = 0; i < lookahead; ++i) {
      const double q = cfg.ladder[plan[i]];
      const double d = cfg.chunk_size(plan[i]) / estimate;
      total += q - std::fabs(q - q_prev) - rebuffer_penalty * std::max(0.0, d - buffer);
      buffer = buffer_update(buffer, d, cfg.chunk_seconds, cfg.buffer_cap).next_buffer;
      q_prev = q;
    }
    if (total > best_total) {
      best_total = total;
      best_plan = plan;
    }
  }
  return best_plan[0];
}

}  // namespace

int abr_policy_decide(const PolicySpec& spec, const AbrState& state, const AbrConfig& cfg, Rng& rng) {
  if (spec.kind == "bba") {
    return bba_decide(state.buffer, spec.param("reservoir", 5.0), spec.param("cushion", 5.0), cfg);
  }
  if (spec.kind == "bola") {
    return bola_decide(state.buffer, spec.param("v", 0.71), spec.param("gamma", 0.22), cfg);
  }
  if (spec.kind == "random") {
    return rng.uniform_int(cfg.action_count());
  }
  if (spec.kind == "bba_random") {
    const double mix = spec.param("random_share", 0.5);
    if (rng.uniform() < mix) return rng.uniform_int(cfg.action_count());
    return bba_decide(state.buffer, spec.param("reservoir", 5.0), spec.param("cushion", 5.0), cfg);
  }
  if (spec.kind == "mpc") {
    if (state.history.empty()) return 0;
    return mpc_decide(state, cfg, spec.param("rebuffer_penalty", 4.3),
                      static_cast<int>(spec.param("lookahead", 5)));
  }
  if (spec.kind == "rate" || spec.kind == "rate_optimistic" || spec.kind == "rate_pessimistic") {
    if (state.history.empty()) return 0;
    double estimate;
    if (spec.kind == "rate") {
      estimate = harmonic_mean_throughput(state);
    } else {
      estimate = state.history.front()[0];
      for (const auto& h : state.history) {
        estimate = spec.kind == "rate_optimistic" ? std::max(estimate, h[0]) : std::min(estimate, h[0]);
      }
    }
    return largest_at_most(estimate, cfg);
  }
  throw std::invalid_argument("unknown ABR policy kind: " + spec.kind);
}

Trajectory run_episode(std::span<const double> capacities, double rtt, const PolicySpec& spec,
                       int policy_id, const AbrConfig& cfg, int horizon, Rng& policy_rng,
                       std::int64_t traj_id) {
  if (static_cast<int>(capacities.size()) < horizon) {
    throw std::invalid_argument("capacity trace shorter than the requested horizon");
  }
  Trajectory traj;
  traj.id = traj_id;
  traj.policy_id = policy_id;
  traj.steps.reserve(horizon);

  AbrState state;
  double prev_throughput = 0.0;
  const double start_rate = cfg.start_rate(rtt);
  for (int t = 0; t < horizon; ++t) {
    const int action = abr_policy_decide(spec, state, cfg, policy_rng);
    const double size = cfg.chunk_size(action);
    const double capacity = capacities[t];
    const double d = download_time(size, capacity, rtt, start_rate);
    const double throughput = size / d;

    Step step;
    step.obs = {state.buffer, prev_throughput};
    step.action = action;
    step.trace = {throughput, d};
    step.latent_truth = {capacity, rtt};
    traj.steps.push_back(std::move(step));

    state.buffer = buffer_update(state.buffer, d, cfg.chunk_seconds, cfg.buffer_cap).next_buffer;
    state.t = t + 1;
    state.push_history(throughput, d, cfg.ladder[action]);
    prev_throughput = throughput;
  }
  return traj;
}

std::vector<PolicySpec> default_abr_policies() {
  return {
      PolicySpec{"bba", {{"reservoir", 5.0}, {"cushion", 5.0}}},
      PolicySpec{"bola", {{"v", 0.71}, {"gamma", 0.22}}},
      PolicySpec{"random", {}},
      PolicySpec{"bba_random", {{"reservoir", 5.0}, {"cushion", 5.0}, {"random_share", 0.5}}},
      PolicySpec{"bba_random", {{"reservoir", 10.0}, {"cushion", 10.0}, {"random_share", 0.5}}},
      PolicySpec{"mpc", {{"lookahead", 5.0}, {"rebuffer_penalty", 4.3}}},
      PolicySpec{"rate", {}},
      PolicySpec{"rate_optimistic", {}},
      PolicySpec{"rate_pessimistic", {}},
  };
}

}  // namespace csim
