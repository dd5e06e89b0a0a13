#include "csim/lb_env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csim {

double expected_job_size(const LbConfig& cfg) {
  // Bounded Pareto(alpha=1) on [L, H]: E = L ln(H/L) / (1 - L/H). The
  // Gaussian around the regime mean adds nothing in expectation.
  const double l = cfg.mu_low, h = cfg.mu_high;
  return l * std::log(h / l) / (1.0 - l / h);
}

double LbConfig::inter_arrival() const {
  const double total_rate = std::accumulate(rates.begin(), rates.end(), 0.0);
  if (total_rate <= 0.0) throw std::invalid_argument("fleet rates must be set before inter_arrival()");
  return expected_job_size(*this) / (load_factor * total_rate);
}

nlohmann::json lb_config_to_json(const LbConfig& cfg) {
  return nlohmann::json{
      {"n_servers", cfg.n_servers},
      {"rates", cfg.rates},
      {"load_factor", cfg.load_factor},
      {"size_floor", cfg.size_floor},
      {"regime_change_p", cfg.regime_change_p},
      {"mu_low", cfg.mu_low},
      {"mu_high", cfg.mu_high},
      {"sigma_frac", cfg.sigma_frac},
      {"horizon", cfg.horizon},
  };
}

LbConfig lb_config_from_json(const nlohmann::json& j) {
  LbConfig cfg;
  cfg.n_servers = j.value("n_servers", cfg.n_servers);
  cfg.rates = j.value("rates", cfg.rates);
  cfg.load_factor = j.value("load_factor", cfg.load_factor);
  cfg.size_floor = j.value("size_floor", cfg.size_floor);
  cfg.regime_change_p = j.value("regime_change_p", cfg.regime_change_p);
  cfg.mu_low = j.value("mu_low", cfg.mu_low);
  cfg.mu_high = j.value("mu_high", cfg.mu_high);
  cfg.sigma_frac = j.value("sigma_frac", cfg.sigma_frac);
  cfg.horizon = j.value("horizon", cfg.horizon);
  return cfg;
}

ServerFleet gen_fleet(std::uint64_t seed, int n_servers) {
  Rng rng(seed);
  ServerFleet fleet;
  fleet.rates.reserve(n_servers);
  const double bound = std::log(5.0);
  for (int i = 0; i < n_servers; ++i) {
    fleet.rates.push_back(std::exp(rng.uniform(-bound, bound)));
  }
  return fleet;
}

JobStream gen_job_sizes(std::uint64_t seed, int length, const LbConfig& cfg) {
  if (length < 1) throw std::invalid_argument("job stream length must be >= 1");
  Rng rng(seed);
  JobStream stream;
  stream.sizes.reserve(length);
  double mu = 0.0, sigma = 0.0;
  auto redraw = [&]() {
    // Inverse CDF of the bounded Pareto(alpha=1): mu = L / (1 - U (1 - L/H)).
    const double u = rng.uniform();
    mu = cfg.mu_low / (1.0 - u * (1.0 - cfg.mu_low / cfg.mu_high));
    sigma = rng.uniform(0.0, cfg.sigma_frac * mu);
  };
  redraw();
  for (int k = 0; k < length; ++k) {
    if (k > 0 && rng.uniform() < cfg.regime_change_p) {
      redraw();
      ++stream.regime_changes;
    }
    stream.sizes.push_back(std::max(cfg.size_floor, rng.normal(mu, sigma)));
  }
  return stream;
}

void LbQueues::advance(double dt) {
  for (std::size_t i = 0; i < jobs_.size(); ++i) {
    double remaining = dt;
    auto& q = jobs_[i];
    while (remaining > 0.0 && !q.empty()) {
      if (q.front() <= remaining) {
        remaining -= q.front();
        work_[i] -= q.front();
        q.pop_front();
      } else {
        q.front() -= remaining;
        work_[i] -= remaining;
        remaining = 0.0;
      }
    }
    if (q.empty()) work_[i] = 0.0;
  }
}

void LbQueues::push(int server, double processing_seconds) {
  jobs_[server].push_back(processing_seconds);
  work_[server] += processing_seconds;
}

std::vector<int> LbQueues::counts() const {
  std::vector<int> out(jobs_.size());
  for (std::size_t i = 0; i < jobs_.size(); ++i) out[i] = static_cast<int>(jobs_[i].size());
  return out;
}

LbStepResult lb_step(LbQueues& queues, const std::vector<double>& rates, double job_size, int server,
                     double delta) {
  if (server < 0 || server >= queues.n_servers()) {
    throw std::invalid_argument("server index out of range");
  }
  queues.advance(delta);
  LbStepResult out;
  out.processing = job_size / rates[server];
  out.latency = queues.outstanding_work(server) + out.processing;
  queues.push(server, out.processing);
  return out;
}

void TrackerState::observe(int server, double processing) {
  sum[server] += processing;
  count[server] += 1;
  global_sum += processing;
  global_count += 1;
}

std::vector<double> TrackerState::rate_estimates() const {
  std::vector<double> est(sum.size(), 1.0);
  if (global_count == 0) return est;
  const double global_mean = global_sum / static_cast<double>(global_count);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (count[i] > 0) est[i] = global_mean / (sum[i] / static_cast<double>(count[i]));
  }
  return est;
}

namespace {

int argmin_normalized(const std::vector<int>& counts, const std::vector<double>& weights) {
  int best = 0;
  double best_val = counts[0] / weights[0];
  for (std::size_t i = 1; i < counts.size(); ++i) {
    const double val = counts[i] / weights[i];
    if (val < best_val) {
      best_val = val;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

int lb_policy_decide(const PolicySpec& spec, const std::vector<int>& counts, const TrackerState& tracker,
                     const std::vector<double>& rates, Rng& rng) {
  const int n = static_cast<int>(counts.size());
  if (spec.kind == "server_limited") {
    const int i = static_cast<int>(spec.param("i", 0));
    const int j = static_cast<int>(spec.param("j", 1));
    return rng.uniform() < 0.5 ? i : j;
  }
  if (spec.kind == "shortest_queue") {
    return static_cast<int>(std::min_element(counts.begin(), counts.end()) - counts.begin());
  }
  if (spec.kind == "power_of_k") {
    const int k = static_cast<int>(spec.param("k", 2));
    // Partial Fisher-Yates for k distinct servers.
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    int best = -1;
    for (int draw = 0; draw < k && draw < n; ++draw) {
      const int pick = draw + rng.uniform_int(n - draw);
      std::swap(pool[draw], pool[pick]);
      const int server = pool[draw];
      if (best < 0 || counts[server] < counts[best] ||
          (counts[server] == counts[best] && server < best)) {
        best = server;
      }
    }
    return best;
  }
  if (spec.kind == "random") {
    return rng.uniform_int(n);
  }
  if (spec.kind == "oracle") {
    return argmin_normalized(counts, rates);
  }
  if (spec.kind == "tracker") {
    const auto est = tracker.rate_estimates();
    return argmin_normalized(counts, est);
  }
  if (spec.kind == "fixed") {
    return static_cast<int>(spec.param("server", 0));
  }
  throw std::invalid_argument("unknown LB policy kind: " + spec.kind);
}

Trajectory run_lb_episode(const LbConfig& cfg, std::span<const double> sizes, const PolicySpec& spec,
                          int policy_id, Rng& policy_rng, std::int64_t traj_id) {
  const int horizon = static_cast<int>(sizes.size());
  Trajectory traj;
  traj.id = traj_id;
  traj.policy_id = policy_id;
  traj.steps.reserve(horizon);

  LbQueues queues(cfg.n_servers);
  TrackerState tracker(cfg.n_servers);
  const double delta = cfg.inter_arrival();
  for (int k = 0; k < horizon; ++k) {
    queues.advance(k == 0 ? 0.0 : delta);
    const auto counts = queues.counts();
    const int server = lb_policy_decide(spec, counts, tracker, cfg.rates, policy_rng);
    const double processing = sizes[k] / cfg.rates[server];

    Step step;
    step.obs.assign(counts.begin(), counts.end());
    step.action = server;
    step.trace = {processing};
    step.latent_truth = {sizes[k]};
    traj.steps.push_back(std::move(step));

    queues.push(server, processing);
    tracker.observe(server, processing);
  }
  return traj;
}

std::vector<double> lb_latencies(const Trajectory& traj, const LbConfig& cfg) {
  LbQueues queues(cfg.n_servers);
  const double delta = cfg.inter_arrival();
  std::vector<double> out;
  out.reserve(traj.steps.size());
  bool first = true;
  for (const Step& step : traj.steps) {
    queues.advance(first ? 0.0 : delta);
    first = false;
    const double processing = step.trace[0];
    out.push_back(queues.outstanding_work(step.action) + processing);
    queues.push(step.action, processing);
  }
  return out;
}

std::vector<PolicySpec> default_lb_policies() {
  std::vector<PolicySpec> out;
  for (int i = 0; i < 8; ++i) {
    out.push_back(PolicySpec{"server_limited", {{"i", double(i)}, {"j", double((i + 1) % 8)}}});
  }
  out.push_back(PolicySpec{"shortest_queue", {}});
  for (int k = 2; k <= 5; ++k) {
    out.push_back(PolicySpec{"power_of_k", {{"k", double(k)}}});
  }
  out.push_back(PolicySpec{"random", {}});
  out.push_back(PolicySpec{"oracle", {}});
  out.push_back(PolicySpec{"tracker", {}});
  return out;
}

}  // namespace csim
