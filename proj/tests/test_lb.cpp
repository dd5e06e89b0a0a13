#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "csim/lb_env.hpp"

using namespace csim;

namespace {

LbConfig test_config(std::uint64_t fleet_seed = 1) {
  LbConfig cfg;
  cfg.rates = gen_fleet(fleet_seed).rates;
  return cfg;
}

}  // namespace

TEST_CASE("gen_fleet: rates in [0.2, 5], deterministic per seed") {
  const ServerFleet a = gen_fleet(3);
  const ServerFleet b = gen_fleet(3);
  CHECK(a.rates == b.rates);
  CHECK(a.rates.size() == 8);
  for (double r : a.rates) {
    CHECK(r >= 0.2);
    CHECK(r <= 5.0);
  }
}

TEST_CASE("gen_fleet: mean log-rate is near zero over many fleets") {
  double sum = 0.0;
  const int n_fleets = 10000;
  int n = 0;
  for (int s = 0; s < n_fleets; ++s) {
    for (double r : gen_fleet(1000 + s).rates) {
      sum += std::log(r);
      ++n;
    }
  }
  const double mean = sum / n;
  const double sigma = (std::log(5.0) / std::sqrt(3.0)) / std::sqrt(static_cast<double>(n));
  CHECK(std::fabs(mean) < 3.0 * sigma);
}

TEST_CASE("gen_job_sizes: pareto endpoints, floor, and regime-change rate") {
  LbConfig cfg;
  // Inverse CDF endpoints.
  CHECK(cfg.mu_low / (1.0 - 0.0 * (1.0 - cfg.mu_low / cfg.mu_high)) == doctest::Approx(10.0));
  CHECK(cfg.mu_low / (1.0 - (1.0 - 1e-12) * (1.0 - cfg.mu_low / cfg.mu_high)) ==
        doctest::Approx(cfg.mu_high).epsilon(1e-6));

  const int n = 100000;
  const JobStream stream = gen_job_sizes(5, n, cfg);
  for (double s : stream.sizes) CHECK(s >= cfg.size_floor);

  const double p = cfg.regime_change_p;
  const double expected = p * (n - 1);
  const double sigma = std::sqrt((n - 1) * p * (1 - p));
  CHECK(std::fabs(stream.regime_changes - expected) <= 3.0 * sigma);
}

TEST_CASE("lb_step: empty queue, back-to-back jobs, and rate scaling") {
  std::vector<double> rates{1.0, 2.0};
  LbQueues queues(2);
  SUBCASE("latency equals processing on an empty queue") {
    const LbStepResult r = lb_step(queues, rates, 3.0, 1, 0.0);
    CHECK(r.processing == doctest::Approx(1.5));
    CHECK(r.latency == doctest::Approx(1.5));
  }
  SUBCASE("two size-2 jobs back to back on a rate-1 server") {
    const LbStepResult first = lb_step(queues, rates, 2.0, 0, 0.0);
    const LbStepResult second = lb_step(queues, rates, 2.0, 0, 0.0);
    CHECK(first.latency == doctest::Approx(2.0));
    CHECK(second.latency == doctest::Approx(4.0));
  }
  SUBCASE("queues drain while the clock advances") {
    lb_step(queues, rates, 2.0, 0, 0.0);
    const LbStepResult r = lb_step(queues, rates, 2.0, 0, 1.5);
    CHECK(r.latency == doctest::Approx(2.5));  // 0.5 left + own 2.0
  }
}

TEST_CASE("lb policies: decisions and tie-breaks") {
  TrackerState tracker(8);
  std::vector<double> rates{1, 1, 1, 1, 1, 1, 1, 1};
  Rng rng(2);
  std::vector<int> counts{3, 1, 2, 5, 5, 5, 5, 5};

  CHECK(lb_policy_decide(PolicySpec{"shortest_queue", {}}, counts, tracker, rates, rng) == 1);

  SUBCASE("power of 8 equals shortest queue on 8 servers") {
    for (int trial = 0; trial < 20; ++trial) {
      CHECK(lb_policy_decide(PolicySpec{"power_of_k", {{"k", 8.0}}}, counts, tracker, rates, rng) == 1);
    }
  }
  SUBCASE("oracle with equal rates is shortest queue") {
    CHECK(lb_policy_decide(PolicySpec{"oracle", {}}, counts, tracker, rates, rng) == 1);
  }
  SUBCASE("oracle tie-break goes to the lower index") {
    std::vector<int> c2{4, 2};
    std::vector<double> r2{2.0, 1.0};
    TrackerState t2(2);
    CHECK(lb_policy_decide(PolicySpec{"oracle", {}}, c2, t2, r2, rng) == 0);
  }
  SUBCASE("server_limited only uses its pair") {
    for (int trial = 0; trial < 50; ++trial) {
      const int pick = lb_policy_decide(PolicySpec{"server_limited", {{"i", 2.0}, {"j", 6.0}}}, counts,
                                        tracker, rates, rng);
      CHECK((pick == 2 || pick == 6));
    }
  }
}

TEST_CASE("tracker: round-robin estimates match true rates after scale alignment") {
  LbConfig cfg = test_config(17);
  TrackerState tracker(cfg.n_servers);
  Rng rng(3);
  const int jobs = 10000;
  for (int k = 0; k < jobs; ++k) {
    const int server = k % cfg.n_servers;
    const double size = rng.uniform(5.0, 50.0);
    tracker.observe(server, size / cfg.rates[server]);
  }
  const auto est = tracker.rate_estimates();
  // Rates are identifiable only up to the job-size scale; align geometric means.
  double log_ratio = 0.0;
  for (int i = 0; i < cfg.n_servers; ++i) log_ratio += std::log(cfg.rates[i] / est[i]);
  const double gauge = std::exp(log_ratio / cfg.n_servers);
  for (int i = 0; i < cfg.n_servers; ++i) {
    CHECK(std::fabs(est[i] * gauge - cfg.rates[i]) / cfg.rates[i] < 0.05);
  }
}

TEST_CASE("run_lb_episode: bookkeeping, conservation, and latency bounds") {
  LbConfig cfg = test_config(4);
  cfg.horizon = 200;
  const JobStream jobs = gen_job_sizes(9, cfg.horizon, cfg);
  Rng rng(5);
  const Trajectory traj =
      run_lb_episode(cfg, jobs.sizes, PolicySpec{"power_of_k", {{"k", 2.0}}}, 3, rng, 42);

  CHECK(traj.horizon() == 200);
  std::vector<double> routed_size(cfg.n_servers, 0.0), processing_sum(cfg.n_servers, 0.0);
  for (int k = 0; k < traj.horizon(); ++k) {
    CHECK(traj.steps[k].latent_truth[0] == jobs.sizes[k]);
    routed_size[traj.steps[k].action] += jobs.sizes[k];
    processing_sum[traj.steps[k].action] += traj.steps[k].trace[0];
  }
  for (int i = 0; i < cfg.n_servers; ++i) {
    CHECK(processing_sum[i] == doctest::Approx(routed_size[i] / cfg.rates[i]).epsilon(1e-12));
  }

  const auto latencies = lb_latencies(traj, cfg);
  double total_latency = 0.0, total_processing = 0.0;
  for (int k = 0; k < traj.horizon(); ++k) {
    CHECK(latencies[k] >= traj.steps[k].trace[0]);
    total_latency += latencies[k];
    total_processing += traj.steps[k].trace[0];
  }
  CHECK(total_latency >= total_processing);

  SUBCASE("horizon 5 gives 5 steps") {
    Rng r2(6);
    CHECK(run_lb_episode(cfg, std::span(jobs.sizes).subspan(0, 5), PolicySpec{"random", {}}, 0, r2, 1)
              .horizon() == 5);
  }
}

TEST_CASE("run_lb_episode: identical inputs reproduce identical traces bit-exactly") {
  LbConfig cfg = test_config(8);
  const JobStream jobs = gen_job_sizes(2, 100, cfg);
  Rng r1(11), r2(11);
  const PolicySpec spec{"power_of_k", {{"k", 3.0}}};
  const Trajectory a = run_lb_episode(cfg, jobs.sizes, spec, 0, r1, 1);
  const Trajectory b = run_lb_episode(cfg, jobs.sizes, spec, 0, r2, 1);
  for (int k = 0; k < a.horizon(); ++k) {
    CHECK(a.steps[k].action == b.steps[k].action);
    CHECK(a.steps[k].trace[0] == b.steps[k].trace[0]);
  }
}

TEST_CASE("default registry has sixteen policies covering all servers") {
  const auto policies = default_lb_policies();
  CHECK(policies.size() == 16);
  std::vector<bool> covered(8, false);
  for (const auto& p : policies) {
    if (p.kind == "server_limited") {
      covered[static_cast<int>(p.param("i", -1))] = true;
      covered[static_cast<int>(p.param("j", -1))] = true;
    }
  }
  CHECK(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }));
}
