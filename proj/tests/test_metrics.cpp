#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "csim/metrics.hpp"
#include "csim/rng.hpp"

using namespace csim;

TEST_CASE("emd: exact small cases") {
  const std::vector<double> zero{0.0}, one{1.0};
  CHECK(emd(zero, zero) == 0.0);
  CHECK(emd(zero, one) == doctest::Approx(1.0));
  const std::vector<double> a{0.0, 1.0}, b{1.0, 2.0};
  CHECK(emd(a, b) == doctest::Approx(1.0));
  CHECK_THROWS_AS(emd({}, one), std::invalid_argument);
}

TEST_CASE("emd: brute-force CDF integration agrees on random inputs") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p, q;
    const int np = 1 + rng.uniform_int(20), nq = 1 + rng.uniform_int(20);
    for (int i = 0; i < np; ++i) p.push_back(rng.uniform(-3.0, 3.0));
    for (int i = 0; i < nq; ++i) q.push_back(rng.uniform(-3.0, 3.0));
    // Riemann sum on a fine grid.
    double lo = 1e300, hi = -1e300;
    for (double v : p) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : q) lo = std::min(lo, v), hi = std::max(hi, v);
    const int grid = 200000;
    double integral = 0.0;
    const double dx = (hi - lo) / grid;
    for (int g = 0; g < grid; ++g) {
      const double x = lo + (g + 0.5) * dx;
      double fp = 0, fq = 0;
      for (double v : p) fp += v <= x ? 1.0 : 0.0;
      for (double v : q) fq += v <= x ? 1.0 : 0.0;
      integral += std::fabs(fp / np - fq / nq) * dx;
    }
    CHECK(emd(p, q) == doctest::Approx(integral).epsilon(1e-3));
  }
}

TEST_CASE("emd is a metric on empirical distributions") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p, q, r;
    const int n = 1 + rng.uniform_int(12);
    for (int i = 0; i < n; ++i) {
      p.push_back(rng.uniform(-2.0, 2.0));
      q.push_back(rng.uniform(-2.0, 2.0));
      r.push_back(rng.uniform(-2.0, 2.0));
    }
    const double pq = emd(p, q), qp = emd(q, p), pr = emd(p, r), rq = emd(r, q);
    CHECK(pq >= 0.0);
    CHECK(pq == doctest::Approx(qp).epsilon(1e-12));
    CHECK(pq <= pr + rq + 1e-12);
    CHECK(emd(p, p) == 0.0);
  }
}

TEST_CASE("mape: formula cases") {
  const std::vector<double> p{1.0, 2.0}, phat{2.0, 1.0};
  CHECK(mape(p, p) == 0.0);
  CHECK(mape(p, phat) == doctest::Approx(75.0));
  std::vector<double> scaled{1.1, 2.2};
  CHECK(mape(p, scaled) == doctest::Approx(10.0));
  CHECK_THROWS_AS(mape(std::vector<double>{0.0}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("mse and pcc: formula cases") {
  const std::vector<double> x{0.0, 1.0, 2.0}, y{0.0, 2.0, 4.0};
  CHECK(mse(x, x) == 0.0);
  CHECK(mse(x, y) == doctest::Approx(5.0));
  CHECK(pcc(x, x) == doctest::Approx(1.0));
  CHECK(pcc(x, y) == doctest::Approx(1.0));
  std::vector<double> neg{0.0, -1.0, -2.0};
  CHECK(pcc(x, neg) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(pcc(x, std::vector<double>{1.0, 1.0, 1.0}), std::invalid_argument);
}

namespace {

Trajectory make_abr_traj(std::vector<std::array<double, 3>> rows, std::vector<int> actions) {
  // rows: (buffer_before, download_time, throughput)
  Trajectory t;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Step s;
    s.obs = {rows[i][0], 0.0};
    s.trace = {rows[i][2], rows[i][1]};
    s.action = actions[i];
    t.steps.push_back(std::move(s));
  }
  return t;
}

}  // namespace

TEST_CASE("stall_rate: arithmetic and bounds") {
  // single step: d=3, b=1 -> 2s stall; watch time 4 + 2
  const Trajectory t = make_abr_traj({{1.0, 3.0, 1.0}}, {0});
  CHECK(stall_rate(t, 4.0) == doctest::Approx(2.0 / 6.0));

  const Trajectory clean = make_abr_traj({{5.0, 2.0, 1.0}, {6.0, 1.0, 1.0}}, {0, 0});
  CHECK(stall_rate(clean, 4.0) == 0.0);

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::array<double, 3>> rows;
    std::vector<int> actions;
    for (int i = 0; i < 10; ++i) {
      rows.push_back({rng.uniform(0.0, 10.0), rng.uniform(0.1, 12.0), 1.0});
      actions.push_back(0);
    }
    const double rate = stall_rate(make_abr_traj(rows, actions), 4.0);
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
  }
}

TEST_CASE("qoe: smoothness and stall terms") {
  const std::vector<double> ladder{0.3, 0.75, 1.2, 1.85, 2.85, 4.3};
  // constant bitrate, no stalls -> QoE_t = q
  const Trajectory constant = make_abr_traj({{5, 1, 1}, {5, 1, 1}, {5, 1, 1}}, {2, 2, 2});
  for (double v : qoe_per_step(constant, ladder)) CHECK(v == doctest::Approx(1.2));

  // q = (1, 2) with no stalls: QoE_2 = 2 - |2 - 1| = 1
  const std::vector<double> unit_ladder{1.0, 2.0};
  const Trajectory two = make_abr_traj({{5, 1, 1}, {5, 1, 1}}, {0, 1});
  const auto q = qoe_per_step(two, unit_ladder);
  CHECK(q[0] == doctest::Approx(1.0));  // first step pays no smoothness
  CHECK(q[1] == doctest::Approx(1.0));

  // default rebuffer penalty is 4.3
  const Trajectory stall = make_abr_traj({{0.0, 1.0, 1.0}}, {0});
  CHECK(qoe_per_step(stall, unit_ladder)[0] == doctest::Approx(1.0 - 4.3));
}
