#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "csim/analytic.hpp"
#include "oracles.hpp"

using namespace csim;
using csim::testing::make_rank1_instance;
using csim::testing::make_rank_r_instance;

TEST_CASE("rank1: constructed exact instance recovers perfectly") {
  const auto inst = make_rank1_instance(2, 2, 1000, 3);
  const Rank1Result result = complete_rank1(inst.tensor, inst.partition);
  CHECK(result.ratio_to_first[1] ==
        doctest::Approx(inst.truth.action_factors(1, 0) / inst.truth.action_factors(0, 0))
            .epsilon(1e-10));
  double worst = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (std::int64_t b = 0; b < inst.tensor.columns; ++b) {
      const double truth = inst.truth.value(a, b, 0);
      worst = std::max(worst, std::fabs(result.completed(a, b) - truth) / std::fabs(truth));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("rank1: constant latent gives constant rows at the action factors") {
  auto inst = make_rank1_instance(3, 3, 50, 5);
  for (std::int64_t b = 0; b < inst.tensor.columns; ++b) {
    inst.truth.latent_factors(b, 0) = 1.0;
    const int a = inst.tensor.observed_action[b];
    inst.tensor.values[inst.tensor.index(a, b, 0)] = inst.truth.action_factors(a, 0);
  }
  const Rank1Result result = complete_rank1(inst.tensor, inst.partition);
  for (int a = 0; a < 3; ++a) {
    for (std::int64_t b = 0; b < inst.tensor.columns; ++b) {
      CHECK(result.completed(a, b) == doctest::Approx(inst.truth.action_factors(a, 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("rank1: iid latents estimate the ratio within CLT error") {
  const int n = 100000;
  const auto inst = make_rank1_instance(2, 2, n, 11, /*force_mean_invariance=*/false);
  const Rank1Result result = complete_rank1(inst.tensor, inst.partition);
  const double truth = inst.truth.action_factors(1, 0) / inst.truth.action_factors(0, 0);
  CHECK(std::fabs(result.ratio_to_first[1] - truth) / truth < 0.01);
}

TEST_CASE("rank1: scale equivariance") {
  auto inst = make_rank1_instance(2, 2, 200, 13);
  const Rank1Result base = complete_rank1(inst.tensor, inst.partition);
  for (double& v : inst.tensor.values) v *= 3.5;
  const Rank1Result scaled = complete_rank1(inst.tensor, inst.partition);
  CHECK((scaled.completed - 3.5 * base.completed).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rank1: rejects empty groups and mixed-action policies") {
  auto inst = make_rank1_instance(2, 2, 100, 17);
  SUBCASE("empty group") {
    inst.partition.groups.push_back({});
    CHECK_THROWS_AS(complete_rank1(inst.tensor, inst.partition), std::invalid_argument);
  }
  SUBCASE("mixed actions in one group") {
    inst.tensor.observed_action[0] = 1;
    CHECK_THROWS_AS(complete_rank1(inst.tensor, inst.partition), std::invalid_argument);
  }
}

TEST_CASE("rank_r: exact A=3, r=D=2, P=6 instance recovers to 1e-6") {
  const auto inst = make_rank_r_instance(3, 2, 6, 400, 19);
  const RankRResult result = complete_rank_r(inst.tensor, inst.partition, 2);
  double worst = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (std::int64_t b = 0; b < inst.tensor.columns; ++b) {
      for (int g = 0; g < 2; ++g) {
        const double truth = inst.truth.value(a, b, g);
        const double got = result.completed[result.index(a, b, g, inst.tensor.columns, 2)];
        worst = std::max(worst, std::fabs(got - truth) / std::fabs(truth));
      }
    }
  }
  CHECK(worst < 1e-6);
  CHECK(result.null_gap < 1e-8);
}

TEST_CASE("rank_r: recovery holds across action counts and ranks") {
  for (int actions : {2, 3, 4}) {
    for (int rank : {1, 2}) {
      const auto inst =
          make_rank_r_instance(actions, rank, actions * rank + 2, 300, 100 + actions * 10 + rank);
      const RankRResult result = complete_rank_r(inst.tensor, inst.partition, rank);
      double worst = 0.0;
      for (int a = 0; a < actions; ++a) {
        for (std::int64_t b = 0; b < inst.tensor.columns; ++b) {
          for (int g = 0; g < rank; ++g) {
            const double truth = inst.truth.value(a, b, g);
            const double got = result.completed[result.index(a, b, g, inst.tensor.columns, rank)];
            worst = std::max(worst, std::fabs(got - truth) / std::max(std::fabs(truth), 1e-12));
          }
        }
      }
      CHECK(worst < 1e-8);
    }
  }
}

TEST_CASE("rank_r: policy relabeling leaves the completion unchanged") {
  const auto inst = make_rank_r_instance(2, 2, 6, 200, 23);
  const RankRResult base = complete_rank_r(inst.tensor, inst.partition, 2);

  // Swap policy labels 0 and 3 (columns untouched, only group identity).
  OutcomeTensor tensor = inst.tensor;
  PolicyPartition partition = inst.partition;
  std::swap(partition.groups[0], partition.groups[3]);
  for (auto& p : tensor.column_policy) {
    if (p == 0) {
      p = 3;
    } else if (p == 3) {
      p = 0;
    }
  }
  const RankRResult relabeled = complete_rank_r(tensor, partition, 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < base.completed.size(); ++i) {
    worst = std::max(worst, std::fabs(base.completed[i] - relabeled.completed[i]));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("rank_r: r=1 agrees with the rank-1 ratio route") {
  const auto inst = make_rank1_instance(2, 3, 500, 29);
  const Rank1Result ratio_route = complete_rank1(inst.tensor, inst.partition);
  const RankRResult null_route = complete_rank_r(inst.tensor, inst.partition, 1);
  double worst = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (std::int64_t b = 0; b < inst.tensor.columns; ++b) {
      worst = std::max(worst, std::fabs(ratio_route.completed(a, b) -
                                        null_route.completed[null_route.index(a, b, 0, inst.tensor.columns, 1)]));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("rank_r: too few policies triggers the diversity rejection") {
  const auto inst = make_rank_r_instance(3, 2, 5, 100, 31);  // P = A*r - 1
  CHECK_THROWS_AS(complete_rank_r(inst.tensor, inst.partition, 2), AssumptionError);
  try {
    complete_rank_r(inst.tensor, inst.partition, 2);
  } catch (const AssumptionError& e) {
    CHECK(e.assumption() == "sufficient_diverse_policies");
  }
}

TEST_CASE("check_assumptions: reports each condition") {
  SUBCASE("D=1 with r=2 fails sufficient measurements") {
    const auto inst = make_rank1_instance(2, 4, 50, 37);
    const AssumptionReport report = check_assumptions(inst.tensor, inst.partition, 2);
    CHECK_FALSE(report.measurements_ok);
  }
  SUBCASE("the exact rank-r instance passes everything") {
    const auto inst = make_rank_r_instance(3, 2, 6, 400, 19);
    const AssumptionReport report = check_assumptions(inst.tensor, inst.partition, 2);
    CHECK(report.measurements_ok);
    CHECK(report.policy_count_ok);
    CHECK(report.actions_covered);
    CHECK(report.diversity_ok);
    CHECK(report.all_ok);
    CHECK(report.s_rank == report.s_rank_required);
  }
  SUBCASE("an action nobody takes breaks coverage and diversity") {
    auto inst = make_rank_r_instance(3, 2, 6, 100, 41);
    for (std::int64_t b = 0; b < inst.tensor.columns; ++b) {
      if (inst.tensor.observed_action[b] == 2) {
        inst.tensor.observed_action[b] = 0;
        for (int g = 0; g < 2; ++g) {
          inst.tensor.values[inst.tensor.index(0, b, g)] = inst.truth.value(0, b, g);
        }
      }
    }
    const AssumptionReport report = check_assumptions(inst.tensor, inst.partition, 2);
    CHECK_FALSE(report.actions_covered);
    CHECK_FALSE(report.all_ok);
    CHECK_THROWS_AS(complete_rank_r(inst.tensor, inst.partition, 2), AssumptionError);
  }
}

TEST_CASE("svd_energy: exact small cases and agreement with a direct SVD") {
  Eigen::MatrixXd rank1 = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0) *
                          Eigen::RowVectorXd::LinSpaced(5, 1.0, 2.0);
  CHECK(svd_energy(rank1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(svd_energy(Eigen::MatrixXd::Identity(3, 3), 1) == doctest::Approx(1.0 / 3.0));

  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd m(4, 7);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 7; ++j) m(i, j) = rng.uniform(-2.0, 2.0);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    const double total = sv.array().square().sum();
    double top = 0.0;
    for (int k = 1; k <= 4; ++k) {
      top += sv(k - 1) * sv(k - 1);
      CHECK(svd_energy(m, k) == doctest::Approx(top / total).epsilon(1e-9));
    }
  }
}
