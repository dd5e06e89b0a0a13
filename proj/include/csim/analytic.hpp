#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "csim/outcome_tensor.hpp"

namespace csim {

// Raised when one of the recovery preconditions fails; `assumption` names
// which one ("sufficient_measurements", "invertibility", ...).
class AssumptionError : public std::runtime_error {
 public:
  AssumptionError(std::string assumption, const std::string& what)
      : std::runtime_error(what), assumption_(std::move(assumption)) {}
  const std::string& assumption() const { return assumption_; }

 private:
  std::string assumption_;
};

// Column index sets per policy.
struct PolicyPartition {
  std::vector<std::vector<std::int64_t>> groups;

  int policy_count() const { return static_cast<int>(groups.size()); }
};

PolicyPartition partition_by_policy(const OutcomeTensor& tensor);

// Explicit rank-r factorization M[a,b,g] = sum_l x[a,l] y[b,l] z[g,l];
// test instances are built from one of these.
struct FactorModel {
  Eigen::MatrixXd action_factors;       // A x r
  Eigen::MatrixXd latent_factors;      // U x r
  Eigen::MatrixXd measurement_factors;  // D x r

  double value(int action, std::int64_t column, int dim) const {
    return action_factors.row(action)
        .cwiseProduct(latent_factors.row(column))
        .cwiseProduct(measurement_factors.row(dim))
        .sum();
  }
};

struct Rank1Result {
  std::vector<double> action_means;     // group mean of observed entries per action
  std::vector<double> ratio_to_first;   // estimated a_alpha / a_0
  Eigen::MatrixXd completed;            // A x U
};

// Mean-invariance completion for D = 1 data where every policy always plays
// a single action. Each missing entry is the observed one in its column
// scaled by the estimated action-factor ratio.
Rank1Result complete_rank1(const OutcomeTensor& tensor, const PolicyPartition& partition);

struct RankRResult {
  // Recovered inverses of the per-action mixing matrices, up to one common
  // invertible gauge; the first block is scaled to unit Frobenius norm.
  std::vector<Eigen::MatrixXd> z_inv;          // A matrices, r x r
  Eigen::MatrixXd latent_estimates;            // U x r, same gauge
  std::vector<double> completed;               // dense A x U x D
  std::vector<double> singular_values;         // of the invariance system
  double null_gap = 0.0;                       // sigma(first null) / sigma(last signal)

  std::size_t index(int action, std::int64_t column, int dim, std::int64_t columns, int trace_dim) const {
    return (static_cast<std::size_t>(action) * columns + column) * trace_dim + dim;
  }
};

// Rank-r recovery (r == D) from per-policy mean invariance: builds the
// stacked action/policy mean matrix S, differences it against policy 1 to
// get V, takes the r-dimensional null space of V^T, and completes every
// column through the recovered per-action mixers. The null-space gauge
// cancels in the completed values.
RankRResult complete_rank_r(const OutcomeTensor& tensor, const PolicyPartition& partition, int rank,
                            double null_gap_guard = 0.1);

struct AssumptionReport {
  int rank = 0;
  int trace_dim = 0;
  int action_count = 0;
  int policy_count = 0;
  bool measurements_ok = false;     // D >= r
  bool policy_count_ok = false;     // P >= A r
  bool actions_covered = false;     // every action observed at least once
  std::vector<std::int64_t> per_action_counts;
  int s_rank = 0;                   // numerical rank of S
  int s_rank_required = 0;          // A r - r + 1, the maximum under exact invariance
  bool diversity_ok = false;        // s_rank >= s_rank_required
  std::vector<double> s_singular_values;
  bool all_ok = false;
};

AssumptionReport check_assumptions(const OutcomeTensor& tensor, const PolicyPartition& partition, int rank);

// Fraction of squared singular values captured by the top k.
double svd_energy(const Eigen::MatrixXd& matrix, int k);

}  // namespace csim
