#include "csim/analytic.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace csim {

PolicyPartition partition_by_policy(const OutcomeTensor& tensor) {
  int max_policy = -1;
  for (int p : tensor.column_policy) max_policy = std::max(max_policy, p);
  PolicyPartition partition;
  partition.groups.resize(max_policy + 1);
  for (std::int64_t beta = 0; beta < tensor.columns; ++beta) {
    partition.groups[tensor.column_policy[beta]].push_back(beta);
  }
  return partition;
}

Rank1Result complete_rank1(const OutcomeTensor& tensor, const PolicyPartition& partition) {
  if (tensor.trace_dim != 1) {
    throw std::invalid_argument("complete_rank1 expects a one-dimensional trace (D = 1)");
  }
  for (int p = 0; p < partition.policy_count(); ++p) {
    if (partition.groups[p].empty()) {
      throw std::invalid_argument("policy group " + std::to_string(p) + " has no columns");
    }
    const int first_action = tensor.observed_action[partition.groups[p].front()];
    for (std::int64_t beta : partition.groups[p]) {
      if (tensor.observed_action[beta] != first_action) {
        throw std::invalid_argument(
            "complete_rank1 expects single-action policies (one revealed row per group)");
      }
    }
  }

  const int actions = tensor.action_count;
  std::vector<double> sums(actions, 0.0);
  std::vector<std::int64_t> counts(actions, 0);
  for (std::int64_t beta = 0; beta < tensor.columns; ++beta) {
    const int a = tensor.observed_action[beta];
    sums[a] += tensor.observed_value(beta, 0);
    counts[a] += 1;
  }

  Rank1Result out;
  out.action_means.resize(actions);
  for (int a = 0; a < actions; ++a) {
    if (counts[a] == 0) {
      throw AssumptionError("sufficient_diverse_policies",
                            "action " + std::to_string(a) + " is never taken by any policy");
    }
    out.action_means[a] = sums[a] / static_cast<double>(counts[a]);
    if (out.action_means[a] == 0.0) {
      throw std::invalid_argument("degenerate zero group mean for action " + std::to_string(a));
    }
  }
  out.ratio_to_first.resize(actions);
  for (int a = 0; a < actions; ++a) out.ratio_to_first[a] = out.action_means[a] / out.action_means[0];

  out.completed.resize(actions, tensor.columns);
  for (std::int64_t beta = 0; beta < tensor.columns; ++beta) {
    const double observed = tensor.observed_value(beta, 0);
    const double base = observed / out.action_means[tensor.observed_action[beta]];
    for (int a = 0; a < actions; ++a) out.completed(a, beta) = base * out.action_means[a];
  }
  return out;
}

namespace {

// S in R^{(A D) x P}: block (alpha, p) is the sum of traces observed for
// action alpha in policy p's columns, divided by the full group size U_p.
Eigen::MatrixXd build_mean_matrix(const OutcomeTensor& tensor, const PolicyPartition& partition) {
  const int actions = tensor.action_count;
  const int dim = tensor.trace_dim;
  const int policies = partition.policy_count();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(actions * dim, policies);
  for (int p = 0; p < policies; ++p) {
    if (partition.groups[p].empty()) {
      throw std::invalid_argument("policy group " + std::to_string(p) + " has no columns");
    }
    for (std::int64_t beta : partition.groups[p]) {
      const int a = tensor.observed_action[beta];
      for (int g = 0; g < dim; ++g) {
        s(a * dim + g, p) += tensor.values[tensor.index(a, beta, g)];
      }
    }
    s.col(p) /= static_cast<double>(partition.groups[p].size());
  }
  return s;
}

std::vector<std::int64_t> action_counts(const OutcomeTensor& tensor) {
  std::vector<std::int64_t> counts(tensor.action_count, 0);
  for (int a : tensor.observed_action) counts[a] += 1;
  return counts;
}

int numerical_rank(const Eigen::VectorXd& singular_values, double rel_tol = 1e-8) {
  if (singular_values.size() == 0) return 0;
  const double cutoff = singular_values(0) * rel_tol;
  int rank = 0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    if (singular_values(i) > cutoff) ++rank;
  }
  return rank;
}

}  // namespace

RankRResult complete_rank_r(const OutcomeTensor& tensor, const PolicyPartition& partition, int rank,
                            double null_gap_guard) {
  const int actions = tensor.action_count;
  const int dim = tensor.trace_dim;
  const int policies = partition.policy_count();
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (dim < rank) {
    throw AssumptionError("sufficient_measurements",
                          "trace dimension " + std::to_string(dim) + " is below the rank " +
                              std::to_string(rank));
  }
  if (dim != rank) {
    throw std::invalid_argument("recovery is implemented for D == r; project the trace first");
  }
  if (policies < actions * rank) {
    throw AssumptionError("sufficient_diverse_policies",
                          "need at least A*r = " + std::to_string(actions * rank) + " policies, got " +
                              std::to_string(policies));
  }
  const auto counts = action_counts(tensor);
  for (int a = 0; a < actions; ++a) {
    if (counts[a] == 0) {
      throw AssumptionError("sufficient_diverse_policies",
                            "action " + std::to_string(a) + " is never taken by any policy");
    }
  }

  const Eigen::MatrixXd s = build_mean_matrix(tensor, partition);
  const int stacked = actions * rank;
  Eigen::MatrixXd v(stacked, policies - 1);
  for (int p = 1; p < policies; ++p) v.col(p - 1) = s.col(p) - s.col(0);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullU);
  RankRResult out;
  out.singular_values.assign(stacked, 0.0);
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    out.singular_values[i] = svd.singularValues()(i);
  }

  // The invariance constraints should leave exactly r directions unused:
  // the last signal singular value must dominate the first null one.
  const double last_signal = out.singular_values[stacked - rank - 1];
  const double first_null = out.singular_values[stacked - rank];
  if (last_signal <= 0.0 || numerical_rank(svd.singularValues()) < stacked - rank) {
    throw AssumptionError("sufficient_diverse_policies",
                          "the policy mean system is rank deficient; policies are not diverse enough");
  }
  out.null_gap = first_null / last_signal;
  if (out.null_gap > null_gap_guard) {
    throw AssumptionError("mean_invariance",
                          "empirical mean invariance does not isolate an r-dimensional null space "
                          "(gap " + std::to_string(out.null_gap) + ")");
  }

  // Rows of W span the flattened inverse mixers up to one invertible gauge.
  Eigen::MatrixXd w = svd.matrixU().rightCols(rank).transpose();
  const double first_block_norm = w.block(0, 0, rank, rank).norm();
  if (first_block_norm == 0.0) {
    throw AssumptionError("invertibility", "recovered mixer block for action 0 vanishes");
  }
  w /= first_block_norm;

  out.z_inv.reserve(actions);
  std::vector<Eigen::MatrixXd> z_inv_inverse(actions);
  for (int a = 0; a < actions; ++a) {
    Eigen::MatrixXd block = w.block(0, a * rank, rank, rank);
    Eigen::JacobiSVD<Eigen::MatrixXd> block_svd(block);
    const auto& sv = block_svd.singularValues();
    if (sv(sv.size() - 1) <= sv(0) * 1e-10) {
      throw AssumptionError("invertibility",
                            "recovered mixer for action " + std::to_string(a) + " is singular");
    }
    out.z_inv.push_back(block);
    z_inv_inverse[a] = block.inverse();
  }

  out.latent_estimates.resize(tensor.columns, rank);
  out.completed.assign(static_cast<std::size_t>(actions) * tensor.columns * dim, 0.0);
  Eigen::VectorXd m(dim), y(rank), filled(dim);
  for (std::int64_t beta = 0; beta < tensor.columns; ++beta) {
    const int observed = tensor.observed_action[beta];
    for (int g = 0; g < dim; ++g) m(g) = tensor.values[tensor.index(observed, beta, g)];
    y = out.z_inv[observed] * m;
    out.latent_estimates.row(beta) = y.transpose();
    for (int a = 0; a < actions; ++a) {
      filled = z_inv_inverse[a] * y;
      for (int g = 0; g < dim; ++g) {
        out.completed[out.index(a, beta, g, tensor.columns, dim)] = filled(g);
      }
    }
  }
  return out;
}

AssumptionReport check_assumptions(const OutcomeTensor& tensor, const PolicyPartition& partition,
                                   int rank) {
  AssumptionReport report;
  report.rank = rank;
  report.trace_dim = tensor.trace_dim;
  report.action_count = tensor.action_count;
  report.policy_count = partition.policy_count();
  report.measurements_ok = tensor.trace_dim >= rank;
  report.policy_count_ok = partition.policy_count() >= tensor.action_count * rank;
  report.per_action_counts = action_counts(tensor);
  report.actions_covered = true;
  for (auto c : report.per_action_counts) {
    if (c == 0) report.actions_covered = false;
  }

  const Eigen::MatrixXd s = build_mean_matrix(tensor, partition);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
  report.s_singular_values.assign(svd.singularValues().data(),
                                  svd.singularValues().data() + svd.singularValues().size());
  report.s_rank = numerical_rank(svd.singularValues());
  // Exact mean invariance caps rank(S) at Ar - r + 1; demanding that value
  // is the operative version of the diversity condition.
  report.s_rank_required = tensor.action_count * rank - rank + 1;
  report.diversity_ok = report.actions_covered && report.s_rank >= report.s_rank_required;
  report.all_ok =
      report.measurements_ok && report.policy_count_ok && report.actions_covered && report.diversity_ok;
  return report;
}

double svd_energy(const Eigen::MatrixXd& matrix, int k) {
  // Eigen-decomposition of the small-side Gram matrix; eigenvalues are the
  // squared singular values.
  Eigen::MatrixXd gram;
  if (matrix.rows() <= matrix.cols()) {
    gram = matrix * matrix.transpose();
  } else {
    gram = matrix.transpose() * matrix;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);
  const double total = values.sum();
  if (total == 0.0) return 0.0;
  // Ascending order from Eigen; take the top k from the back.
  double top = 0.0;
  for (int i = 0; i < k && i < values.size(); ++i) {
    top += values(values.size() - 1 - i);
  }
  return top / total;
}

}  // namespace csim
