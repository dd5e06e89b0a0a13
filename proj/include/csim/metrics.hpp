#pragma once

#include <span>
#include <vector>

#include "csim/types.hpp"

namespace csim {

// Earth mover's distance between two one-dimensional empirical
// distributions: the exact integral of |CDF_p - CDF_q|.
double emd(std::span<const double> samples_p, std::span<const double> samples_q);

// 100/N * sum |pred - truth| / truth. Rejects zero truth entries.
double mape(std::span<const double> truth, std::span<const double> prediction);

// Squared L2 distance between two equal-length series.
double mse(std::span<const double> x, std::span<const double> y);

// Pearson correlation; rejects zero-variance inputs.
double pcc(std::span<const double> x, std::span<const double> y);

// Stall seconds of step t are max(0, download_time - buffer_before), read
// from trace[1] and obs[0] of an ABR trajectory.
double rebuffer_seconds(const Trajectory& traj);

// Fraction of session time spent stalled: stalls / (playback + stalls).
double stall_rate(const Trajectory& traj, double chunk_seconds);

// Per-step quality-of-experience with smoothness and rebuffer terms; the
// first step pays no smoothness penalty.
std::vector<double> qoe_per_step(const Trajectory& traj, const std::vector<double>& ladder,
                                 double rebuffer_penalty = 4.3);
double mean_qoe(const Trajectory& traj, const std::vector<double>& ladder, double rebuffer_penalty = 4.3);

}  // namespace csim
