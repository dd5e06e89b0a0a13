#include "csim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace csim {

double emd(std::span<const double> samples_p, std::span<const double> samples_q) {
  if (samples_p.empty() || samples_q.empty()) {
    throw std::invalid_argument("emd needs non-empty sample sets");
  }
  std::vector<double> p(samples_p.begin(), samples_p.end());
  std::vector<double> q(samples_q.begin(), samples_q.end());
  std::sort(p.begin(), p.end());
  std::sort(q.begin(), q.end());

  const double np = static_cast<double>(p.size());
  const double nq = static_cast<double>(q.size());
  std::size_t ip = 0, iq = 0;
  double total = 0.0;
  double prev = std::min(p.front(), q.front());
  while (ip < p.size() || iq < q.size()) {
    double next;
    if (iq == q.size() || (ip < p.size() && p[ip] <= q[iq])) {
      next = p[ip];
    } else {
      next = q[iq];
    }
    total += std::fabs(ip / np - iq / nq) * (next - prev);
    prev = next;
    while (ip < p.size() && p[ip] == prev) ++ip;
    while (iq < q.size() && q[iq] == prev) ++iq;
  }
  return total;
}

double mape(std::span<const double> truth, std::span<const double> prediction) {
  if (truth.size() != prediction.size() || truth.empty()) {
    throw std::invalid_argument("mape needs equal-length non-empty vectors");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) throw std::invalid_argument("mape is undefined for zero truth entries");
    total += std::fabs(prediction[i] - truth[i]) / std::fabs(truth[i]);
  }
  return 100.0 * total / static_cast<double>(truth.size());
}

double mse(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("mse needs equal-length vectors");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    total += d * d;
  }
  return total;
}

double pcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("pcc needs two equal-length vectors of size >= 2");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pcc is undefined for zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double rebuffer_seconds(const Trajectory& traj) {
  double total = 0.0;
  for (const Step& s : traj.steps) {
    total += std::max(0.0, s.trace[1] - s.obs[0]);
  }
  return total;
}

double stall_rate(const Trajectory& traj, double chunk_seconds) {
  if (traj.steps.empty()) return 0.0;
  const double stalls = rebuffer_seconds(traj);
  const double playback = chunk_seconds * static_cast<double>(traj.steps.size());
  return stalls / (playback + stalls);
}

std::vector<double> qoe_per_step(const Trajectory& traj, const std::vector<double>& ladder,
                                 double rebuffer_penalty) {
  std::vector<double> out;
  out.reserve(traj.steps.size());
  double prev_q = traj.steps.empty() ? 0.0 : ladder[traj.steps.front().action];
  for (const Step& s : traj.steps) {
    const double q = ladder[s.action];
    const double stall = std::max(0.0, s.trace[1] - s.obs[0]);
    out.push_back(q - std::fabs(q - prev_q) - rebuffer_penalty * stall);
    prev_q = q;
  }
  return out;
}

double mean_qoe(const Trajectory& traj, const std::vector<double>& ladder, double rebuffer_penalty) {
  if (traj.steps.empty()) return 0.0;
  const auto per_step = qoe_per_step(traj, ladder, rebuffer_penalty);
  double total = 0.0;
  for (double v : per_step) total += v;
  return total / static_cast<double>(per_step.size());
}

}  // namespace csim
