#pragma once

#include <cstddef>
#include <vector>

namespace dpt {

// Per-timestep noise constants, indexed t = 1..T. The variance of the
// reverse-step noise is sigma_t^2 = beta_t.
struct DiffusionSchedule {
  std::size_t T = 0;
  std::vector<double> beta;       // beta_t
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // prod_{s<=t} alpha_s, strictly decreasing
  std::vector<double> sigma;      // sqrt(beta_t)

  double beta_at(std::size_t t) const { return beta[t - 1]; }
  double alpha_at(std::size_t t) const { return alpha[t - 1]; }
  double alpha_bar_at(std::size_t t) const { return alpha_bar[t - 1]; }
  double sigma_at(std::size_t t) const { return sigma[t - 1]; }
};

// Linear beta ramp from beta_start at t=1 to beta_end at t=T.
// Requires T >= 2 and 0 < beta_start <= beta_end < 1.
DiffusionSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end);

}  // namespace dpt
