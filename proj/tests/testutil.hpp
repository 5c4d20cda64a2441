#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace dpt::testing {

// Central finite difference of a scalar functional w.r.t. one coordinate.
inline double central_diff(const std::function<double()>& eval, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = eval();
  x = saved - h;
  const double down = eval();
  x = saved;
  return (up - down) / (2.0 * h);
}

// Relative error between two gradient vectors.
inline double gradient_rel_err(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

// Central-difference gradient of `eval` w.r.t. every entry of every block,
// flattened in block order.
inline std::vector<double> numeric_gradient(const std::function<double()>& eval,
                                            const std::vector<std::span<double>>& blocks,
                                            double h = 1e-5) {
  std::vector<double> grad;
  for (const auto& block : blocks) {
    for (double& x : block) grad.push_back(central_diff(eval, x, h));
  }
  return grad;
}

inline std::vector<double> flatten(const std::vector<std::span<const double>>& blocks) {
  std::vector<double> out;
  for (const auto& block : blocks) out.insert(out.end(), block.begin(), block.end());
  return out;
}

}  // namespace dpt::testing
