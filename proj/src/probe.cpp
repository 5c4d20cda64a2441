#include "probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "errors.hpp"

namespace dpt {

namespace {

void softmax_row(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

}  // namespace

LinearProbe train_probe(const Tensor2& features, const std::vector<std::size_t>& labels,
                        std::size_t num_classes, const ProbeConfig& cfg) {
  const std::size_t n = features.rows;
  const std::size_t F = features.cols;
  if (n == 0) throw InputError("train_probe: no rows");
  if (labels.size() != n) throw InputError("train_probe: feature/label count mismatch");
  std::set<std::size_t> seen;
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw InputError("train_probe: label " + std::to_string(y) + " out of range");
    }
    seen.insert(y);
  }
  if (seen.size() < 2) throw ConfigError("train_probe: need at least two classes in the data");

  LinearProbe probe;
  probe.weight = Tensor2(num_classes, F);
  probe.bias = Vec(num_classes, 0.0);
  probe.l2 = cfg.l2;

  // Fixed step from a softmax curvature bound: the data-term Hessian is
  // bounded by 0.5 * max_i (|f_i|^2 + 1) in the stacked (W, b) metric.
  double max_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    max_sq = std::max(max_sq, dot(features.row(i), features.row(i)) + 1.0);
  }
  const double lr = 1.0 / (0.5 * max_sq + cfg.l2);
  const double inv_n = 1.0 / static_cast<double>(n);

  Tensor2 grad_w(num_classes, F);
  Vec grad_b(num_classes, 0.0);
  Vec logits(num_classes);
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    std::fill(grad_w.data.begin(), grad_w.data.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = features.row(i);
      for (std::size_t c = 0; c < num_classes; ++c) {
        logits[c] = probe.bias[c] + dot(probe.weight.row(c), f);
      }
      softmax_row(logits);
      logits[labels[i]] -= 1.0;  // p - onehot
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double d = logits[c] * inv_n;
        grad_b[c] += d;
        auto gw = grad_w.row(c);
        for (std::size_t j = 0; j < F; ++j) gw[j] += d * f[j];
      }
    }
    double gnorm_sq = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto gw = grad_w.row(c);
      const auto w = probe.weight.row(c);
      for (std::size_t j = 0; j < F; ++j) {
        gw[j] += cfg.l2 * w[j];
        gnorm_sq += gw[j] * gw[j];
      }
      gnorm_sq += grad_b[c] * grad_b[c];
    }
    if (std::sqrt(gnorm_sq) < cfg.tol) break;
    for (std::size_t k = 0; k < grad_w.data.size(); ++k) {
      probe.weight.data[k] -= lr * grad_w.data[k];
    }
    for (std::size_t c = 0; c < num_classes; ++c) probe.bias[c] -= lr * grad_b[c];
  }
  return probe;
}

Prediction predict_probe(const LinearProbe& probe, const Tensor2& features) {
  if (features.cols != probe.weight.cols) throw InputError("predict_probe: feature dim mismatch");
  const std::size_t n = features.rows;
  const std::size_t C = probe.weight.rows;
  Prediction pred;
  pred.labels.resize(n);
  pred.probabilities = Tensor2(n, C);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = pred.probabilities.row(i);
    const auto f = features.row(i);
    for (std::size_t c = 0; c < C; ++c) {
      row[c] = probe.bias[c] + dot(probe.weight.row(c), f);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (row[c] > row[best]) best = c;
    }
    pred.labels[i] = best;
    softmax_row(row);
  }
  return pred;
}

}  // namespace dpt
