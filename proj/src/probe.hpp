#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace dpt {

struct ProbeConfig {
  double l2 = 1e-3;            // ridge penalty on the weight matrix (bias excluded)
  std::size_t max_iters = 20000;
  double tol = 1e-6;           // stop once the full gradient norm drops below this
};

struct LinearProbe {
  Tensor2 weight;  // C x feature_dim
  Vec bias;        // C
  double l2 = 0.0;
};

// L2-regularized multinomial logistic regression fit by full-batch gradient
// descent from zero init, with a fixed step size derived from a curvature
// bound so the fit is deterministic. Requires at least two distinct classes.
LinearProbe train_probe(const Tensor2& features, const std::vector<std::size_t>& labels,
                        std::size_t num_classes, const ProbeConfig& cfg);

struct Prediction {
  std::vector<std::size_t> labels;  // argmax, ties broken by lowest class index
  Tensor2 probabilities;            // n x C softmax rows
};

Prediction predict_probe(const LinearProbe& probe, const Tensor2& features);

}  // namespace dpt
