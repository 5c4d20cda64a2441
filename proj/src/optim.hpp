#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mlp.hpp"
#include "tensor.hpp"

namespace dpt {

// Parameters are addressed as an ordered list of contiguous blocks so one
// optimizer state can drive heterogeneous collections (MLP layers, embedding
// tables, prototype banks). Block order must be stable across calls.
using ParamBlocks = std::vector<std::span<double>>;
using GradBlocks = std::vector<std::span<const double>>;

ParamBlocks mlp_param_blocks(MlpParams& p);
GradBlocks mlp_grad_blocks(const MlpGrads& g);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<Vec> m;  // first moments, one Vec per block
  std::vector<Vec> v;  // second moments
};

AdamState make_adam_state(const AdamConfig& cfg, const ParamBlocks& params);

// Standard bias-corrected Adam update, applied in place. Throws NumericError
// naming the offending block/index if a gradient is non-finite.
void adam_step(AdamState& state, ParamBlocks params, const GradBlocks& grads);

// Plain gradient descent step over the same block layout.
void sgd_step(double lr, ParamBlocks params, const GradBlocks& grads);

}  // namespace dpt
