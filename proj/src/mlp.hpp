#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace dpt {

// Hidden-layer nonlinearities are restricted to everywhere-differentiable
// choices so analytic gradients have no tie-breaking at kinks.
enum class Activation { kTanh, kSmoothRelu };

double activate(Activation a, double x);
double activate_grad(Activation a, double x);  // derivative at pre-activation x

struct MlpLayer {
  Tensor2 weight;  // out x in
  Vec bias;        // out
};

// Fully-connected net: affine layers with an activation after every layer
// except the last (the output layer is linear).
struct MlpParams {
  std::vector<MlpLayer> layers;
  std::vector<Activation> activations;  // one per hidden layer, layers.size() - 1

  std::size_t input_dim() const { return layers.front().weight.cols; }
  std::size_t output_dim() const { return layers.back().weight.rows; }
  std::size_t parameter_count() const;
};

// Glorot-uniform init, [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Rng& rng);

// Forward cache: pre-activations and post-activations per layer, enough for
// exact reverse-mode differentiation.
struct MlpCache {
  Vec input;
  std::vector<Vec> pre;   // per layer
  std::vector<Vec> post;  // per layer; post.back() is the network output
};

// Forward pass. If cache is non-null it is filled for a later backward call.
Vec mlp_forward(const MlpParams& params, std::span<const double> input,
                MlpCache* cache = nullptr);

// Gradient accumulator with the same shapes as MlpParams.
struct MlpGrads {
  std::vector<MlpLayer> layers;
};

MlpGrads make_zero_grads(const MlpParams& params);
void scale_grads(MlpGrads& grads, double factor);

// Reverse pass for the forward call that produced `cache`. output_grad is the
// gradient of a scalar loss w.r.t. the network output. Parameter gradients
// are ACCUMULATED into `acc`; the return value is the gradient w.r.t. the
// network input.
Vec mlp_backward(const MlpParams& params, const MlpCache& cache,
                 std::span<const double> output_grad, MlpGrads& acc);

// Class-conditioning table: num_classes + 1 learned rows, where the extra
// last row is the null (unconditional) slot used by guidance dropout.
struct EmbeddingTable {
  std::size_t num_entries = 0;  // C + 1
  std::size_t dim = 0;
  Tensor2 rows;

  std::size_t null_index() const { return num_entries - 1; }
  std::span<const double> row(std::size_t idx) const { return rows.row(idx); }
};

EmbeddingTable make_embedding(std::size_t num_classes, std::size_t dim, Rng& rng);

// Sinusoidal timestep features: out[2k] = sin(t * w_k), out[2k+1] = cos(t * w_k)
// with w_k = base^(-2k/dim), base 10000. t = 0 is allowed for probing; dim must
// be even. max_t only bounds the valid range of t.
Vec time_embedding(std::size_t t, std::size_t dim, std::size_t max_t);

}  // namespace dpt
