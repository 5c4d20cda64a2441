#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mlp.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dpt {

// Self-supervised prototype encoder: masked/noised anchor views are pulled
// toward an EMA target encoder's assignment over a learnable prototype bank,
// with a mean-entropy regularizer spreading prototype usage.
struct SslConfig {
  std::size_t anchor_views = 2;   // H
  double mask_ratio = 0.3;        // fraction of coordinates zeroed per anchor view
  double noise_scale = 0.1;       // additive Gaussian view noise
  double tau = 0.1;               // anchor assignment temperature
  double tau_target = 0.025;      // target assignment temperature
  double entropy_weight = 1.0;    // lambda
  double ema_decay = 0.996;       // m
  std::size_t prototypes = 32;    // P
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 6;
  Activation activation = Activation::kTanh;
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 2e-3;
};

struct SslState {
  MlpParams anchor;      // theta, trained by gradient
  MlpParams target;      // theta-bar, updated only by ema_update
  Tensor2 prototypes;    // P x feature_dim, trained by gradient
};

// H corrupted anchor views (noise then exact ceil(mask_ratio * d) zeroed
// coordinates) plus one clean-noise target view.
struct ViewSet {
  std::vector<Vec> anchors;
  Vec target;
};

ViewSet make_views(std::span<const double> x, const SslConfig& cfg, Rng& rng);

// softmax over cosine similarities between feature and each prototype row,
// scaled by 1/tau. Throws NumericError on a zero-norm feature or prototype.
Vec prototype_assignment(std::span<const double> feature, const Tensor2& prototypes,
                         double tau);

struct SslGrads {
  MlpGrads encoder;
  Tensor2 prototypes;
};

// Loss on frozen views: mean over anchors of the cross entropy between the
// anchor assignment (temperature tau) and the target assignment (EMA encoder,
// temperature tau_target), minus entropy_weight times the entropy of the mean
// anchor assignment. Gradients are exact w.r.t. the anchor encoder and the
// prototype bank; the target encoder is treated as a constant.
std::pair<double, SslGrads> ssl_loss_on_views(const SslState& state,
                                              const std::vector<ViewSet>& batch_views,
                                              const SslConfig& cfg);

std::pair<double, SslGrads> ssl_loss_and_grads(const SslState& state,
                                               const std::vector<Vec>& batch,
                                               const SslConfig& cfg, Rng& rng);

// theta_bar' = m * theta_bar + (1 - m) * theta, elementwise.
void ema_update(MlpParams& target, const MlpParams& anchor, double m);

// Target-encoder features on clean inputs, one row per item.
Tensor2 extract_features(const SslState& state, const std::vector<Vec>& inputs);

// Adam on (theta, prototypes) over shuffled minibatches, EMA after each step.
// Returns per-epoch mean loss.
std::pair<SslState, std::vector<double>> train_encoder(const std::vector<Vec>& data,
                                                       std::size_t input_dim,
                                                       const SslConfig& cfg, Rng& rng);

}  // namespace dpt
