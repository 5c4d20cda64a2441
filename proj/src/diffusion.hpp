#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mlp.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

namespace dpt {

// Reverse-step noise term: sigma_t * z is the standard ancestral sampler;
// sigma_sq selects the sigma_t^2 * z variant.
enum class NoiseMode { kSigma, kSigmaSq };

struct GuidanceConfig {
  double omega = 0.4;            // guidance strength, >= -1
  std::size_t null_class = 0;    // index of the unconditional embedding row (= C)
  double train_drop_prob = 0.1;  // probability of dropping the label during training
  NoiseMode noise_mode = NoiseMode::kSigma;
};

// epsilon-predictor: MLP trunk over [x_t, time features, class embedding].
struct ConditionalDenoiser {
  MlpParams trunk;
  EmbeddingTable classes;  // C + 1 rows, row C is the null condition
  std::size_t time_dim = 0;
  std::size_t data_dim = 0;

  std::size_t num_classes() const { return classes.num_entries - 1; }
};

ConditionalDenoiser make_denoiser(std::size_t data_dim, std::size_t num_classes,
                                  std::size_t class_dim, std::size_t time_dim,
                                  const std::vector<std::size_t>& hidden,
                                  Activation activation, Rng& rng);

// Single evaluation of epsilon_theta(x_t, c, t). cls may be the null row.
Vec denoiser_eval(const ConditionalDenoiser& model, std::span<const double> x_t,
                  std::size_t cls, std::size_t t, std::size_t T);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Vec forward_noise(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                  const DiffusionSchedule& sched);

// Gradients for trunk and class-embedding rows.
struct DenoiserGrads {
  MlpGrads trunk;
  Tensor2 class_rows;  // same shape as classes.rows
};

DenoiserGrads make_zero_denoiser_grads(const ConditionalDenoiser& model);

struct TrainItem {
  Vec x;
  std::size_t label;
};

// One batch worth of frozen randomness: per-item timestep, noise draw, and
// the conditioning row after guidance dropout.
struct BatchDraw {
  std::vector<std::size_t> t;
  std::vector<Vec> eps;
  std::vector<std::size_t> cond;
};

BatchDraw draw_batch(const std::vector<TrainItem>& batch, const DiffusionSchedule& sched,
                     const GuidanceConfig& guidance, std::size_t num_classes, Rng& rng);

// Mean over the batch of |eps_theta(x_t, c, t) - eps|^2 with exact gradients,
// deterministic given the draw. This split exists so gradients can be checked
// against finite differences on frozen randomness.
std::pair<double, DenoiserGrads> diffusion_loss_on_draw(const ConditionalDenoiser& model,
                                                        const std::vector<TrainItem>& batch,
                                                        const BatchDraw& draw,
                                                        const DiffusionSchedule& sched);

std::pair<double, DenoiserGrads> diffusion_loss_and_grads(const ConditionalDenoiser& model,
                                                          const std::vector<TrainItem>& batch,
                                                          const DiffusionSchedule& sched,
                                                          const GuidanceConfig& guidance,
                                                          Rng& rng);

// (1 + omega) * eps_cond - omega * eps_uncond
Vec cfg_epsilon(std::span<const double> eps_cond, std::span<const double> eps_uncond,
                double omega);

// One reverse step:
//   x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) * eps) / sqrt(alpha_t) + noise(t) * z
// where noise(t) is sigma_t or sigma_t^2 depending on mode. Callers pass z = 0 at t = 1.
Vec ancestral_step(std::span<const double> x_t, std::span<const double> eps_tilde,
                   std::size_t t, const DiffusionSchedule& sched, std::span<const double> z,
                   NoiseMode mode);

// Draw n samples for class cls (or the null row) by ancestral sampling from
// x_T ~ N(0, I). Each sample runs on its own substream derived from one draw
// of `rng`, so trajectories are order-independent and a prefix of a larger n
// is unchanged. The unconditional branch is evaluated only when omega != 0.
Tensor2 sample_class(const ConditionalDenoiser& model, std::size_t cls,
                     const DiffusionSchedule& sched, const GuidanceConfig& guidance,
                     Rng& rng, std::size_t n);

struct DiffusionTrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double lr = 2e-3;
};

// Adam training loop over shuffled minibatches; returns per-epoch mean loss.
std::vector<double> train_denoiser(ConditionalDenoiser& model,
                                   const std::vector<TrainItem>& data,
                                   const DiffusionSchedule& sched,
                                   const GuidanceConfig& guidance,
                                   const DiffusionTrainConfig& cfg, Rng& rng);

}  // namespace dpt
