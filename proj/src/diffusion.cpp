#include "diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "errors.hpp"
#include "optim.hpp"

namespace dpt {

ConditionalDenoiser make_denoiser(std::size_t data_dim, std::size_t num_classes,
                                  std::size_t class_dim, std::size_t time_dim,
                                  const std::vector<std::size_t>& hidden,
                                  Activation activation, Rng& rng) {
  if (data_dim == 0 || num_classes == 0) throw ConfigError("make_denoiser: zero dimension");
  if (time_dim % 2 != 0) throw ConfigError("make_denoiser: time_dim must be even");
  ConditionalDenoiser m;
  m.data_dim = data_dim;
  m.time_dim = time_dim;
  std::vector<std::size_t> dims;
  dims.push_back(data_dim + time_dim + class_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(data_dim);
  m.trunk = make_mlp(dims, activation, rng);
  m.classes = make_embedding(num_classes, class_dim, rng);
  return m;
}

namespace {

Vec assemble_input(const ConditionalDenoiser& model, std::span<const double> x_t,
                   std::size_t cls, std::size_t t, std::size_t T) {
  if (x_t.size() != model.data_dim) throw InputError("denoiser: x_t dimension mismatch");
  if (cls >= model.classes.num_entries) throw InputError("denoiser: class index out of range");
  Vec input;
  input.reserve(model.data_dim + model.time_dim + model.classes.dim);
  input.insert(input.end(), x_t.begin(), x_t.end());
  const Vec te = time_embedding(t, model.time_dim, T);
  input.insert(input.end(), te.begin(), te.end());
  const auto ce = model.classes.row(cls);
  input.insert(input.end(), ce.begin(), ce.end());
  return input;
}

}  // namespace

Vec denoiser_eval(const ConditionalDenoiser& model, std::span<const double> x_t,
                  std::size_t cls, std::size_t t, std::size_t T) {
  const Vec input = assemble_input(model, x_t, cls, t, T);
  return mlp_forward(model.trunk, input);
}

Vec forward_noise(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                  const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.T) throw InputError("forward_noise: t out of range");
  if (x0.size() != eps.size()) throw InputError("forward_noise: x0/eps size mismatch");
  const double ab = sched.alpha_bar_at(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  Vec out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

DenoiserGrads make_zero_denoiser_grads(const ConditionalDenoiser& model) {
  DenoiserGrads g;
  g.trunk = make_zero_grads(model.trunk);
  g.class_rows = Tensor2(model.classes.num_entries, model.classes.dim);
  return g;
}

BatchDraw draw_batch(const std::vector<TrainItem>& batch, const DiffusionSchedule& sched,
                     const GuidanceConfig& guidance, std::size_t num_classes, Rng& rng) {
  BatchDraw draw;
  draw.t.reserve(batch.size());
  draw.eps.reserve(batch.size());
  draw.cond.reserve(batch.size());
  for (const TrainItem& item : batch) {
    if (item.label >= num_classes) {
      throw InputError("draw_batch: label " + std::to_string(item.label) + " out of range");
    }
    draw.t.push_back(rng.uniform_index(sched.T) + 1);
    Vec eps(item.x.size());
    for (double& e : eps) e = rng.normal();
    draw.eps.push_back(std::move(eps));
    const bool drop = rng.uniform() < guidance.train_drop_prob;
    draw.cond.push_back(drop ? guidance.null_class : item.label);
  }
  return draw;
}

std::pair<double, DenoiserGrads> diffusion_loss_on_draw(const ConditionalDenoiser& model,
                                                        const std::vector<TrainItem>& batch,
                                                        const BatchDraw& draw,
                                                        const DiffusionSchedule& sched) {
  if (batch.empty()) throw InputError("diffusion_loss_on_draw: empty batch");
  if (draw.t.size() != batch.size()) throw InputError("diffusion_loss_on_draw: draw size mismatch");
  DenoiserGrads grads = make_zero_denoiser_grads(model);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  MlpCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec x_t = forward_noise(batch[i].x, draw.t[i], draw.eps[i], sched);
    const Vec input = assemble_input(model, x_t, draw.cond[i], draw.t[i], sched.T);
    const Vec out = mlp_forward(model.trunk, input, &cache);
    Vec out_grad(out.size());
    double item_loss = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double r = out[k] - draw.eps[i][k];
      item_loss += r * r;
      out_grad[k] = 2.0 * r * inv_b;
    }
    loss += item_loss * inv_b;
    const Vec input_grad = mlp_backward(model.trunk, cache, out_grad, grads.trunk);
    // class-embedding slice of the input gradient
    const std::size_t offset = model.data_dim + model.time_dim;
    auto row = grads.class_rows.row(draw.cond[i]);
    for (std::size_t k = 0; k < model.classes.dim; ++k) row[k] += input_grad[offset + k];
  }
  return {loss, std::move(grads)};
}

std::pair<double, DenoiserGrads> diffusion_loss_and_grads(const ConditionalDenoiser& model,
                                                          const std::vector<TrainItem>& batch,
                                                          const DiffusionSchedule& sched,
                                                          const GuidanceConfig& guidance,
                                                          Rng& rng) {
  const BatchDraw draw = draw_batch(batch, sched, guidance, model.num_classes(), rng);
  auto result = diffusion_loss_on_draw(model, batch, draw, sched);
  if (!std::isfinite(result.first)) {
    throw NumericError("diffusion loss is non-finite");
  }
  return result;
}

Vec cfg_epsilon(std::span<const double> eps_cond, std::span<const double> eps_uncond,
                double omega) {
  if (eps_cond.size() != eps_uncond.size()) throw InputError("cfg_epsilon: size mismatch");
  Vec out(eps_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 + omega) * eps_cond[i] - omega * eps_uncond[i];
  }
  return out;
}

Vec ancestral_step(std::span<const double> x_t, std::span<const double> eps_tilde,
                   std::size_t t, const DiffusionSchedule& sched, std::span<const double> z,
                   NoiseMode mode) {
  if (t < 1 || t > sched.T) throw InputError("ancestral_step: t out of range");
  if (x_t.size() != eps_tilde.size() || x_t.size() != z.size()) {
    throw InputError("ancestral_step: size mismatch");
  }
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
  const double coeff = sched.beta_at(t) / std::sqrt(1.0 - sched.alpha_bar_at(t));
  const double s = sched.sigma_at(t);
  const double noise_scale = mode == NoiseMode::kSigma ? s : s * s;
  Vec out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - coeff * eps_tilde[i]) + noise_scale * z[i];
  }
  return out;
}

Tensor2 sample_class(const ConditionalDenoiser& model, std::size_t cls,
                     const DiffusionSchedule& sched, const GuidanceConfig& guidance,
                     Rng& rng, std::size_t n) {
  if (cls >= model.classes.num_entries) throw InputError("sample_class: class out of range");
  const std::size_t d = model.data_dim;
  Tensor2 out(n, d);
  const std::uint64_t root = rng.next_u64();
  const Vec zero(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Rng sub(Rng::derive(root, static_cast<std::uint64_t>(i)));
    Vec x(d);
    for (double& v : x) v = sub.normal();
    for (std::size_t t = sched.T; t >= 1; --t) {
      const Vec eps_cond = denoiser_eval(model, x, cls, t, sched.T);
      Vec eps_tilde;
      if (guidance.omega != 0.0) {
        const Vec eps_uncond = denoiser_eval(model, x, guidance.null_class, t, sched.T);
        eps_tilde = cfg_epsilon(eps_cond, eps_uncond, guidance.omega);
      } else {
        eps_tilde = eps_cond;
      }
      Vec z = zero;
      if (t > 1) {
        for (double& v : z) v = sub.normal();
      }
      x = ancestral_step(x, eps_tilde, t, sched, z, guidance.noise_mode);
      if (!all_finite(std::span<const double>(x))) {
        throw NumericError("sample_class: non-finite state at t = " + std::to_string(t));
      }
    }
    std::copy(x.begin(), x.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> train_denoiser(ConditionalDenoiser& model,
                                   const std::vector<TrainItem>& data,
                                   const DiffusionSchedule& sched,
                                   const GuidanceConfig& guidance,
                                   const DiffusionTrainConfig& cfg, Rng& rng) {
  if (data.empty()) throw InputError("train_denoiser: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("train_denoiser: batch_size must be positive");
  ParamBlocks params = mlp_param_blocks(model.trunk);
  params.emplace_back(model.classes.rows.data);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam = make_adam_state(adam_cfg, params);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run rng; deterministic given the seed.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<TrainItem> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      auto [loss, grads] = diffusion_loss_and_grads(model, batch, sched, guidance, rng);
      GradBlocks gblocks = mlp_grad_blocks(grads.trunk);
      gblocks.emplace_back(grads.class_rows.data);
      adam_step(adam, params, gblocks);
      total += loss * static_cast<double>(end - start);
      count += end - start;
    }
    epoch_losses.push_back(total / static_cast<double>(count));
  }
  return epoch_losses;
}

}  // namespace dpt
