#include "ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "errors.hpp"
#include "optim.hpp"

namespace dpt {

namespace {

Vec softmax(Vec logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
  return logits;
}

// Cosine similarities of `feature` against every prototype row, plus the
// pieces the backward pass needs.
struct CosineBlock {
  Vec sims;        // P
  Vec unit;        // feature / |feature|
  double norm;     // |feature|
};

CosineBlock cosine_sims(std::span<const double> feature, const Tensor2& prototypes,
                        const Vec& proto_norms) {
  CosineBlock cb;
  cb.norm = norm2(feature);
  if (cb.norm == 0.0) throw NumericError("prototype assignment: zero-norm feature");
  cb.unit.assign(feature.begin(), feature.end());
  for (double& v : cb.unit) v /= cb.norm;
  cb.sims.resize(prototypes.rows);
  for (std::size_t k = 0; k < prototypes.rows; ++k) {
    cb.sims[k] = dot(cb.unit, prototypes.row(k)) / proto_norms[k];
  }
  return cb;
}

Vec prototype_norms(const Tensor2& prototypes) {
  Vec norms(prototypes.rows);
  for (std::size_t k = 0; k < prototypes.rows; ++k) {
    norms[k] = norm2(prototypes.row(k));
    if (norms[k] == 0.0) {
      throw NumericError("prototype assignment: zero-norm prototype row " + std::to_string(k));
    }
  }
  return norms;
}

}  // namespace

ViewSet make_views(std::span<const double> x, const SslConfig& cfg, Rng& rng) {
  const std::size_t d = x.size();
  ViewSet vs;
  vs.anchors.reserve(cfg.anchor_views);
  const std::size_t mask_count =
      static_cast<std::size_t>(std::ceil(cfg.mask_ratio * static_cast<double>(d)));
  std::vector<std::size_t> idx(d);
  for (std::size_t h = 0; h < cfg.anchor_views; ++h) {
    Vec view(x.begin(), x.end());
    for (double& v : view) v += cfg.noise_scale * rng.normal();
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t j = 0; j < mask_count; ++j) {
      const std::size_t pick = j + rng.uniform_index(d - j);
      std::swap(idx[j], idx[pick]);
      view[idx[j]] = 0.0;
    }
    vs.anchors.push_back(std::move(view));
  }
  vs.target.assign(x.begin(), x.end());
  for (double& v : vs.target) v += cfg.noise_scale * rng.normal();
  return vs;
}

Vec prototype_assignment(std::span<const double> feature, const Tensor2& prototypes,
                         double tau) {
  if (tau <= 0.0) throw ConfigError("prototype_assignment: tau must be positive");
  const Vec norms = prototype_norms(prototypes);
  CosineBlock cb = cosine_sims(feature, prototypes, norms);
  Vec logits(cb.sims);
  for (double& v : logits) v /= tau;
  return softmax(std::move(logits));
}

std::pair<double, SslGrads> ssl_loss_on_views(const SslState& state,
                                              const std::vector<ViewSet>& batch_views,
                                              const SslConfig& cfg) {
  if (batch_views.empty()) throw InputError("ssl_loss_on_views: empty batch");
  const std::size_t B = batch_views.size();
  const std::size_t H = cfg.anchor_views;
  const std::size_t P = state.prototypes.rows;
  const double inv_bh = 1.0 / static_cast<double>(B * H);
  const Vec proto_norms = prototype_norms(state.prototypes);

  // Forward: anchor features (with caches), target assignments (constants).
  std::vector<MlpCache> caches(B * H);
  std::vector<Vec> anchor_feat(B * H);
  std::vector<CosineBlock> anchor_cos(B * H);
  std::vector<Vec> anchor_p(B * H);
  std::vector<Vec> target_p(B);
  std::vector<CosineBlock> target_cos(B);
  Vec mean_p(P, 0.0);
  for (std::size_t i = 0; i < B; ++i) {
    if (batch_views[i].anchors.size() != H) {
      throw InputError("ssl_loss_on_views: view count mismatch");
    }
    const Vec w = mlp_forward(state.target, batch_views[i].target);
    target_cos[i] = cosine_sims(w, state.prototypes, proto_norms);
    Vec tl(target_cos[i].sims);
    for (double& v : tl) v /= cfg.tau_target;
    target_p[i] = softmax(std::move(tl));
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t a = i * H + h;
      anchor_feat[a] = mlp_forward(state.anchor, batch_views[i].anchors[h], &caches[a]);
      anchor_cos[a] = cosine_sims(anchor_feat[a], state.prototypes, proto_norms);
      Vec al(anchor_cos[a].sims);
      for (double& v : al) v /= cfg.tau;
      anchor_p[a] = softmax(std::move(al));
      for (std::size_t k = 0; k < P; ++k) mean_p[k] += anchor_p[a][k] * inv_bh;
    }
  }

  // Loss: mean cross entropy (target weights log-anchor) minus lambda * H(mean_p).
  double ce = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t h = 0; h < H; ++h) {
      const Vec& p = anchor_p[i * H + h];
      const Vec& t = target_p[i];
      for (std::size_t k = 0; k < P; ++k) ce -= t[k] * std::log(p[k]);
    }
  }
  ce *= inv_bh;
  double entropy = 0.0;
  for (std::size_t k = 0; k < P; ++k) entropy -= mean_p[k] * std::log(mean_p[k]);
  const double loss = ce - cfg.entropy_weight * entropy;

  // dLoss/d mean_p flows equally into every anchor assignment.
  Vec dmean(P);
  for (std::size_t k = 0; k < P; ++k) {
    dmean[k] = cfg.entropy_weight * (std::log(mean_p[k]) + 1.0);
  }

  SslGrads grads;
  grads.encoder = make_zero_grads(state.anchor);
  grads.prototypes = Tensor2(P, state.prototypes.cols);

  // Anchor branch: gradient w.r.t. logits, then cosine, then encoder and q.
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t a = i * H + h;
      const Vec& p = anchor_p[a];
      const Vec& t = target_p[i];
      // softmax backward for the entropy term: g -> p .* (g - <g, p>)
      double gdotp = 0.0;
      for (std::size_t k = 0; k < P; ++k) gdotp += dmean[k] * p[k];
      Vec dlogit(P);
      for (std::size_t k = 0; k < P; ++k) {
        dlogit[k] = inv_bh * ((p[k] - t[k]) + p[k] * (dmean[k] - gdotp));
      }
      // logits = sims / tau
      const CosineBlock& cb = anchor_cos[a];
      Vec dfeat(anchor_feat[a].size(), 0.0);
      for (std::size_t k = 0; k < P; ++k) {
        const double ds = dlogit[k] / cfg.tau;
        const auto q = state.prototypes.row(k);
        const double qn = proto_norms[k];
        // d sim / d feature = (q_hat - sim * u_hat) / |u|
        for (std::size_t j = 0; j < dfeat.size(); ++j) {
          dfeat[j] += ds * (q[j] / qn - cb.sims[k] * cb.unit[j]) / cb.norm;
        }
        // d sim / d q_k = (u_hat - sim * q_hat) / |q_k|
        auto qg = grads.prototypes.row(k);
        for (std::size_t j = 0; j < qg.size(); ++j) {
          qg[j] += ds * (cb.unit[j] - cb.sims[k] * q[j] / qn) / qn;
        }
      }
      mlp_backward(state.anchor, caches[a], dfeat, grads.encoder);
    }
  }

  // Target branch: the assignment depends on q (not on theta-bar gradients),
  // so q also receives the cross-entropy gradient through the target softmax.
  for (std::size_t i = 0; i < B; ++i) {
    const Vec& t = target_p[i];
    Vec dpt(P, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const Vec& p = anchor_p[i * H + h];
      for (std::size_t k = 0; k < P; ++k) dpt[k] -= inv_bh * std::log(p[k]);
    }
    double gdotp = 0.0;
    for (std::size_t k = 0; k < P; ++k) gdotp += dpt[k] * t[k];
    const CosineBlock& cb = target_cos[i];
    for (std::size_t k = 0; k < P; ++k) {
      const double dlogit = t[k] * (dpt[k] - gdotp);
      const double ds = dlogit / cfg.tau_target;
      const auto q = state.prototypes.row(k);
      const double qn = proto_norms[k];
      auto qg = grads.prototypes.row(k);
      for (std::size_t j = 0; j < qg.size(); ++j) {
        qg[j] += ds * (cb.unit[j] - cb.sims[k] * q[j] / qn) / qn;
      }
    }
  }

  if (!std::isfinite(loss)) throw NumericError("ssl loss is non-finite");
  return {loss, std::move(grads)};
}

std::pair<double, SslGrads> ssl_loss_and_grads(const SslState& state,
                                               const std::vector<Vec>& batch,
                                               const SslConfig& cfg, Rng& rng) {
  std::vector<ViewSet> views;
  views.reserve(batch.size());
  for (const Vec& x : batch) views.push_back(make_views(x, cfg, rng));
  return ssl_loss_on_views(state, views, cfg);
}

void ema_update(MlpParams& target, const MlpParams& anchor, double m) {
  if (m < 0.0 || m > 1.0) throw ConfigError("ema_update: decay must be in [0, 1]");
  if (target.layers.size() != anchor.layers.size()) {
    throw InputError("ema_update: layer count mismatch");
  }
  for (std::size_t l = 0; l < target.layers.size(); ++l) {
    auto& tw = target.layers[l].weight.data;
    const auto& aw = anchor.layers[l].weight.data;
    if (tw.size() != aw.size()) throw InputError("ema_update: weight shape mismatch");
    for (std::size_t i = 0; i < tw.size(); ++i) tw[i] = m * tw[i] + (1.0 - m) * aw[i];
    auto& tb = target.layers[l].bias;
    const auto& ab = anchor.layers[l].bias;
    for (std::size_t i = 0; i < tb.size(); ++i) tb[i] = m * tb[i] + (1.0 - m) * ab[i];
  }
}

Tensor2 extract_features(const SslState& state, const std::vector<Vec>& inputs) {
  Tensor2 out(inputs.size(), state.target.output_dim());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Vec f = mlp_forward(state.target, inputs[i]);
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

std::pair<SslState, std::vector<double>> train_encoder(const std::vector<Vec>& data,
                                                       std::size_t input_dim,
                                                       const SslConfig& cfg, Rng& rng) {
  if (data.empty()) throw InputError("train_encoder: empty dataset");
  if (cfg.tau <= 0.0 || cfg.tau_target <= 0.0) throw ConfigError("train_encoder: temperatures must be positive");
  if (cfg.entropy_weight < 0.0) throw ConfigError("train_encoder: entropy_weight must be >= 0");
  if (cfg.mask_ratio < 0.0 || cfg.mask_ratio >= 1.0) throw ConfigError("train_encoder: mask_ratio must be in [0, 1)");

  SslState state;
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.feature_dim);
  state.anchor = make_mlp(dims, cfg.activation, rng);
  state.target = state.anchor;
  state.prototypes = Tensor2(cfg.prototypes, cfg.feature_dim);
  const double s = std::sqrt(6.0 / static_cast<double>(cfg.prototypes + cfg.feature_dim));
  for (double& v : state.prototypes.data) v = (2.0 * rng.uniform() - 1.0) * s;

  ParamBlocks params = mlp_param_blocks(state.anchor);
  params.emplace_back(state.prototypes.data);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam = make_adam_state(adam_cfg, params);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Vec> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      auto [loss, grads] = ssl_loss_and_grads(state, batch, cfg, rng);
      GradBlocks gblocks = mlp_grad_blocks(grads.encoder);
      gblocks.emplace_back(grads.prototypes.data);
      adam_step(adam, params, gblocks);
      ema_update(state.target, state.anchor, cfg.ema_decay);
      total += loss * static_cast<double>(end - start);
      count += end - start;
    }
    epoch_losses.push_back(total / static_cast<double>(count));
  }
  return {std::move(state), std::move(epoch_losses)};
}

}  // namespace dpt
