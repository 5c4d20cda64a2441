#include "optim.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace dpt {

ParamBlocks mlp_param_blocks(MlpParams& p) {
  ParamBlocks blocks;
  for (auto& l : p.layers) {
    blocks.emplace_back(l.weight.data);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

GradBlocks mlp_grad_blocks(const MlpGrads& g) {
  GradBlocks blocks;
  for (const auto& l : g.layers) {
    blocks.emplace_back(l.weight.data);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

AdamState make_adam_state(const AdamConfig& cfg, const ParamBlocks& params) {
  AdamState s;
  s.cfg = cfg;
  s.step = 0;
  for (const auto& b : params) {
    s.m.emplace_back(b.size(), 0.0);
    s.v.emplace_back(b.size(), 0.0);
  }
  return s;
}

void adam_step(AdamState& state, ParamBlocks params, const GradBlocks& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw InputError("adam_step: block count mismatch");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.m[b].size()) {
      throw InputError("adam_step: block " + std::to_string(b) + " shape mismatch");
    }
    for (std::size_t i = 0; i < grads[b].size(); ++i) {
      if (!std::isfinite(grads[b][i])) {
        throw NumericError("adam_step: non-finite gradient at block " + std::to_string(b) +
                           " index " + std::to_string(i));
      }
    }
  }
  state.step += 1;
  const double b1 = state.cfg.beta1;
  const double b2 = state.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    Vec& m = state.m[b];
    Vec& v = state.v[b];
    std::span<double> p = params[b];
    std::span<const double> g = grads[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      p[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.epsilon);
    }
  }
}

void sgd_step(double lr, ParamBlocks params, const GradBlocks& grads) {
  if (params.size() != grads.size()) throw InputError("sgd_step: block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size()) {
      throw InputError("sgd_step: block " + std::to_string(b) + " shape mismatch");
    }
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      params[b][i] -= lr * grads[b][i];
    }
  }
}

}  // namespace dpt
