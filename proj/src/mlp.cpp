#include "mlp.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace dpt {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSmoothRelu:
      // softplus, overflow-safe on both tails
      return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return 0.0;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kSmoothRelu:
      // sigmoid(x), stable on both tails
      return x > 0.0 ? 1.0 / (1.0 + std::exp(-x))
                     : std::exp(x) / (1.0 + std::exp(x));
  }
  return 0.0;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("make_mlp: need at least input and output dims");
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("make_mlp: zero layer width");
  }
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    MlpLayer layer;
    layer.weight = Tensor2(dims[l + 1], dims[l]);
    layer.bias = Vec(dims[l + 1], 0.0);
    const double s = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    for (double& w : layer.weight.data) w = (2.0 * rng.uniform() - 1.0) * s;
    p.layers.push_back(std::move(layer));
  }
  p.activations.assign(p.layers.size() - 1, hidden);
  return p;
}

Vec mlp_forward(const MlpParams& params, std::span<const double> input, MlpCache* cache) {
  if (params.layers.empty()) throw InputError("mlp_forward: empty network");
  if (input.size() != params.input_dim()) {
    throw InputError("mlp_forward: input length " + std::to_string(input.size()) +
                     " does not match first layer width " +
                     std::to_string(params.input_dim()));
  }
  if (cache) {
    cache->input.assign(input.begin(), input.end());
    cache->pre.clear();
    cache->post.clear();
  }
  Vec cur(input.begin(), input.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const MlpLayer& layer = params.layers[l];
    Vec z(layer.bias);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      z[r] += dot(layer.weight.row(r), cur);
    }
    const bool is_hidden = l + 1 < params.layers.size();
    Vec out(z.size());
    if (is_hidden) {
      const Activation act = params.activations[l];
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate(act, z[i]);
    } else {
      out = z;
    }
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(out);
    }
    cur = std::move(out);
  }
  return cur;
}

MlpGrads make_zero_grads(const MlpParams& params) {
  MlpGrads g;
  for (const auto& l : params.layers) {
    MlpLayer zl;
    zl.weight = Tensor2(l.weight.rows, l.weight.cols);
    zl.bias = Vec(l.bias.size(), 0.0);
    g.layers.push_back(std::move(zl));
  }
  return g;
}

void scale_grads(MlpGrads& grads, double factor) {
  for (auto& l : grads.layers) {
    for (double& w : l.weight.data) w *= factor;
    for (double& b : l.bias) b *= factor;
  }
}

Vec mlp_backward(const MlpParams& params, const MlpCache& cache,
                 std::span<const double> output_grad, MlpGrads& acc) {
  const std::size_t L = params.layers.size();
  if (cache.pre.size() != L || cache.post.size() != L) {
    throw InputError("mlp_backward: cache does not match network depth");
  }
  if (output_grad.size() != params.output_dim()) {
    throw InputError("mlp_backward: output_grad length mismatch");
  }
  if (acc.layers.size() != L) throw InputError("mlp_backward: grad accumulator shape mismatch");

  // delta = dLoss/d(pre-activation of layer l); output layer is linear.
  Vec delta(output_grad.begin(), output_grad.end());
  for (std::size_t li = L; li-- > 0;) {
    const MlpLayer& layer = params.layers[li];
    if (li + 1 < L) {
      const Activation act = params.activations[li];
      const Vec& z = cache.pre[li];
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= activate_grad(act, z[i]);
    }
    std::span<const double> below =
        li == 0 ? std::span<const double>(cache.input) : std::span<const double>(cache.post[li - 1]);
    MlpLayer& g = acc.layers[li];
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      const double d = delta[r];
      g.bias[r] += d;
      double* grow = g.weight.data.data() + r * g.weight.cols;
      for (std::size_t c = 0; c < layer.weight.cols; ++c) grow[c] += d * below[c];
    }
    // propagate to the layer below: W^T delta
    Vec next(layer.weight.cols, 0.0);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      const double d = delta[r];
      const double* wrow = layer.weight.data.data() + r * layer.weight.cols;
      for (std::size_t c = 0; c < layer.weight.cols; ++c) next[c] += wrow[c] * d;
    }
    delta = std::move(next);
  }
  return delta;
}

EmbeddingTable make_embedding(std::size_t num_classes, std::size_t dim, Rng& rng) {
  if (num_classes == 0 || dim == 0) throw ConfigError("make_embedding: zero size");
  EmbeddingTable e;
  e.num_entries = num_classes + 1;  // last row is the null condition
  e.dim = dim;
  e.rows = Tensor2(e.num_entries, dim);
  const double s = std::sqrt(6.0 / static_cast<double>(e.num_entries + dim));
  for (double& w : e.rows.data) w = (2.0 * rng.uniform() - 1.0) * s;
  return e;
}

Vec time_embedding(std::size_t t, std::size_t dim, std::size_t max_t) {
  if (dim % 2 != 0) throw ConfigError("time_embedding: dim must be even");
  if (t > max_t) throw InputError("time_embedding: t out of range");
  Vec out(dim);
  const double td = static_cast<double>(t);
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[2 * k] = std::sin(td * freq);
    out[2 * k + 1] = std::cos(td * freq);
  }
  return out;
}

}  // namespace dpt
