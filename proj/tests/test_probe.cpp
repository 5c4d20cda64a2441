#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "probe.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace dpt;

namespace {

// Small 3-class blob set around fixed centers.
struct Toy {
  Tensor2 features;
  std::vector<std::size_t> labels;
};

Toy make_toy(std::size_t per_class, double spread, std::uint64_t seed) {
  const double centers[3][2] = {{2.0, 0.0}, {-1.0, 1.5}, {0.0, -2.0}};
  Toy toy;
  toy.features = Tensor2(3 * per_class, 2);
  Rng rng(seed);
  std::size_t row = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      toy.features.at(row, 0) = centers[c][0] + spread * rng.normal();
      toy.features.at(row, 1) = centers[c][1] + spread * rng.normal();
      toy.labels.push_back(c);
    }
  }
  return toy;
}

// Independent reimplementation: same objective, different code path
// (explicit per-parameter loops, exp-normalize per sample), run to the same
// gradient tolerance.
struct OracleFit {
  std::vector<std::vector<double>> w;  // C x F
  std::vector<double> b;               // C
};

OracleFit oracle_logreg(const Tensor2& x, const std::vector<std::size_t>& y, std::size_t C,
                        double l2, double tol, std::size_t max_iters) {
  const std::size_t n = x.rows, F = x.cols;
  OracleFit fit{std::vector<std::vector<double>>(C, std::vector<double>(F, 0.0)),
                std::vector<double>(C, 0.0)};
  double max_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (std::size_t j = 0; j < F; ++j) s += x.at(i, j) * x.at(i, j);
    max_sq = std::max(max_sq, s);
  }
  const double lr = 1.0 / (0.5 * max_sq + l2);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    std::vector<std::vector<double>> gw(C, std::vector<double>(F, 0.0));
    std::vector<double> gb(C, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> p(C);
      double mx = -1e300;
      for (std::size_t c = 0; c < C; ++c) {
        p[c] = fit.b[c];
        for (std::size_t j = 0; j < F; ++j) p[c] += fit.w[c][j] * x.at(i, j);
        mx = std::max(mx, p[c]);
      }
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        p[c] = std::exp(p[c] - mx);
        z += p[c];
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double resid = p[c] / z - (y[i] == c ? 1.0 : 0.0);
        gb[c] += resid / n;
        for (std::size_t j = 0; j < F; ++j) gw[c][j] += resid * x.at(i, j) / n;
      }
    }
    double gnorm = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t j = 0; j < F; ++j) {
        gw[c][j] += l2 * fit.w[c][j];
        gnorm += gw[c][j] * gw[c][j];
      }
      gnorm += gb[c] * gb[c];
    }
    if (std::sqrt(gnorm) < tol) break;
    for (std::size_t c = 0; c < C; ++c) {
      fit.b[c] -= lr * gb[c];
      for (std::size_t j = 0; j < F; ++j) fit.w[c][j] -= lr * gw[c][j];
    }
  }
  return fit;
}

}  // namespace

TEST_CASE("separable two-class data reaches training accuracy 1") {
  Tensor2 x(8, 1);
  std::vector<std::size_t> y;
  for (int i = 0; i < 8; ++i) {
    x.at(i, 0) = i < 4 ? -2.0 - i : 2.0 + i;
    y.push_back(i < 4 ? 0 : 1);
  }
  ProbeConfig cfg;
  cfg.l2 = 1e-4;
  const LinearProbe probe = train_probe(x, y, 2, cfg);
  const Prediction pred = predict_probe(probe, x);
  CHECK(pred.labels == y);
}

TEST_CASE("stronger regularization shrinks the weight norm") {
  const Toy toy = make_toy(30, 0.4, 5);
  double prev = 1e300;
  for (double l2 : {1e-3, 1e-1, 10.0}) {
    ProbeConfig cfg;
    cfg.l2 = l2;
    const LinearProbe probe = train_probe(toy.features, toy.labels, 3, cfg);
    const double wn = norm2(probe.weight.data);
    CHECK(wn < prev);
    prev = wn;
  }
}

TEST_CASE("single-class input is rejected") {
  Tensor2 x(4, 2);
  const std::vector<std::size_t> y(4, 1);
  CHECK_THROWS_AS(train_probe(x, y, 3, ProbeConfig{}), ConfigError);
}

TEST_CASE("3-class toy fit matches an independent reimplementation") {
  const Toy toy = make_toy(25, 0.5, 9);
  ProbeConfig cfg;
  cfg.l2 = 1e-2;
  cfg.tol = 1e-8;
  cfg.max_iters = 200000;
  const LinearProbe probe = train_probe(toy.features, toy.labels, 3, cfg);
  const OracleFit oracle = oracle_logreg(toy.features, toy.labels, 3, cfg.l2, cfg.tol, cfg.max_iters);

  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(probe.bias[c] == doctest::Approx(oracle.b[c]).epsilon(1e-5));
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(probe.weight.at(c, j) == doctest::Approx(oracle.w[c][j]).epsilon(1e-5));
    }
  }
  // and identical predictions on the training set
  const Prediction pred = predict_probe(probe, toy.features);
  for (std::size_t i = 0; i < toy.features.rows; ++i) {
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t c = 0; c < 3; ++c) {
      double v = oracle.b[c];
      for (std::size_t j = 0; j < 2; ++j) v += oracle.w[c][j] * toy.features.at(i, j);
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    CHECK(pred.labels[i] == best);
  }
}

TEST_CASE("training is deterministic and permutation-invariant in its result") {
  const Toy toy = make_toy(20, 0.5, 13);
  ProbeConfig cfg;
  const LinearProbe a = train_probe(toy.features, toy.labels, 3, cfg);
  const LinearProbe b = train_probe(toy.features, toy.labels, 3, cfg);
  CHECK(a.weight.data == b.weight.data);
  CHECK(a.bias == b.bias);

  // reversed row order: same optimum up to summation rounding
  Tensor2 rev(toy.features.rows, toy.features.cols);
  std::vector<std::size_t> rev_y(toy.labels.size());
  for (std::size_t i = 0; i < toy.features.rows; ++i) {
    const std::size_t j = toy.features.rows - 1 - i;
    rev.at(i, 0) = toy.features.at(j, 0);
    rev.at(i, 1) = toy.features.at(j, 1);
    rev_y[i] = toy.labels[j];
  }
  const LinearProbe c = train_probe(rev, rev_y, 3, cfg);
  for (std::size_t k = 0; k < a.weight.data.size(); ++k) {
    CHECK(c.weight.data[k] == doctest::Approx(a.weight.data[k]).epsilon(1e-7));
  }
  const Prediction pa = predict_probe(a, toy.features);
  const Prediction pc = predict_probe(c, toy.features);
  CHECK(pa.labels == pc.labels);
}

TEST_CASE("zero probe predicts uniform probabilities and label 0") {
  LinearProbe probe;
  probe.weight = Tensor2(3, 2);
  probe.bias = Vec(3, 0.0);
  Tensor2 x(2, 2);
  x.at(0, 0) = 1.0;
  x.at(1, 1) = -2.0;
  const Prediction pred = predict_probe(probe, x);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(pred.labels[i] == 0);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(pred.probabilities.at(i, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("argmax prefers the lowest index and probabilities sum to one") {
  LinearProbe probe;
  probe.weight = Tensor2(3, 1);
  probe.weight.at(0, 0) = 2.0;
  probe.weight.at(1, 0) = 1.0;
  probe.weight.at(2, 0) = 1.0;
  probe.bias = Vec(3, 0.0);
  Tensor2 x(1, 1);
  x.at(0, 0) = 1.0;
  const Prediction pred = predict_probe(probe, x);
  CHECK(pred.labels[0] == 0);  // logits (2, 1, 1)
  double s = 0.0;
  for (std::size_t c = 0; c < 3; ++c) s += pred.probabilities.at(0, c);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}
