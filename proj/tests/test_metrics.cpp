#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "metrics.hpp"
#include "rng.hpp"

using namespace dpt;

TEST_CASE("confusion matrix basics") {
  SUBCASE("perfect predictions are diagonal") {
    const std::vector<std::size_t> t{0, 1, 2, 1, 0};
    const ConfusionMatrix cm = confusion(t, t, 3);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        CHECK(cm.at(a, b) == (a == b ? cm.row_sum(a) : 0));
      }
    }
    CHECK(cm.total() == 5);
  }

  SUBCASE("constant predictor fills one column") {
    const std::vector<std::size_t> t{0, 1, 2, 2};
    const std::vector<std::size_t> p(4, 0);
    const ConfusionMatrix cm = confusion(t, p, 3);
    CHECK(cm.col_sum(0) == 4);
    CHECK(cm.col_sum(1) == 0);
    CHECK(cm.col_sum(2) == 0);
  }

  SUBCASE("three-item enumeration") {
    const ConfusionMatrix cm = confusion({0, 1, 1}, {0, 1, 0}, 2);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.at(0, 1) == 0);
  }

  SUBCASE("out-of-range labels rejected") {
    CHECK_THROWS_AS(confusion({3}, {0}, 3), InputError);
    CHECK_THROWS_AS(confusion({0}, {0, 1}, 3), InputError);
  }
}

TEST_CASE("per-class precision and recall") {
  // class 0: tp=3, fp=1, fn=9
  ConfusionMatrix cm;
  cm.num_classes = 2;
  cm.counts = {3, 9, 1, 0};
  const auto stats = per_class_pr(cm);
  CHECK(stats[0].tp == 3);
  CHECK(stats[0].fp == 1);
  CHECK(stats[0].fn == 9);
  CHECK(*stats[0].precision == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(*stats[0].recall == doctest::Approx(0.25).epsilon(1e-15));

  // a class never predicted and never present has absent P and R
  ConfusionMatrix cm2;
  cm2.num_classes = 2;
  cm2.counts = {5, 0, 0, 0};
  const auto stats2 = per_class_pr(cm2);
  CHECK_FALSE(stats2[1].precision.has_value());
  CHECK_FALSE(stats2[1].recall.has_value());

  // totals: sum of tp equals trace; tp + fn per class equals row sums
  std::size_t tp_sum = 0;
  for (const auto& s : stats) tp_sum += s.tp;
  CHECK(tp_sum == cm.at(0, 0) + cm.at(1, 1));
  CHECK(stats[0].tp + stats[0].fn == cm.row_sum(0));
}

TEST_CASE("pr delta reporting") {
  ConfusionMatrix before;
  before.num_classes = 2;
  before.counts = {24, 76, 10, 90};  // R0 = 0.24
  ConfusionMatrix after;
  after.num_classes = 2;
  after.counts = {87, 13, 10, 90};  // R0 = 0.87

  const auto b = per_class_pr(before);
  const auto a = per_class_pr(after);

  SUBCASE("identical stats give zero deltas") {
    const PrDeltaReport r = pr_delta(b, b);
    for (const auto& e : r.recall) CHECK(*e.delta == 0.0);
    for (const auto& e : r.precision) CHECK(*e.delta == 0.0);
  }

  SUBCASE("recall 0.24 -> 0.87 reports +0.63") {
    const PrDeltaReport r = pr_delta(b, a);
    bool found = false;
    for (const auto& e : r.recall) {
      if (e.cls == 0) {
        CHECK(*e.delta == doctest::Approx(0.63).epsilon(1e-12));
        found = true;
      }
    }
    CHECK(found);
  }

  SUBCASE("sorting is a permutation and descending") {
    const PrDeltaReport r = pr_delta(b, a);
    CHECK(r.recall.size() == 2);
    for (std::size_t i = 1; i < r.recall.size(); ++i) {
      if (r.recall[i - 1].delta && r.recall[i].delta) {
        CHECK(*r.recall[i - 1].delta >= *r.recall[i].delta);
      }
    }
    std::vector<bool> seen(2, false);
    for (const auto& e : r.recall) seen[e.cls] = true;
    CHECK(seen[0]);
    CHECK(seen[1]);
  }

  SUBCASE("mismatched class counts rejected") {
    CHECK_THROWS_AS(pr_delta(b, std::vector<ClassStats>(3)), InputError);
  }
}

TEST_CASE("gaussian fit") {
  SUBCASE("identical samples give zero covariance") {
    Tensor2 s(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
      s.at(i, 0) = 1.5;
      s.at(i, 1) = -2.0;
    }
    const GaussianFit fit = fit_gaussian(s);
    CHECK(fit.mean[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(fit.mean[1] == doctest::Approx(-2.0).epsilon(1e-15));
    for (double v : fit.cov.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("mirrored cloud recovers the center exactly") {
    Tensor2 s(4, 2);
    s.at(0, 0) = 1.0;
    s.at(0, 1) = 2.0;
    s.at(1, 0) = -1.0;
    s.at(1, 1) = -2.0;
    s.at(2, 0) = 0.5;
    s.at(2, 1) = -0.25;
    s.at(3, 0) = -0.5;
    s.at(3, 1) = 0.25;
    const GaussianFit fit = fit_gaussian(s);
    CHECK(fit.mean[0] == 0.0);
    CHECK(fit.mean[1] == 0.0);
  }

  SUBCASE("too few samples rejected") {
    CHECK_THROWS_AS(fit_gaussian(Tensor2(2, 2)), InputError);
  }

  SUBCASE("unit gaussian covariance approaches identity") {
    Rng rng(3);
    Tensor2 s(10000, 2);
    for (std::size_t i = 0; i < s.rows; ++i) {
      s.at(i, 0) = rng.normal();
      s.at(i, 1) = rng.normal();
    }
    const GaussianFit fit = fit_gaussian(s);
    CHECK(std::abs(fit.cov.at(0, 0) - 1.0) < 0.1);
    CHECK(std::abs(fit.cov.at(1, 1) - 1.0) < 0.1);
    CHECK(std::abs(fit.cov.at(0, 1)) < 0.1);
    CHECK(fit.cov.at(0, 1) == fit.cov.at(1, 0));
  }
}

TEST_CASE("frechet distance closed forms") {
  GaussianFit a, b;
  a.mean = {0.0, 0.0};
  a.cov = Tensor2(2, 2);
  a.cov.at(0, 0) = 1.0;
  a.cov.at(1, 1) = 1.0;
  b.mean = {1.0, 0.0};
  b.cov = Tensor2(2, 2);
  b.cov.at(0, 0) = 4.0;
  b.cov.at(1, 1) = 4.0;

  SUBCASE("coincident gaussians give zero") {
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(frechet_distance(b, b) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("diagonal case: 1 + 2 (2 - 1)^2 = 3") {
    CHECK(frechet_distance(a, b) == doctest::Approx(3.0).epsilon(1e-10));
  }

  SUBCASE("symmetric in its arguments") {
    Rng rng(7);
    for (int rep = 0; rep < 5; ++rep) {
      GaussianFit x, y;
      x.mean = {rng.normal(), rng.normal()};
      y.mean = {rng.normal(), rng.normal()};
      // random SPD: A A^T + I
      auto spd = [&rng]() {
        Tensor2 m(2, 2);
        Tensor2 raw(2, 2);
        for (double& v : raw.data) v = rng.normal();
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t j = 0; j < 2; ++j) {
            double s = i == j ? 1.0 : 0.0;
            for (std::size_t k = 0; k < 2; ++k) s += raw.at(i, k) * raw.at(j, k);
            m.at(i, j) = s;
          }
        }
        return m;
      };
      x.cov = spd();
      y.cov = spd();
      const double xy = frechet_distance(x, y);
      const double yx = frechet_distance(y, x);
      CHECK(std::abs(xy - yx) < 1e-10);
      CHECK(xy >= 0.0);
    }
  }

  SUBCASE("clearly non-PSD covariance raises a numeric error") {
    GaussianFit bad;
    bad.mean = {0.0, 0.0};
    bad.cov = Tensor2(2, 2);
    bad.cov.at(0, 0) = 1.0;
    bad.cov.at(1, 1) = -0.5;
    CHECK_THROWS_AS(frechet_distance(bad, a), NumericError);
  }

  SUBCASE("dimension mismatch rejected") {
    GaussianFit c;
    c.mean = {0.0};
    c.cov = Tensor2(1, 1);
    c.cov.at(0, 0) = 1.0;
    CHECK_THROWS_AS(frechet_distance(a, c), InputError);
  }
}

TEST_CASE("generation report") {
  // real: two classes at (+/-3, 0); pseudo for class 0 near the true class,
  // pseudo for class 1 deliberately drawn from class 0's distribution
  Rng rng(11);
  const std::size_t n = 200;
  Tensor2 real(2 * n, 2);
  std::vector<std::size_t> real_labels;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const std::size_t cls = i < n ? 0 : 1;
    const double cx = cls == 0 ? 3.0 : -3.0;
    real.at(i, 0) = cx + 0.4 * rng.normal();
    real.at(i, 1) = 0.4 * rng.normal();
    real_labels.push_back(cls);
  }
  Tensor2 pseudo(2 * n, 2);
  std::vector<std::size_t> pseudo_labels;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const std::size_t cls = i < n ? 0 : 1;
    pseudo.at(i, 0) = 3.0 + 0.4 * rng.normal();  // both blobs near class 0
    pseudo.at(i, 1) = 0.4 * rng.normal();
    pseudo_labels.push_back(cls);
  }
  auto classify = [](std::span<const double> x) -> std::size_t {
    return x[0] >= 0.0 ? 0 : 1;
  };
  const GenerationReport rep = generation_report(real, real_labels, pseudo, pseudo_labels, 2, classify);
  REQUIRE(rep.per_class.size() == 2);
  CHECK(*rep.per_class[0].fd < 0.1);      // right class: tiny FD
  CHECK(*rep.per_class[1].fd > 10.0);     // wrong class: huge FD
  CHECK(*rep.per_class[0].agreement == doctest::Approx(1.0));
  CHECK(*rep.per_class[1].agreement == doctest::Approx(0.0));
  CHECK(rep.pooled_fd.has_value());

  // undersampled class is reported absent
  Tensor2 tiny(1, 2);
  const GenerationReport rep2 =
      generation_report(real, real_labels, tiny, {0}, 2, classify);
  CHECK_FALSE(rep2.per_class[0].fd.has_value());
  CHECK(rep2.per_class[0].agreement.has_value());
  CHECK_FALSE(rep2.per_class[1].agreement.has_value());
}
