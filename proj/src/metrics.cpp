#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "errors.hpp"

namespace dpt {

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < num_classes; ++p) s += at(truth, p);
  return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < num_classes; ++t) s += at(t, pred);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (std::size_t v : counts) s += v;
  return s;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& truth,
                          const std::vector<std::size_t>& pred, std::size_t num_classes) {
  if (truth.size() != pred.size()) throw InputError("confusion: length mismatch");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || pred[i] >= num_classes) {
      throw InputError("confusion: label out of range at row " + std::to_string(i));
    }
    cm.counts[truth[i] * num_classes + pred[i]] += 1;
  }
  return cm;
}

std::vector<ClassStats> per_class_pr(const ConfusionMatrix& cm) {
  std::vector<ClassStats> stats(cm.num_classes);
  for (std::size_t y = 0; y < cm.num_classes; ++y) {
    ClassStats& s = stats[y];
    s.tp = cm.at(y, y);
    s.fp = cm.col_sum(y) - s.tp;
    s.fn = cm.row_sum(y) - s.tp;
    if (s.tp + s.fp > 0) {
      s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    }
    if (s.tp + s.fn > 0) {
      s.recall = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
    }
  }
  return stats;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t y = 0; y < cm.num_classes; ++y) correct += cm.at(y, y);
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

std::vector<DeltaEntry> sorted_deltas(std::vector<DeltaEntry> entries) {
  std::stable_sort(entries.begin(), entries.end(), [](const DeltaEntry& a, const DeltaEntry& b) {
    if (a.delta.has_value() != b.delta.has_value()) return a.delta.has_value();
    if (a.delta.has_value() && *a.delta != *b.delta) return *a.delta > *b.delta;
    return a.cls < b.cls;
  });
  return entries;
}

}  // namespace

PrDeltaReport pr_delta(const std::vector<ClassStats>& before,
                       const std::vector<ClassStats>& after) {
  if (before.size() != after.size()) throw InputError("pr_delta: class count mismatch");
  std::vector<DeltaEntry> dp(before.size()), dr(before.size());
  for (std::size_t y = 0; y < before.size(); ++y) {
    dp[y].cls = y;
    dr[y].cls = y;
    if (before[y].precision && after[y].precision) {
      dp[y].delta = *after[y].precision - *before[y].precision;
    }
    if (before[y].recall && after[y].recall) {
      dr[y].delta = *after[y].recall - *before[y].recall;
    }
  }
  return {sorted_deltas(std::move(dp)), sorted_deltas(std::move(dr))};
}

GaussianFit fit_gaussian(const Tensor2& samples) {
  const std::size_t n = samples.rows;
  const std::size_t d = samples.cols;
  if (n < d + 1) {
    throw InputError("fit_gaussian: need at least dim + 1 samples, got " + std::to_string(n));
  }
  GaussianFit fit;
  fit.count = n;
  fit.mean = Vec(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) fit.mean[j] += row[j];
  }
  for (double& v : fit.mean) v /= static_cast<double>(n);
  fit.cov = Tensor2(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = samples.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      const double da = row[a] - fit.mean[a];
      for (std::size_t b = 0; b < d; ++b) {
        fit.cov.at(a, b) += da * (row[b] - fit.mean[b]);
      }
    }
  }
  for (double& v : fit.cov.data) v /= static_cast<double>(n - 1);
  // enforce exact symmetry
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      const double s = 0.5 * (fit.cov.at(a, b) + fit.cov.at(b, a));
      fit.cov.at(a, b) = s;
      fit.cov.at(b, a) = s;
    }
  }
  return fit;
}

namespace {

constexpr double kEigenClamp = 1e-10;

Eigen::MatrixXd to_eigen(const Tensor2& t) {
  Eigen::MatrixXd m(t.rows, t.cols);
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t c = 0; c < t.cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.at(r, c);
  }
  return m;
}

// PSD square root with clamping; throws if an eigenvalue is more negative
// than the tolerance (scaled by the matrix magnitude).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericError(what + ": eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -kEigenClamp * scale) {
      throw NumericError(what + ": matrix is not PSD (eigenvalue " + std::to_string(ev(i)) + ")");
    }
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size()) throw InputError("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd s1 = to_eigen(a.cov);
  const Eigen::MatrixXd s2 = to_eigen(b.cov);
  const Eigen::MatrixXd root1 = psd_sqrt(s1, "frechet_distance: first covariance");
  Eigen::MatrixXd inner = root1 * s2 * root1;
  inner = 0.5 * (inner + inner.transpose().eval());
  const Eigen::MatrixXd cross = psd_sqrt(inner, "frechet_distance: product term");
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_sq += d * d;
  }
  const double value = mean_sq + s1.trace() + s2.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);
}

GenerationReport generation_report(const Tensor2& real, const std::vector<std::size_t>& real_labels,
                                   const Tensor2& pseudo,
                                   const std::vector<std::size_t>& pseudo_labels,
                                   std::size_t num_classes,
                                   const std::function<std::size_t(std::span<const double>)>& classify) {
  if (real.rows != real_labels.size() || pseudo.rows != pseudo_labels.size()) {
    throw InputError("generation_report: label count mismatch");
  }
  const std::size_t d = real.cols;
  GenerationReport report;

  auto collect = [d](const Tensor2& data, const std::vector<std::size_t>& labels,
                     std::size_t cls) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) rows.push_back(i);
    }
    Tensor2 out(rows.size(), d);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto src = data.row(rows[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  };

  for (std::size_t y = 0; y < num_classes; ++y) {
    GenerationClassReport cr;
    cr.cls = y;
    const Tensor2 real_y = collect(real, real_labels, y);
    const Tensor2 pseudo_y = collect(pseudo, pseudo_labels, y);
    cr.real_count = real_y.rows;
    cr.pseudo_count = pseudo_y.rows;
    if (real_y.rows >= d + 1 && pseudo_y.rows >= d + 1) {
      cr.fd = frechet_distance(fit_gaussian(real_y), fit_gaussian(pseudo_y));
    }
    if (pseudo_y.rows > 0 && classify) {
      std::size_t agree = 0;
      for (std::size_t i = 0; i < pseudo_y.rows; ++i) {
        if (classify(pseudo_y.row(i)) == y) ++agree;
      }
      cr.agreement = static_cast<double>(agree) / static_cast<double>(pseudo_y.rows);
    }
    report.per_class.push_back(cr);
  }
  if (real.rows >= d + 1 && pseudo.rows >= d + 1) {
    report.pooled_fd = frechet_distance(fit_gaussian(real), fit_gaussian(pseudo));
  }
  return report;
}

}  // namespace dpt
