#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "tensor.hpp"

namespace dpt {

// Rows are true classes, columns are predicted classes.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // C x C, row-major

  std::size_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * num_classes + pred];
  }
  std::size_t row_sum(std::size_t truth) const;
  std::size_t col_sum(std::size_t pred) const;
  std::size_t total() const;
};

ConfusionMatrix confusion(const std::vector<std::size_t>& truth,
                          const std::vector<std::size_t>& pred, std::size_t num_classes);

// Per-class counts and ratios. Ratios whose denominator is zero are reported
// as absent, never as 0.
struct ClassStats {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::optional<double> precision;  // tp / (tp + fp)
  std::optional<double> recall;     // tp / (tp + fn)
};

std::vector<ClassStats> per_class_pr(const ConfusionMatrix& cm);

double accuracy(const ConfusionMatrix& cm);

// Stage-to-stage change of one ratio for one class; absent when either
// endpoint was absent.
struct DeltaEntry {
  std::size_t cls = 0;
  std::optional<double> delta;
};

// Per-class changes, each metric independently sorted descending (defined
// deltas first, ties by class index, absent entries last by class index).
struct PrDeltaReport {
  std::vector<DeltaEntry> precision;  // sorted
  std::vector<DeltaEntry> recall;     // sorted
};

PrDeltaReport pr_delta(const std::vector<ClassStats>& before,
                       const std::vector<ClassStats>& after);

// Moment-matched Gaussian: sample mean, unbiased covariance, symmetry
// enforced by (S + S^T) / 2.
struct GaussianFit {
  Vec mean;
  Tensor2 cov;
  std::size_t count = 0;
};

// Requires at least dim + 1 samples (rows of `samples`).
GaussianFit fit_gaussian(const Tensor2& samples);

// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), matrix square roots via
// symmetric eigendecomposition; eigenvalues in [-1e-10, 0) are clamped to 0,
// more negative ones raise NumericError.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// Class-conditional generation diagnostics against real data.
struct GenerationClassReport {
  std::size_t cls = 0;
  std::size_t real_count = 0;
  std::size_t pseudo_count = 0;
  std::optional<double> fd;         // absent when either side is undersampled
  std::optional<double> agreement;  // fraction of pseudo samples classified as cls
};

struct GenerationReport {
  std::vector<GenerationClassReport> per_class;
  std::optional<double> pooled_fd;
};

// real/pseudo are rows with their class labels; `classify` is typically the
// mixture's analytic Bayes rule (or a trained probe).
GenerationReport generation_report(const Tensor2& real, const std::vector<std::size_t>& real_labels,
                                   const Tensor2& pseudo,
                                   const std::vector<std::size_t>& pseudo_labels,
                                   std::size_t num_classes,
                                   const std::function<std::size_t(std::span<const double>)>& classify);

}  // namespace dpt
