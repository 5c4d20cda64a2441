#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace dpt {

// Gaussian mixture with known ground truth, the desk-scale dataset.
struct MixtureSpec {
  std::size_t num_classes = 0;
  std::vector<Vec> means;       // one per class
  std::vector<Tensor2> covs;    // one per class, PSD
  std::size_t per_class = 0;
  std::uint64_t seed = 0;
};

// Benchmark layout: class means evenly spaced on a circle of the given
// radius in 2-D, isotropic covariance var * I.
MixtureSpec ring_mixture_spec(std::size_t num_classes, double radius, double var,
                              std::size_t per_class, std::uint64_t seed);

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<Vec> xs;                 // item id == index
  std::vector<std::size_t> labels;     // ground truth
};

// Closed-form posterior of the generating mixture; the oracle for
// evaluation-side metrics.
class BayesClassifier {
 public:
  BayesClassifier() = default;
  explicit BayesClassifier(const MixtureSpec& spec);

  std::size_t classify(std::span<const double> x) const;
  Vec posterior(std::span<const double> x) const;

 private:
  std::size_t num_classes_ = 0;
  std::vector<Vec> means_;
  std::vector<Tensor2> inv_covs_;
  Vec log_norms_;  // -0.5 * log det(2 pi Sigma) + log prior
};

struct MixtureData {
  Dataset data;
  BayesClassifier bayes;
};

// Exactly per_class items per class, class-major order, deterministic given
// the spec seed (per-class substreams). Throws ConfigError on a covariance
// that is not positive definite.
MixtureData generate_mixture(const MixtureSpec& spec);

struct SplitSpec {
  std::size_t labels_per_class = 1;
  std::uint64_t seed = 0;
};

struct SemiItem {
  std::int64_t id = 0;
  Vec x;
  std::optional<std::size_t> label;  // engaged only for revealed labels
};

// What training code may see: coordinates for everything, labels only for
// the revealed stratified subset. Ground truth for the hidden part lives in
// HiddenTruth, which only evaluation code should touch.
struct SemiDataset {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<SemiItem> items;            // id order
  std::vector<std::size_t> labeled_idx;   // indices into items, ascending
  std::vector<std::size_t> unlabeled_idx;
};

struct HiddenTruth {
  std::vector<std::size_t> labels;  // aligned with SemiDataset::items
};

struct SemiSplit {
  SemiDataset semi;
  HiddenTruth truth;
};

// Stratified: exactly labels_per_class revealed labels per class, chosen
// uniformly without replacement on a per-class substream of split.seed.
SemiSplit split_semi(const Dataset& data, const SplitSpec& split);

// Row schema shared by datasets, pseudo-labeled sets, and generated sets:
//   id,label,provenance,x_1..x_d      (label -1 marks an unlabeled row)
struct DataRecord {
  std::int64_t id = 0;
  std::int64_t label = -1;
  std::string provenance;  // "real" or "pseudo"
  Vec x;
};

// Full-precision decimal rendering; round trips are bit-exact for finite
// doubles. Malformed rows raise ParseError naming the line.
void save_records_csv(const std::filesystem::path& path, const std::vector<DataRecord>& records);
std::vector<DataRecord> load_records_csv(const std::filesystem::path& path);

std::vector<DataRecord> dataset_to_records(const Dataset& data);
std::vector<DataRecord> semi_to_records(const SemiDataset& semi);

}  // namespace dpt
