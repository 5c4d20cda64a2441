#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "diffusion.hpp"
#include "probe.hpp"
#include "ssl.hpp"

namespace dpt {

// Fixed substream tags off the master seed. Stage-level commands and the
// full pipeline driver derive identical streams from these, which is what
// makes manual stage composition byte-identical to one pipeline run.
namespace seed_tag {
constexpr std::uint64_t kTrainData = 1;
constexpr std::uint64_t kSplit = 2;
constexpr std::uint64_t kValData = 3;
constexpr std::uint64_t kEncoder = 4;
constexpr std::uint64_t kDiffusion = 5;
constexpr std::uint64_t kSampling = 6;
// refinement round r (1-based) uses kRefineBase + 2r and kRefineBase + 2r + 1
constexpr std::uint64_t kRefineBase = 16;
}  // namespace seed_tag

struct DiffusionModelConfig {
  std::size_t timesteps = 100;
  double beta_start = 1e-3;  // T=1000 convention rescaled to T=100
  double beta_end = 0.2;
  std::vector<std::size_t> hidden = {96, 96};
  std::size_t time_dim = 16;
  std::size_t class_dim = 8;
  Activation activation = Activation::kTanh;
  DiffusionTrainConfig train;
};

struct PipelineConfig {
  std::size_t labels_per_class = 2;
  std::size_t pseudo_per_class = 128;  // K
  std::size_t refine_rounds = 0;
  bool refine_finetune = false;  // default retrains the generator from scratch
  SslConfig ssl;
  ProbeConfig probe;
  DiffusionModelConfig diffusion;
  GuidanceConfig guidance;  // null_class is set to C at use sites
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Stage functions (pure given config + seed)
// ---------------------------------------------------------------------------

struct Stage1Result {
  SslState encoder;
  std::vector<double> encoder_losses;
  LinearProbe probe;
  std::vector<DataRecord> s1;  // every real item with its predicted label
};

// Trains the encoder on all coordinates (labels unused), fits the probe on
// the revealed labels only, then labels every item (including the labeled
// ones) with the probe.
Stage1Result stage1_train_and_label(const SemiDataset& semi, const PipelineConfig& cfg);

struct Stage2Result {
  ConditionalDenoiser model;
  std::vector<double> losses;
  std::vector<DataRecord> s2;  // exactly K rows per class, provenance "pseudo"
  std::vector<std::string> warnings;
};

// Trains the conditional generator on the pseudo-labeled set and samples K
// items per class under a uniform class prior. Seed tags select the train
// and sampling substreams so refinement rounds can shift them.
Stage2Result stage2_train_and_sample(const std::vector<DataRecord>& s1,
                                     std::size_t num_classes, std::size_t dim,
                                     const PipelineConfig& cfg,
                                     std::uint64_t train_tag, std::uint64_t sample_tag,
                                     const ConditionalDenoiser* warm_start = nullptr);

// Fresh probe on frozen-encoder features of the revealed labeled items
// (ground-truth labels) plus the generated set (generation labels).
// With an empty generated set this reduces bitwise to the stage-1 probe.
LinearProbe stage3_retrain(const SslState& encoder, const SemiDataset& semi,
                           const std::vector<DataRecord>& s2, const PipelineConfig& cfg);

// One refinement round: relabel everything with `probe`, retrain the
// generator on the refined labels, regenerate, retrain the probe.
struct RefineResult {
  std::vector<DataRecord> s1;
  Stage2Result stage2;
  LinearProbe probe;
};

RefineResult refine_round(const SslState& encoder, const SemiDataset& semi,
                          const LinearProbe& probe, const PipelineConfig& cfg,
                          std::size_t round, const ConditionalDenoiser* prev_model);

// Predicted labels for every item from frozen-encoder features.
std::vector<DataRecord> relabel_all(const SslState& encoder, const SemiDataset& semi,
                                    const LinearProbe& probe);

// ---------------------------------------------------------------------------
// Model serialization
// ---------------------------------------------------------------------------

nlohmann::json ssl_state_to_json(const SslState& state);
SslState ssl_state_from_json(const nlohmann::json& j);

nlohmann::json probe_to_json(const LinearProbe& probe);
LinearProbe probe_from_json(const nlohmann::json& j);

nlohmann::json denoiser_to_json(const ConditionalDenoiser& model);
ConditionalDenoiser denoiser_from_json(const nlohmann::json& j);

// FNV-1a, used for run naming and the frozen-encoder manifest check.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace dpt
