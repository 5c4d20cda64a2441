#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "data.hpp"
#include "pipeline.hpp"

namespace dpt {

// Dataset block of a run configuration. Class means default to an evenly
// spaced ring; explicit means/covs override that layout.
struct DataConfig {
  std::size_t classes = 8;
  double radius = 4.0;
  double var = 0.3;
  std::size_t per_class = 500;
  std::size_t val_per_class = 200;
  std::vector<Vec> means;      // optional override, one per class
  std::vector<Tensor2> covs;   // optional override, one per class
};

struct RunConfig {
  DataConfig data;
  PipelineConfig pipeline;
  std::string out_root = "runs";
};

RunConfig default_run_config();

// Strict parse: unknown keys anywhere are a ConfigError, all invariants
// validated. Absent keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);

// Canonical echo including every default; stable key order.
nlohmann::json run_config_to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);

// Mixture specs for the training and held-out sets, seeded off the master.
MixtureSpec train_mixture_spec(const RunConfig& cfg);
MixtureSpec val_mixture_spec(const RunConfig& cfg);

// Run directory basename: hex hash of the seed-independent canonical config
// plus the seed, e.g. "a1b2c3d4e5f60708-s7".
std::string run_dir_name(const RunConfig& cfg);

}  // namespace dpt
