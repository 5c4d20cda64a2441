#pragma once

#include <string>

#include <json.hpp>

namespace dpt {

// File-level command layer backing the C API and the CLI. Each command takes
// a JSON argument object and returns a JSON status block; failures are
// thrown as the dpt error types.
//
// Common args:
//   "config"  : path to a run-config JSON file (required)
//   "seed"    : overrides the config seed
//   "out_root": overrides the config output root (the DPT_OUT_ROOT
//               environment variable sits between config and this override)
//   "run_dir" : bypass the derived <out_root>/<config-hash>-s<seed> directory
//
// Commands: gen-data, train-classifier, pseudo-label, train-diffusion,
// sample, retrain-probe, refine, evaluate, run-pipeline.
nlohmann::json run_command(const std::string& name, const nlohmann::json& args);

}  // namespace dpt
