#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mlp.hpp"
#include "tensor.hpp"

namespace dpt {

// Versioned JSON checkpoints. Float arrays are stored as packed base-16
// strings of the raw IEEE-754 bits (16 hex chars per double), which makes
// round trips bit-exact by construction.

std::string double_to_hex(double x);
double double_from_hex(std::string_view s);

nlohmann::json doubles_to_json(std::span<const double> xs);
Vec doubles_from_json(const nlohmann::json& j);

nlohmann::json tensor_to_json(const Tensor2& t);
Tensor2 tensor_from_json(const nlohmann::json& j);

nlohmann::json mlp_to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

nlohmann::json embedding_to_json(const EmbeddingTable& e);
EmbeddingTable embedding_from_json(const nlohmann::json& j);

// File wrapper: {"format": "dpt-checkpoint", "version": 1, "kind": ..., "payload": ...}
void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const nlohmann::json& payload);
nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::string& kind);

}  // namespace dpt
