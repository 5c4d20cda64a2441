#include "checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "errors.hpp"

namespace dpt {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw ParseError(std::string("invalid hex digit '") + c + "'");
}

}  // namespace

std::string double_to_hex(double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  std::string s(16, '0');
  for (int i = 0; i < 16; ++i) {
    s[15 - i] = kHexDigits[(bits >> (4 * i)) & 0xF];
  }
  return s;
}

double double_from_hex(std::string_view s) {
  if (s.size() != 16) throw ParseError("hex double must be 16 characters");
  std::uint64_t bits = 0;
  for (char c : s) bits = (bits << 4) | static_cast<std::uint64_t>(hex_value(c));
  return std::bit_cast<double>(bits);
}

nlohmann::json doubles_to_json(std::span<const double> xs) {
  std::string packed;
  packed.reserve(xs.size() * 16);
  for (double x : xs) packed += double_to_hex(x);
  return nlohmann::json{{"n", xs.size()}, {"hex", std::move(packed)}};
}

Vec doubles_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("n") || !j.contains("hex")) {
    throw ParseError("malformed float array block");
  }
  const std::size_t n = j.at("n").get<std::size_t>();
  const std::string& packed = j.at("hex").get_ref<const std::string&>();
  if (packed.size() != n * 16) throw ParseError("float array hex length mismatch");
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = double_from_hex(std::string_view(packed).substr(i * 16, 16));
  }
  return out;
}

nlohmann::json tensor_to_json(const Tensor2& t) {
  return nlohmann::json{{"rows", t.rows}, {"cols", t.cols}, {"data", doubles_to_json(t.data)}};
}

Tensor2 tensor_from_json(const nlohmann::json& j) {
  Tensor2 t;
  t.rows = j.at("rows").get<std::size_t>();
  t.cols = j.at("cols").get<std::size_t>();
  t.data = doubles_from_json(j.at("data"));
  if (t.data.size() != t.rows * t.cols) throw ParseError("tensor shape/data mismatch");
  return t;
}

nlohmann::json mlp_to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"weight", tensor_to_json(l.weight)}, {"bias", doubles_to_json(l.bias)}});
  }
  nlohmann::json acts = nlohmann::json::array();
  for (Activation a : p.activations) {
    acts.push_back(a == Activation::kTanh ? "tanh" : "smooth_relu");
  }
  return nlohmann::json{{"layers", layers}, {"activations", acts}};
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  for (const auto& lj : j.at("layers")) {
    MlpLayer l;
    l.weight = tensor_from_json(lj.at("weight"));
    l.bias = doubles_from_json(lj.at("bias"));
    if (l.bias.size() != l.weight.rows) throw ParseError("layer bias/weight mismatch");
    p.layers.push_back(std::move(l));
  }
  for (const auto& aj : j.at("activations")) {
    const std::string name = aj.get<std::string>();
    if (name == "tanh") {
      p.activations.push_back(Activation::kTanh);
    } else if (name == "smooth_relu") {
      p.activations.push_back(Activation::kSmoothRelu);
    } else {
      throw ParseError("unknown activation '" + name + "'");
    }
  }
  if (p.layers.empty() || p.activations.size() != p.layers.size() - 1) {
    throw ParseError("mlp layer/activation count mismatch");
  }
  return p;
}

nlohmann::json embedding_to_json(const EmbeddingTable& e) {
  return nlohmann::json{{"num_entries", e.num_entries}, {"dim", e.dim},
                        {"rows", tensor_to_json(e.rows)}};
}

EmbeddingTable embedding_from_json(const nlohmann::json& j) {
  EmbeddingTable e;
  e.num_entries = j.at("num_entries").get<std::size_t>();
  e.dim = j.at("dim").get<std::size_t>();
  e.rows = tensor_from_json(j.at("rows"));
  if (e.rows.rows != e.num_entries || e.rows.cols != e.dim) {
    throw ParseError("embedding shape mismatch");
  }
  return e;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const nlohmann::json& payload) {
  nlohmann::json doc{{"format", "dpt-checkpoint"}, {"version", 1}, {"kind", kind},
                     {"payload", payload}};
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << doc.dump(1) << "\n";
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::string& kind) {
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError("checkpoint not found: " + path.string());
  }
  std::ifstream in(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "dpt-checkpoint") {
    throw ParseError("checkpoint '" + path.string() + "': missing format marker");
  }
  if (doc.value("version", 0) != 1) {
    throw ParseError("checkpoint '" + path.string() + "': unsupported version");
  }
  if (doc.value("kind", "") != kind) {
    throw ConfigError("checkpoint '" + path.string() + "' has kind '" +
                      doc.value("kind", "") + "', expected '" + kind + "'");
  }
  return doc.at("payload");
}

}  // namespace dpt
