#include "pipeline.hpp"

#include <algorithm>
#include <string>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "schedule.hpp"

namespace dpt {

namespace {

std::vector<Vec> all_coordinates(const SemiDataset& semi) {
  std::vector<Vec> xs;
  xs.reserve(semi.items.size());
  for (const SemiItem& item : semi.items) xs.push_back(item.x);
  return xs;
}

// Features of the revealed labeled items, in labeled_idx order, plus their
// ground-truth labels. Shared by stage 1 and stage 3 so the two probes see
// bit-identical inputs.
std::pair<Tensor2, std::vector<std::size_t>> labeled_features(const SslState& encoder,
                                                              const SemiDataset& semi) {
  std::vector<Vec> xs;
  std::vector<std::size_t> labels;
  xs.reserve(semi.labeled_idx.size());
  for (std::size_t idx : semi.labeled_idx) {
    const SemiItem& item = semi.items[idx];
    if (!item.label) throw InputError("labeled item without a label");
    xs.push_back(item.x);
    labels.push_back(*item.label);
  }
  return {extract_features(encoder, xs), std::move(labels)};
}

GuidanceConfig guidance_for(const PipelineConfig& cfg, std::size_t num_classes) {
  GuidanceConfig g = cfg.guidance;
  g.null_class = num_classes;
  return g;
}

}  // namespace

Stage1Result stage1_train_and_label(const SemiDataset& semi, const PipelineConfig& cfg) {
  if (semi.items.empty()) throw InputError("stage1: empty dataset");
  std::vector<std::size_t> per_class(semi.num_classes, 0);
  for (std::size_t idx : semi.labeled_idx) {
    if (!semi.items[idx].label) throw InputError("stage1: labeled item without a label");
    per_class[*semi.items[idx].label] += 1;
  }
  for (std::size_t y = 0; y < semi.num_classes; ++y) {
    if (per_class[y] == 0) {
      throw ConfigError("stage1: class " + std::to_string(y) + " has no labeled item");
    }
  }
  if (cfg.ssl.prototypes < semi.num_classes) {
    throw ConfigError("stage1: prototype count must be at least the class count");
  }

  Stage1Result out;
  Rng enc_rng(Rng::derive(cfg.seed, seed_tag::kEncoder));
  auto [encoder, losses] = train_encoder(all_coordinates(semi), semi.dim, cfg.ssl, enc_rng);
  out.encoder = std::move(encoder);
  out.encoder_losses = std::move(losses);

  auto [feats, labels] = labeled_features(out.encoder, semi);
  out.probe = train_probe(feats, labels, semi.num_classes, cfg.probe);
  out.s1 = relabel_all(out.encoder, semi, out.probe);
  return out;
}

std::vector<DataRecord> relabel_all(const SslState& encoder, const SemiDataset& semi,
                                    const LinearProbe& probe) {
  const Tensor2 feats = extract_features(encoder, all_coordinates(semi));
  const Prediction pred = predict_probe(probe, feats);
  std::vector<DataRecord> s1;
  s1.reserve(semi.items.size());
  for (std::size_t i = 0; i < semi.items.size(); ++i) {
    s1.push_back({semi.items[i].id, static_cast<std::int64_t>(pred.labels[i]), "real",
                  semi.items[i].x});
  }
  return s1;
}

Stage2Result stage2_train_and_sample(const std::vector<DataRecord>& s1,
                                     std::size_t num_classes, std::size_t dim,
                                     const PipelineConfig& cfg,
                                     std::uint64_t train_tag, std::uint64_t sample_tag,
                                     const ConditionalDenoiser* warm_start) {
  if (s1.empty()) throw InputError("stage2: empty pseudo-labeled set");
  Stage2Result out;

  std::vector<TrainItem> items;
  items.reserve(s1.size());
  std::vector<std::size_t> class_counts(num_classes, 0);
  for (const DataRecord& r : s1) {
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= num_classes) {
      throw InputError("stage2: pseudo label out of range");
    }
    class_counts[static_cast<std::size_t>(r.label)] += 1;
    items.push_back({r.x, static_cast<std::size_t>(r.label)});
  }
  for (std::size_t y = 0; y < num_classes; ++y) {
    if (class_counts[y] == 0) {
      out.warnings.push_back("class " + std::to_string(y) +
                             " absent from the pseudo-labeled set; sampling it anyway");
    }
  }

  const DiffusionSchedule sched =
      make_linear_schedule(cfg.diffusion.timesteps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
  const GuidanceConfig guidance = guidance_for(cfg, num_classes);

  Rng train_rng(Rng::derive(cfg.seed, train_tag));
  if (warm_start) {
    out.model = *warm_start;
  } else {
    out.model = make_denoiser(dim, num_classes, cfg.diffusion.class_dim, cfg.diffusion.time_dim,
                              cfg.diffusion.hidden, cfg.diffusion.activation, train_rng);
  }
  out.losses = train_denoiser(out.model, items, sched, guidance, cfg.diffusion.train, train_rng);

  const std::size_t K = cfg.pseudo_per_class;
  const std::uint64_t sample_seed = Rng::derive(cfg.seed, sample_tag);
  for (std::size_t y = 0; K > 0 && y < num_classes; ++y) {
    Rng class_rng(Rng::derive(sample_seed, y));
    const Tensor2 samples = sample_class(out.model, y, sched, guidance, class_rng, K);
    for (std::size_t i = 0; i < K; ++i) {
      const auto row = samples.row(i);
      out.s2.push_back({static_cast<std::int64_t>(y * K + i), static_cast<std::int64_t>(y),
                        "pseudo", Vec(row.begin(), row.end())});
    }
  }
  return out;
}

LinearProbe stage3_retrain(const SslState& encoder, const SemiDataset& semi,
                           const std::vector<DataRecord>& s2, const PipelineConfig& cfg) {
  auto [labeled_feats, labels] = labeled_features(encoder, semi);
  std::vector<Vec> pseudo_xs;
  pseudo_xs.reserve(s2.size());
  for (const DataRecord& r : s2) {
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= semi.num_classes) {
      throw InputError("stage3: generated label out of range");
    }
    pseudo_xs.push_back(r.x);
  }
  const Tensor2 pseudo_feats = extract_features(encoder, pseudo_xs);

  Tensor2 feats(labeled_feats.rows + pseudo_feats.rows, labeled_feats.cols);
  std::copy(labeled_feats.data.begin(), labeled_feats.data.end(), feats.data.begin());
  std::copy(pseudo_feats.data.begin(), pseudo_feats.data.end(),
            feats.data.begin() + static_cast<std::ptrdiff_t>(labeled_feats.data.size()));
  std::vector<std::size_t> all_labels = labels;
  for (const DataRecord& r : s2) all_labels.push_back(static_cast<std::size_t>(r.label));

  return train_probe(feats, all_labels, semi.num_classes, cfg.probe);
}

RefineResult refine_round(const SslState& encoder, const SemiDataset& semi,
                          const LinearProbe& probe, const PipelineConfig& cfg,
                          std::size_t round, const ConditionalDenoiser* prev_model) {
  RefineResult out;
  out.s1 = relabel_all(encoder, semi, probe);
  const std::uint64_t train_tag = seed_tag::kRefineBase + 2 * round;
  const std::uint64_t sample_tag = seed_tag::kRefineBase + 2 * round + 1;
  out.stage2 = stage2_train_and_sample(out.s1, semi.num_classes, semi.dim, cfg, train_tag,
                                       sample_tag, cfg.refine_finetune ? prev_model : nullptr);
  out.probe = stage3_retrain(encoder, semi, out.stage2.s2, cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

nlohmann::json ssl_state_to_json(const SslState& state) {
  return nlohmann::json{{"anchor", mlp_to_json(state.anchor)},
                        {"target", mlp_to_json(state.target)},
                        {"prototypes", tensor_to_json(state.prototypes)}};
}

SslState ssl_state_from_json(const nlohmann::json& j) {
  SslState state;
  state.anchor = mlp_from_json(j.at("anchor"));
  state.target = mlp_from_json(j.at("target"));
  state.prototypes = tensor_from_json(j.at("prototypes"));
  return state;
}

nlohmann::json probe_to_json(const LinearProbe& probe) {
  return nlohmann::json{{"weight", tensor_to_json(probe.weight)},
                        {"bias", doubles_to_json(probe.bias)},
                        {"l2", probe.l2}};
}

LinearProbe probe_from_json(const nlohmann::json& j) {
  LinearProbe probe;
  probe.weight = tensor_from_json(j.at("weight"));
  probe.bias = doubles_from_json(j.at("bias"));
  probe.l2 = j.at("l2").get<double>();
  return probe;
}

nlohmann::json denoiser_to_json(const ConditionalDenoiser& model) {
  return nlohmann::json{{"trunk", mlp_to_json(model.trunk)},
                        {"classes", embedding_to_json(model.classes)},
                        {"time_dim", model.time_dim},
                        {"data_dim", model.data_dim}};
}

ConditionalDenoiser denoiser_from_json(const nlohmann::json& j) {
  ConditionalDenoiser model;
  model.trunk = mlp_from_json(j.at("trunk"));
  model.classes = embedding_from_json(j.at("classes"));
  model.time_dim = j.at("time_dim").get<std::size_t>();
  model.data_dim = j.at("data_dim").get<std::size_t>();
  return model;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace dpt
