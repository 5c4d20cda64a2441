#include "runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "errors.hpp"

namespace dpt {

namespace {

void check_keys(const nlohmann::json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
    }
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Activation activation_from_string(const std::string& s, const std::string& where) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "smooth_relu") return Activation::kSmoothRelu;
  throw ConfigError(where + ": unknown activation '" + s + "'");
}

std::string activation_to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "smooth_relu";
}

void parse_data(const nlohmann::json& j, DataConfig& d) {
  check_keys(j, "data", {"classes", "radius", "var", "per_class", "val_per_class", "means", "covs"});
  read(j, "classes", d.classes);
  read(j, "radius", d.radius);
  read(j, "var", d.var);
  read(j, "per_class", d.per_class);
  read(j, "val_per_class", d.val_per_class);
  if (j.contains("means")) {
    d.means.clear();
    for (const auto& row : j.at("means")) d.means.push_back(row.get<Vec>());
  }
  if (j.contains("covs")) {
    d.covs.clear();
    for (const auto& mat : j.at("covs")) {
      const auto rows = mat.get<std::vector<Vec>>();
      Tensor2 cov(rows.size(), rows.empty() ? 0 : rows.front().size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cov.cols) throw ConfigError("data.covs: ragged matrix");
        for (std::size_t c = 0; c < cov.cols; ++c) cov.at(r, c) = rows[r][c];
      }
      d.covs.push_back(std::move(cov));
    }
  }
  if (d.classes < 2) throw ConfigError("data.classes must be >= 2");
  if (d.var <= 0.0) throw ConfigError("data.var must be positive");
  if (d.per_class == 0) throw ConfigError("data.per_class must be positive");
  if (!d.means.empty() && d.means.size() != d.classes) {
    throw ConfigError("data.means must list one mean per class");
  }
  if (!d.covs.empty() && d.covs.size() != d.classes) {
    throw ConfigError("data.covs must list one covariance per class");
  }
  if (!d.covs.empty() && d.means.empty()) {
    throw ConfigError("data.covs requires data.means");
  }
}

void parse_ssl(const nlohmann::json& j, SslConfig& s) {
  check_keys(j, "ssl",
             {"anchor_views", "mask_ratio", "noise_scale", "tau", "tau_target", "entropy_weight",
              "ema_decay", "prototypes", "hidden", "feature_dim", "activation", "epochs",
              "batch_size", "lr"});
  read(j, "anchor_views", s.anchor_views);
  read(j, "mask_ratio", s.mask_ratio);
  read(j, "noise_scale", s.noise_scale);
  read(j, "tau", s.tau);
  read(j, "tau_target", s.tau_target);
  read(j, "entropy_weight", s.entropy_weight);
  read(j, "ema_decay", s.ema_decay);
  read(j, "prototypes", s.prototypes);
  read(j, "hidden", s.hidden);
  read(j, "feature_dim", s.feature_dim);
  if (j.contains("activation")) {
    s.activation = activation_from_string(j.at("activation").get<std::string>(), "ssl.activation");
  }
  read(j, "epochs", s.epochs);
  read(j, "batch_size", s.batch_size);
  read(j, "lr", s.lr);
  if (s.anchor_views == 0) throw ConfigError("ssl.anchor_views must be >= 1");
  if (s.tau <= 0.0 || s.tau_target <= 0.0) throw ConfigError("ssl temperatures must be positive");
  if (s.entropy_weight < 0.0) throw ConfigError("ssl.entropy_weight must be >= 0");
  if (s.mask_ratio < 0.0 || s.mask_ratio >= 1.0) throw ConfigError("ssl.mask_ratio must be in [0, 1)");
  if (s.ema_decay < 0.0 || s.ema_decay > 1.0) throw ConfigError("ssl.ema_decay must be in [0, 1]");
  if (s.batch_size == 0) throw ConfigError("ssl.batch_size must be positive");
}

void parse_probe(const nlohmann::json& j, ProbeConfig& p) {
  check_keys(j, "probe", {"l2", "max_iters", "tol"});
  read(j, "l2", p.l2);
  read(j, "max_iters", p.max_iters);
  read(j, "tol", p.tol);
  if (p.l2 < 0.0) throw ConfigError("probe.l2 must be >= 0");
}

void parse_diffusion(const nlohmann::json& j, DiffusionModelConfig& d) {
  check_keys(j, "diffusion",
             {"timesteps", "beta_start", "beta_end", "hidden", "time_dim", "class_dim",
              "activation", "epochs", "batch_size", "lr"});
  read(j, "timesteps", d.timesteps);
  read(j, "beta_start", d.beta_start);
  read(j, "beta_end", d.beta_end);
  read(j, "hidden", d.hidden);
  read(j, "time_dim", d.time_dim);
  read(j, "class_dim", d.class_dim);
  if (j.contains("activation")) {
    d.activation =
        activation_from_string(j.at("activation").get<std::string>(), "diffusion.activation");
  }
  read(j, "epochs", d.train.epochs);
  read(j, "batch_size", d.train.batch_size);
  read(j, "lr", d.train.lr);
  if (d.timesteps < 2) throw ConfigError("diffusion.timesteps must be >= 2");
  if (!(d.beta_start > 0.0) || !(d.beta_start <= d.beta_end) || !(d.beta_end < 1.0)) {
    throw ConfigError("diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  if (d.time_dim % 2 != 0) throw ConfigError("diffusion.time_dim must be even");
  if (d.train.batch_size == 0) throw ConfigError("diffusion.batch_size must be positive");
}

void parse_guidance(const nlohmann::json& j, GuidanceConfig& g) {
  check_keys(j, "guidance", {"omega", "train_drop_prob", "noise_mode"});
  read(j, "omega", g.omega);
  read(j, "train_drop_prob", g.train_drop_prob);
  if (j.contains("noise_mode")) {
    const std::string mode = j.at("noise_mode").get<std::string>();
    if (mode == "sigma") {
      g.noise_mode = NoiseMode::kSigma;
    } else if (mode == "sigma_sq") {
      g.noise_mode = NoiseMode::kSigmaSq;
    } else {
      throw ConfigError("guidance.noise_mode must be 'sigma' or 'sigma_sq'");
    }
  }
  if (g.omega < -1.0) throw ConfigError("guidance.omega must be >= -1");
  if (g.train_drop_prob < 0.0 || g.train_drop_prob >= 1.0) {
    throw ConfigError("guidance.train_drop_prob must be in [0, 1)");
  }
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig run_config_from_json(const nlohmann::json& j) {
  check_keys(j, "<root>",
             {"data", "split", "ssl", "probe", "diffusion", "guidance", "pipeline", "seed",
              "out_root"});
  RunConfig cfg;
  if (j.contains("data")) parse_data(j.at("data"), cfg.data);
  if (j.contains("split")) {
    check_keys(j.at("split"), "split", {"labels_per_class"});
    read(j.at("split"), "labels_per_class", cfg.pipeline.labels_per_class);
  }
  if (j.contains("ssl")) parse_ssl(j.at("ssl"), cfg.pipeline.ssl);
  if (j.contains("probe")) parse_probe(j.at("probe"), cfg.pipeline.probe);
  if (j.contains("diffusion")) parse_diffusion(j.at("diffusion"), cfg.pipeline.diffusion);
  if (j.contains("guidance")) parse_guidance(j.at("guidance"), cfg.pipeline.guidance);
  if (j.contains("pipeline")) {
    check_keys(j.at("pipeline"), "pipeline",
               {"pseudo_per_class", "refine_rounds", "refine_finetune"});
    read(j.at("pipeline"), "pseudo_per_class", cfg.pipeline.pseudo_per_class);
    read(j.at("pipeline"), "refine_rounds", cfg.pipeline.refine_rounds);
    read(j.at("pipeline"), "refine_finetune", cfg.pipeline.refine_finetune);
  }
  read(j, "seed", cfg.pipeline.seed);
  read(j, "out_root", cfg.out_root);

  if (cfg.pipeline.labels_per_class == 0) throw ConfigError("split.labels_per_class must be >= 1");
  if (cfg.pipeline.labels_per_class > cfg.data.per_class) {
    throw ConfigError("split.labels_per_class cannot exceed data.per_class");
  }
  if (cfg.pipeline.ssl.prototypes < cfg.data.classes) {
    throw ConfigError("ssl.prototypes must be >= data.classes");
  }
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json data{{"classes", cfg.data.classes},
                      {"radius", cfg.data.radius},
                      {"var", cfg.data.var},
                      {"per_class", cfg.data.per_class},
                      {"val_per_class", cfg.data.val_per_class}};
  if (!cfg.data.means.empty()) {
    nlohmann::json means = nlohmann::json::array();
    for (const auto& m : cfg.data.means) means.push_back(m);
    data["means"] = means;
  }
  if (!cfg.data.covs.empty()) {
    nlohmann::json covs = nlohmann::json::array();
    for (const auto& c : cfg.data.covs) {
      nlohmann::json mat = nlohmann::json::array();
      for (std::size_t r = 0; r < c.rows; ++r) {
        mat.push_back(Vec(c.row(r).begin(), c.row(r).end()));
      }
      covs.push_back(mat);
    }
    data["covs"] = covs;
  }
  const SslConfig& s = cfg.pipeline.ssl;
  const DiffusionModelConfig& d = cfg.pipeline.diffusion;
  const GuidanceConfig& g = cfg.pipeline.guidance;
  return nlohmann::json{
      {"data", data},
      {"split", {{"labels_per_class", cfg.pipeline.labels_per_class}}},
      {"ssl",
       {{"anchor_views", s.anchor_views},
        {"mask_ratio", s.mask_ratio},
        {"noise_scale", s.noise_scale},
        {"tau", s.tau},
        {"tau_target", s.tau_target},
        {"entropy_weight", s.entropy_weight},
        {"ema_decay", s.ema_decay},
        {"prototypes", s.prototypes},
        {"hidden", s.hidden},
        {"feature_dim", s.feature_dim},
        {"activation", activation_to_string(s.activation)},
        {"epochs", s.epochs},
        {"batch_size", s.batch_size},
        {"lr", s.lr}}},
      {"probe",
       {{"l2", cfg.pipeline.probe.l2},
        {"max_iters", cfg.pipeline.probe.max_iters},
        {"tol", cfg.pipeline.probe.tol}}},
      {"diffusion",
       {{"timesteps", d.timesteps},
        {"beta_start", d.beta_start},
        {"beta_end", d.beta_end},
        {"hidden", d.hidden},
        {"time_dim", d.time_dim},
        {"class_dim", d.class_dim},
        {"activation", activation_to_string(d.activation)},
        {"epochs", d.train.epochs},
        {"batch_size", d.train.batch_size},
        {"lr", d.train.lr}}},
      {"guidance",
       {{"omega", g.omega},
        {"train_drop_prob", g.train_drop_prob},
        {"noise_mode", g.noise_mode == NoiseMode::kSigma ? "sigma" : "sigma_sq"}}},
      {"pipeline",
       {{"pseudo_per_class", cfg.pipeline.pseudo_per_class},
        {"refine_rounds", cfg.pipeline.refine_rounds},
        {"refine_finetune", cfg.pipeline.refine_finetune}}},
      {"seed", cfg.pipeline.seed},
      {"out_root", cfg.out_root}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError("config not found: " + path.string());
  }
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

namespace {

MixtureSpec mixture_spec_for(const RunConfig& cfg, std::size_t per_class, std::uint64_t seed) {
  MixtureSpec spec;
  if (cfg.data.means.empty()) {
    spec = ring_mixture_spec(cfg.data.classes, cfg.data.radius, cfg.data.var, per_class, seed);
  } else {
    spec.num_classes = cfg.data.classes;
    spec.means = cfg.data.means;
    if (cfg.data.covs.empty()) {
      const std::size_t d = cfg.data.means.front().size();
      for (std::size_t y = 0; y < cfg.data.classes; ++y) {
        Tensor2 cov(d, d);
        for (std::size_t k = 0; k < d; ++k) cov.at(k, k) = cfg.data.var;
        spec.covs.push_back(std::move(cov));
      }
    } else {
      spec.covs = cfg.data.covs;
    }
  }
  spec.per_class = per_class;
  spec.seed = seed;
  return spec;
}

}  // namespace

MixtureSpec train_mixture_spec(const RunConfig& cfg) {
  return mixture_spec_for(cfg, cfg.data.per_class,
                          Rng::derive(cfg.pipeline.seed, seed_tag::kTrainData));
}

MixtureSpec val_mixture_spec(const RunConfig& cfg) {
  return mixture_spec_for(cfg, cfg.data.val_per_class,
                          Rng::derive(cfg.pipeline.seed, seed_tag::kValData));
}

std::string run_dir_name(const RunConfig& cfg) {
  RunConfig keyed = cfg;
  keyed.pipeline.seed = 0;
  keyed.out_root.clear();
  const std::uint64_t h = fnv1a(run_config_to_json(keyed).dump());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx-s%llu", static_cast<unsigned long long>(h),
                static_cast<unsigned long long>(cfg.pipeline.seed));
  return buf;
}

}  // namespace dpt
