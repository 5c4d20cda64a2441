#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <optional>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "runconfig.hpp"
#include "schedule.hpp"

namespace dpt {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run directory layout
// ---------------------------------------------------------------------------

struct RunPaths {
  fs::path dir;

  fs::path config_echo() const { return dir / "config.json"; }
  fs::path train_full() const { return dir / "train_full.csv"; }  // truth; evaluation only
  fs::path train_semi() const { return dir / "train_semi.csv"; }
  fs::path val() const { return dir / "val.csv"; }
  fs::path encoder() const { return dir / "encoder.json"; }
  fs::path probe1() const { return dir / "probe_stage1.json"; }
  fs::path s1(std::size_t round = 0) const {
    return round == 0 ? dir / "s1.csv" : dir / ("s1_round" + std::to_string(round) + ".csv");
  }
  fs::path denoiser(std::size_t round = 0) const {
    return round == 0 ? dir / "denoiser.json"
                      : dir / ("denoiser_round" + std::to_string(round) + ".json");
  }
  fs::path s2(std::size_t round = 0) const {
    return round == 0 ? dir / "s2.csv" : dir / ("s2_round" + std::to_string(round) + ".csv");
  }
  fs::path probe3(std::size_t round = 0) const {
    return round == 0 ? dir / "probe_stage3.json"
                      : dir / ("probe_round" + std::to_string(round) + ".json");
  }
  fs::path probe_for_k(std::size_t k) const {
    return dir / ("probe_k" + std::to_string(k) + ".json");
  }
  fs::path metrics() const { return dir / "metrics.json"; }
  fs::path manifest() const { return dir / "manifest.json"; }
  fs::path timings() const { return dir / "timings.json"; }
};

struct CommandContext {
  RunConfig cfg;
  RunPaths paths;
};

std::string json_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ConfigError(std::string("missing required string argument '") + key + "'");
  }
  return j.at(key).get<std::string>();
}

CommandContext make_context(const nlohmann::json& args) {
  CommandContext ctx;
  ctx.cfg = load_run_config(json_string(args, "config"));
  if (args.contains("seed")) ctx.cfg.pipeline.seed = args.at("seed").get<std::uint64_t>();
  std::string out_root = ctx.cfg.out_root;
  if (const char* env = std::getenv("DPT_OUT_ROOT")) out_root = env;
  if (args.contains("out_root")) out_root = args.at("out_root").get<std::string>();
  if (args.contains("run_dir")) {
    ctx.paths.dir = args.at("run_dir").get<std::string>();
  } else {
    ctx.paths.dir = fs::path(out_root) / run_dir_name(ctx.cfg);
  }
  fs::create_directories(ctx.paths.dir);
  return ctx;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << j.dump(1) << "\n";
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("artifact not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

std::string rel(const RunPaths& paths, const fs::path& p) {
  return fs::relative(p, paths.dir).string();
}

// ---------------------------------------------------------------------------
// Artifact adapters
// ---------------------------------------------------------------------------

SemiDataset load_semi(const CommandContext& ctx) {
  const auto records = load_records_csv(ctx.paths.train_semi());
  SemiDataset semi;
  semi.num_classes = ctx.cfg.data.classes;
  if (records.empty()) throw ParseError(ctx.paths.train_semi().string() + ": no rows");
  semi.dim = records.front().x.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DataRecord& r = records[i];
    SemiItem item;
    item.id = r.id;
    item.x = r.x;
    if (r.label >= 0) {
      if (static_cast<std::size_t>(r.label) >= semi.num_classes) {
        throw ParseError(ctx.paths.train_semi().string() + ": label out of range");
      }
      item.label = static_cast<std::size_t>(r.label);
      semi.labeled_idx.push_back(i);
    } else {
      semi.unlabeled_idx.push_back(i);
    }
    semi.items.push_back(std::move(item));
  }
  return semi;
}

std::vector<std::size_t> load_truth_labels(const fs::path& path) {
  std::vector<std::size_t> labels;
  for (const DataRecord& r : load_records_csv(path)) {
    if (r.label < 0) throw ParseError(path.string() + ": truth file has unlabeled rows");
    labels.push_back(static_cast<std::size_t>(r.label));
  }
  return labels;
}

SslState load_encoder(const RunPaths& paths) {
  return ssl_state_from_json(load_checkpoint(paths.encoder(), "encoder"));
}

// ---------------------------------------------------------------------------
// Stage commands
// ---------------------------------------------------------------------------

nlohmann::json cmd_gen_data(const CommandContext& ctx) {
  const MixtureData train = generate_mixture(train_mixture_spec(ctx.cfg));
  const MixtureData val = generate_mixture(val_mixture_spec(ctx.cfg));
  SplitSpec split;
  split.labels_per_class = ctx.cfg.pipeline.labels_per_class;
  split.seed = Rng::derive(ctx.cfg.pipeline.seed, seed_tag::kSplit);
  const SemiSplit semi = split_semi(train.data, split);

  write_json(ctx.paths.config_echo(), run_config_to_json(ctx.cfg));
  save_records_csv(ctx.paths.train_full(), dataset_to_records(train.data));
  save_records_csv(ctx.paths.train_semi(), semi_to_records(semi.semi));
  save_records_csv(ctx.paths.val(), dataset_to_records(val.data));

  return nlohmann::json{
      {"items", train.data.xs.size()},
      {"labeled", semi.semi.labeled_idx.size()},
      {"val_items", val.data.xs.size()},
      {"artifacts", {rel(ctx.paths, ctx.paths.config_echo()), rel(ctx.paths, ctx.paths.train_full()),
                     rel(ctx.paths, ctx.paths.train_semi()), rel(ctx.paths, ctx.paths.val())}}};
}

nlohmann::json cmd_train_classifier(const CommandContext& ctx) {
  const SemiDataset semi = load_semi(ctx);
  const Stage1Result r = stage1_train_and_label(semi, ctx.cfg.pipeline);
  save_checkpoint(ctx.paths.encoder(), "encoder", ssl_state_to_json(r.encoder));
  save_checkpoint(ctx.paths.probe1(), "probe", probe_to_json(r.probe));
  return nlohmann::json{
      {"encoder_final_loss", r.encoder_losses.empty() ? 0.0 : r.encoder_losses.back()},
      {"artifacts",
       {rel(ctx.paths, ctx.paths.encoder()), rel(ctx.paths, ctx.paths.probe1())}}};
}

nlohmann::json cmd_pseudo_label(const CommandContext& ctx) {
  const SemiDataset semi = load_semi(ctx);
  const SslState encoder = load_encoder(ctx.paths);
  const LinearProbe probe = probe_from_json(load_checkpoint(ctx.paths.probe1(), "probe"));
  const auto s1 = relabel_all(encoder, semi, probe);
  save_records_csv(ctx.paths.s1(), s1);
  return nlohmann::json{{"rows", s1.size()},
                        {"artifacts", {rel(ctx.paths, ctx.paths.s1())}}};
}

// Checkpoints are self-describing: the trained weights plus the schedule and
// guidance blocks they were trained under (the config stays authoritative
// when loading).
nlohmann::json denoiser_payload(const ConditionalDenoiser& model, const RunConfig& cfg) {
  nlohmann::json payload = denoiser_to_json(model);
  payload["schedule"] = {{"timesteps", cfg.pipeline.diffusion.timesteps},
                         {"beta_start", cfg.pipeline.diffusion.beta_start},
                         {"beta_end", cfg.pipeline.diffusion.beta_end}};
  payload["guidance"] = {
      {"omega", cfg.pipeline.guidance.omega},
      {"train_drop_prob", cfg.pipeline.guidance.train_drop_prob},
      {"noise_mode", cfg.pipeline.guidance.noise_mode == NoiseMode::kSigma ? "sigma" : "sigma_sq"},
      {"null_class", model.num_classes()}};
  return payload;
}

nlohmann::json cmd_train_diffusion(const CommandContext& ctx) {
  const auto s1 = load_records_csv(ctx.paths.s1());
  if (s1.empty()) throw ParseError(ctx.paths.s1().string() + ": no rows");
  PipelineConfig pcfg = ctx.cfg.pipeline;
  pcfg.pseudo_per_class = 0;  // this command only trains
  const Stage2Result r = stage2_train_and_sample(s1, ctx.cfg.data.classes, s1.front().x.size(),
                                                 pcfg, seed_tag::kDiffusion, seed_tag::kSampling);
  save_checkpoint(ctx.paths.denoiser(), "denoiser", denoiser_payload(r.model, ctx.cfg));
  return nlohmann::json{{"final_loss", r.losses.empty() ? 0.0 : r.losses.back()},
                        {"warnings", r.warnings},
                        {"artifacts", {rel(ctx.paths, ctx.paths.denoiser())}}};
}

// Generates the stage-2 artifact (exactly K rows per class) when "s2" is
// set; otherwise writes n samples of one class in the simple
// class,x_1..x_d layout to "out".
nlohmann::json cmd_sample(const CommandContext& ctx, const nlohmann::json& args) {
  const ConditionalDenoiser model =
      denoiser_from_json(load_checkpoint(ctx.paths.denoiser(), "denoiser"));
  const DiffusionSchedule sched =
      make_linear_schedule(ctx.cfg.pipeline.diffusion.timesteps,
                           ctx.cfg.pipeline.diffusion.beta_start,
                           ctx.cfg.pipeline.diffusion.beta_end);
  GuidanceConfig guidance = ctx.cfg.pipeline.guidance;
  guidance.null_class = model.num_classes();

  if (args.value("s2", false)) {
    const std::size_t K = ctx.cfg.pipeline.pseudo_per_class;
    const std::uint64_t sample_seed = Rng::derive(ctx.cfg.pipeline.seed, seed_tag::kSampling);
    std::vector<DataRecord> s2;
    for (std::size_t y = 0; K > 0 && y < model.num_classes(); ++y) {
      Rng class_rng(Rng::derive(sample_seed, y));
      const Tensor2 samples = sample_class(model, y, sched, guidance, class_rng, K);
      for (std::size_t i = 0; i < K; ++i) {
        const auto row = samples.row(i);
        s2.push_back({static_cast<std::int64_t>(y * K + i), static_cast<std::int64_t>(y),
                      "pseudo", Vec(row.begin(), row.end())});
      }
    }
    save_records_csv(ctx.paths.s2(), s2);
    return nlohmann::json{{"rows", s2.size()},
                          {"artifacts", {rel(ctx.paths, ctx.paths.s2())}}};
  }

  if (!args.contains("class") || !args.contains("n")) {
    throw ConfigError("sample: need either \"s2\": true or \"class\" and \"n\"");
  }
  const std::size_t cls = args.at("class").get<std::size_t>();
  const std::size_t n = args.at("n").get<std::size_t>();
  if (cls >= model.num_classes()) throw ConfigError("sample: class out of range");
  const fs::path out_path =
      args.contains("out") ? fs::path(args.at("out").get<std::string>())
                           : ctx.paths.dir / ("samples_class" + std::to_string(cls) + ".csv");
  const std::uint64_t sample_seed = Rng::derive(ctx.cfg.pipeline.seed, seed_tag::kSampling);
  Rng class_rng(Rng::derive(sample_seed, cls));
  const Tensor2 samples = sample_class(model, cls, sched, guidance, class_rng, n);
  std::ofstream out(out_path);
  if (!out) throw Error("cannot open '" + out_path.string() + "' for writing");
  out << "class";
  for (std::size_t j = 1; j <= model.data_dim; ++j) out << ",x_" << j;
  out << "\n";
  for (std::size_t i = 0; i < samples.rows; ++i) {
    out << cls;
    for (std::size_t j = 0; j < samples.cols; ++j) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", samples.at(i, j));
      out << "," << buf;
    }
    out << "\n";
  }
  return nlohmann::json{{"rows", samples.rows}, {"artifacts", {out_path.string()}}};
}

nlohmann::json cmd_retrain_probe(const CommandContext& ctx) {
  const SemiDataset semi = load_semi(ctx);
  const SslState encoder = load_encoder(ctx.paths);
  const auto s2 = load_records_csv(ctx.paths.s2());
  const std::uint64_t encoder_hash_before = file_hash(ctx.paths.encoder());
  const LinearProbe probe = stage3_retrain(encoder, semi, s2, ctx.cfg.pipeline);
  save_checkpoint(ctx.paths.probe3(), "probe", probe_to_json(probe));
  const std::uint64_t encoder_hash_after = file_hash(ctx.paths.encoder());
  return nlohmann::json{
      {"train_rows", semi.labeled_idx.size() + s2.size()},
      {"encoder_frozen", encoder_hash_before == encoder_hash_after},
      {"artifacts", {rel(ctx.paths, ctx.paths.probe3())}}};
}

nlohmann::json cmd_refine(const CommandContext& ctx) {
  const std::size_t rounds = ctx.cfg.pipeline.refine_rounds;
  nlohmann::json artifacts = nlohmann::json::array();
  if (rounds == 0) {
    return nlohmann::json{{"rounds", 0}, {"artifacts", artifacts}};
  }
  const SemiDataset semi = load_semi(ctx);
  const SslState encoder = load_encoder(ctx.paths);
  LinearProbe probe = probe_from_json(load_checkpoint(ctx.paths.probe3(), "probe"));
  ConditionalDenoiser model =
      denoiser_from_json(load_checkpoint(ctx.paths.denoiser(), "denoiser"));
  nlohmann::json warnings = nlohmann::json::array();
  for (std::size_t r = 1; r <= rounds; ++r) {
    RefineResult res = refine_round(encoder, semi, probe, ctx.cfg.pipeline, r, &model);
    save_records_csv(ctx.paths.s1(r), res.s1);
    save_checkpoint(ctx.paths.denoiser(r), "denoiser", denoiser_payload(res.stage2.model, ctx.cfg));
    save_records_csv(ctx.paths.s2(r), res.stage2.s2);
    save_checkpoint(ctx.paths.probe3(r), "probe", probe_to_json(res.probe));
    for (const auto& w : res.stage2.warnings) warnings.push_back(w);
    for (const auto& p : {ctx.paths.s1(r), ctx.paths.denoiser(r), ctx.paths.s2(r), ctx.paths.probe3(r)}) {
      artifacts.push_back(rel(ctx.paths, p));
    }
    probe = std::move(res.probe);
    model = std::move(res.stage2.model);
  }
  return nlohmann::json{{"rounds", rounds}, {"warnings", warnings}, {"artifacts", artifacts}};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

nlohmann::json class_stats_to_json(const std::vector<ClassStats>& stats) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t y = 0; y < stats.size(); ++y) {
    nlohmann::json row{{"class", y}, {"tp", stats[y].tp}, {"fp", stats[y].fp}, {"fn", stats[y].fn}};
    if (stats[y].precision) row["precision"] = *stats[y].precision;
    if (stats[y].recall) row["recall"] = *stats[y].recall;
    rows.push_back(row);
  }
  return rows;
}

void write_per_class_csv(const fs::path& path,
                         const std::map<std::string, const std::vector<ClassStats>*>& sections) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "stage,split,class,tp,fp,fn,precision,recall\n";
  for (const auto& [key, stats] : sections) {
    const auto sep = key.find('/');
    for (std::size_t y = 0; y < stats->size(); ++y) {
      const ClassStats& s = (*stats)[y];
      out << key.substr(0, sep) << "," << key.substr(sep + 1) << "," << y << "," << s.tp << ","
          << s.fp << "," << s.fn << ",";
      char buf[40];
      if (s.precision) {
        std::snprintf(buf, sizeof(buf), "%.17g", *s.precision);
        out << buf;
      } else {
        out << "absent";
      }
      out << ",";
      if (s.recall) {
        std::snprintf(buf, sizeof(buf), "%.17g", *s.recall);
        out << buf;
      } else {
        out << "absent";
      }
      out << "\n";
    }
  }
}

void write_delta_csv(const fs::path& path, const std::vector<DeltaEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "class,delta\n";
  for (const DeltaEntry& e : entries) {
    out << e.cls << ",";
    if (e.delta) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", *e.delta);
      out << buf;
    } else {
      out << "absent";
    }
    out << "\n";
  }
}

struct ProbeEval {
  double accuracy = 0.0;
  ConfusionMatrix cm;
  std::vector<ClassStats> stats;
};

ProbeEval evaluate_probe(const SslState& encoder, const LinearProbe& probe,
                         const std::vector<Vec>& xs, const std::vector<std::size_t>& truth,
                         std::size_t num_classes) {
  const Tensor2 feats = extract_features(encoder, xs);
  const Prediction pred = predict_probe(probe, feats);
  ProbeEval ev;
  ev.cm = confusion(truth, pred.labels, num_classes);
  ev.stats = per_class_pr(ev.cm);
  ev.accuracy = accuracy(ev.cm);
  return ev;
}

bool pr_ranges_ok(const std::vector<ClassStats>& stats) {
  for (const ClassStats& s : stats) {
    if (s.precision && (*s.precision < 0.0 || *s.precision > 1.0)) return false;
    if (s.recall && (*s.recall < 0.0 || *s.recall > 1.0)) return false;
  }
  return true;
}

nlohmann::json cmd_evaluate(const CommandContext& ctx) {
  const SemiDataset semi = load_semi(ctx);
  const std::vector<std::size_t> train_truth = load_truth_labels(ctx.paths.train_full());
  const auto val_records = load_records_csv(ctx.paths.val());
  const SslState encoder = load_encoder(ctx.paths);
  const LinearProbe probe1 = probe_from_json(load_checkpoint(ctx.paths.probe1(), "probe"));
  const LinearProbe probe3 = probe_from_json(load_checkpoint(ctx.paths.probe3(), "probe"));
  const auto s1 = load_records_csv(ctx.paths.s1());
  const auto s2 = load_records_csv(ctx.paths.s2());
  const std::size_t C = ctx.cfg.data.classes;

  std::vector<Vec> train_xs;
  for (const SemiItem& item : semi.items) train_xs.push_back(item.x);
  std::vector<Vec> val_xs;
  std::vector<std::size_t> val_truth;
  for (const DataRecord& r : val_records) {
    val_xs.push_back(r.x);
    val_truth.push_back(static_cast<std::size_t>(r.label));
  }

  const ProbeEval s1_train = evaluate_probe(encoder, probe1, train_xs, train_truth, C);
  const ProbeEval s1_val = evaluate_probe(encoder, probe1, val_xs, val_truth, C);
  const ProbeEval s3_train = evaluate_probe(encoder, probe3, train_xs, train_truth, C);
  const ProbeEval s3_val = evaluate_probe(encoder, probe3, val_xs, val_truth, C);

  const PrDeltaReport delta_train = pr_delta(s1_train.stats, s3_train.stats);
  const PrDeltaReport delta_val = pr_delta(s1_val.stats, s3_val.stats);
  write_delta_csv(ctx.paths.dir / "delta_recall_train.csv", delta_train.recall);
  write_delta_csv(ctx.paths.dir / "delta_precision_train.csv", delta_train.precision);
  write_delta_csv(ctx.paths.dir / "delta_recall_val.csv", delta_val.recall);
  write_delta_csv(ctx.paths.dir / "delta_precision_val.csv", delta_val.precision);
  write_per_class_csv(ctx.paths.dir / "per_class.csv",
                      {{"stage1/train", &s1_train.stats},
                       {"stage1/val", &s1_val.stats},
                       {"stage3/train", &s3_train.stats},
                       {"stage3/val", &s3_val.stats}});

  // generation diagnostics against the mixture's analytic posterior
  const BayesClassifier bayes = generate_mixture(train_mixture_spec(ctx.cfg)).bayes;
  Tensor2 real(train_xs.size(), semi.dim);
  for (std::size_t i = 0; i < train_xs.size(); ++i) {
    std::copy(train_xs[i].begin(), train_xs[i].end(), real.row(i).begin());
  }
  Tensor2 pseudo(s2.size(), semi.dim);
  std::vector<std::size_t> pseudo_labels;
  for (std::size_t i = 0; i < s2.size(); ++i) {
    std::copy(s2[i].x.begin(), s2[i].x.end(), pseudo.row(i).begin());
    pseudo_labels.push_back(static_cast<std::size_t>(s2[i].label));
  }
  nlohmann::json gen_json = nlohmann::json::array();
  std::optional<double> pooled_fd;
  if (!s2.empty()) {
    const GenerationReport gen =
        generation_report(real, train_truth, pseudo, pseudo_labels, C,
                          [&bayes](std::span<const double> x) { return bayes.classify(x); });
    for (const auto& cr : gen.per_class) {
      nlohmann::json row{{"class", cr.cls},
                         {"real_count", cr.real_count},
                         {"pseudo_count", cr.pseudo_count}};
      if (cr.fd) row["fd"] = *cr.fd;
      if (cr.agreement) row["agreement"] = *cr.agreement;
      gen_json.push_back(row);
    }
    pooled_fd = gen.pooled_fd;
  }

  const std::size_t K = ctx.cfg.pipeline.pseudo_per_class;
  nlohmann::json checks{
      {"s1_size_ok", s1.size() == semi.items.size()},
      {"s2_size_ok", s2.size() == K * C},
      {"confusion_totals_ok",
       s1_train.cm.total() == semi.items.size() && s3_train.cm.total() == semi.items.size() &&
           s1_val.cm.total() == val_xs.size() && s3_val.cm.total() == val_xs.size()},
      {"pr_ranges_ok", pr_ranges_ok(s1_train.stats) && pr_ranges_ok(s3_train.stats) &&
                           pr_ranges_ok(s1_val.stats) && pr_ranges_ok(s3_val.stats)}};

  nlohmann::json metrics{
      {"stage1", {{"train_accuracy", s1_train.accuracy},
                  {"val_accuracy", s1_val.accuracy},
                  {"per_class_train", class_stats_to_json(s1_train.stats)},
                  {"per_class_val", class_stats_to_json(s1_val.stats)}}},
      {"stage3", {{"train_accuracy", s3_train.accuracy},
                  {"val_accuracy", s3_val.accuracy},
                  {"per_class_train", class_stats_to_json(s3_train.stats)},
                  {"per_class_val", class_stats_to_json(s3_val.stats)}}},
      {"generation", {{"per_class", gen_json}}},
      {"invariant_checks", checks}};
  if (pooled_fd) metrics["generation"]["pooled_fd"] = *pooled_fd;

  // refinement rounds, when present
  nlohmann::json rounds = nlohmann::json::array();
  for (std::size_t r = 1; fs::exists(ctx.paths.probe3(r)); ++r) {
    const LinearProbe pr = probe_from_json(load_checkpoint(ctx.paths.probe3(r), "probe"));
    const ProbeEval tr = evaluate_probe(encoder, pr, train_xs, train_truth, C);
    const ProbeEval va = evaluate_probe(encoder, pr, val_xs, val_truth, C);
    nlohmann::json entry{{"round", r},
                         {"train_accuracy", tr.accuracy},
                         {"val_accuracy", va.accuracy}};
    const auto s2r = load_records_csv(ctx.paths.s2(r));
    if (!s2r.empty()) {
      Tensor2 pseudo_r(s2r.size(), semi.dim);
      std::vector<std::size_t> labels_r;
      for (std::size_t i = 0; i < s2r.size(); ++i) {
        std::copy(s2r[i].x.begin(), s2r[i].x.end(), pseudo_r.row(i).begin());
        labels_r.push_back(static_cast<std::size_t>(s2r[i].label));
      }
      const GenerationReport gr =
          generation_report(real, train_truth, pseudo_r, labels_r, C,
                            [&bayes](std::span<const double> x) { return bayes.classify(x); });
      if (gr.pooled_fd) entry["pooled_fd"] = *gr.pooled_fd;
    }
    rounds.push_back(entry);
  }
  if (!rounds.empty()) metrics["refine_rounds"] = rounds;

  write_json(ctx.paths.metrics(), metrics);
  nlohmann::json status = metrics;
  status["artifacts"] = {rel(ctx.paths, ctx.paths.metrics()), "per_class.csv",
                         "delta_recall_train.csv", "delta_precision_train.csv",
                         "delta_recall_val.csv", "delta_precision_val.csv"};
  return status;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

nlohmann::json cmd_run_pipeline(const CommandContext& ctx, const nlohmann::json& args) {
  using clock = std::chrono::steady_clock;
  nlohmann::json timings;
  nlohmann::json artifacts = nlohmann::json::array();
  nlohmann::json warnings = nlohmann::json::array();
  std::string stage;

  auto timed = [&](const char* name, auto&& fn) -> nlohmann::json {
    stage = name;
    const auto start = clock::now();
    nlohmann::json status = fn();
    timings[name] = std::chrono::duration<double>(clock::now() - start).count();
    if (status.contains("artifacts")) {
      for (const auto& a : status.at("artifacts")) artifacts.push_back(a);
    }
    if (status.contains("warnings")) {
      for (const auto& w : status.at("warnings")) warnings.push_back(w);
    }
    return status;
  };

  try {
    timed("gen-data", [&] { return cmd_gen_data(ctx); });
    timed("train-classifier", [&] { return cmd_train_classifier(ctx); });
    timed("pseudo-label", [&] { return cmd_pseudo_label(ctx); });
    timed("train-diffusion", [&] { return cmd_train_diffusion(ctx); });
    timed("sample", [&] { return cmd_sample(ctx, nlohmann::json{{"s2", true}}); });
    const std::uint64_t encoder_hash_before = file_hash(ctx.paths.encoder());
    timed("retrain-probe", [&] { return cmd_retrain_probe(ctx); });
    if (ctx.cfg.pipeline.refine_rounds > 0) {
      timed("refine", [&] { return cmd_refine(ctx); });
    }
    const std::uint64_t encoder_hash_after = file_hash(ctx.paths.encoder());
    nlohmann::json metrics = timed("evaluate", [&] { return cmd_evaluate(ctx); });
    metrics.erase("artifacts");

    // K sweep reusing the stage-1/2 artifacts: one big sampling run, probes
    // on per-class prefixes (prefixes match what a direct run at that K
    // would generate).
    nlohmann::json k_grid_json = nlohmann::json::array();
    if (args.contains("k_grid")) {
      stage = "k-grid";
      const auto grid = args.at("k_grid").get<std::vector<std::size_t>>();
      std::size_t k_max = ctx.cfg.pipeline.pseudo_per_class;
      for (std::size_t k : grid) k_max = std::max(k_max, k);

      const SemiDataset semi = load_semi(ctx);
      const SslState encoder = load_encoder(ctx.paths);
      const ConditionalDenoiser model =
          denoiser_from_json(load_checkpoint(ctx.paths.denoiser(), "denoiser"));
      const DiffusionSchedule sched = make_linear_schedule(
          ctx.cfg.pipeline.diffusion.timesteps, ctx.cfg.pipeline.diffusion.beta_start,
          ctx.cfg.pipeline.diffusion.beta_end);
      GuidanceConfig guidance = ctx.cfg.pipeline.guidance;
      guidance.null_class = model.num_classes();
      const std::uint64_t sample_seed = Rng::derive(ctx.cfg.pipeline.seed, seed_tag::kSampling);
      std::vector<Tensor2> per_class;
      for (std::size_t y = 0; y < model.num_classes(); ++y) {
        Rng class_rng(Rng::derive(sample_seed, y));
        per_class.push_back(sample_class(model, y, sched, guidance, class_rng, k_max));
      }
      const std::vector<std::size_t> val_truth = load_truth_labels(ctx.paths.val());
      std::vector<Vec> val_xs;
      for (const DataRecord& r : load_records_csv(ctx.paths.val())) val_xs.push_back(r.x);

      for (std::size_t k : grid) {
        std::vector<DataRecord> s2k;
        for (std::size_t y = 0; y < model.num_classes(); ++y) {
          for (std::size_t i = 0; i < k; ++i) {
            const auto row = per_class[y].row(i);
            s2k.push_back({static_cast<std::int64_t>(y * k + i), static_cast<std::int64_t>(y),
                           "pseudo", Vec(row.begin(), row.end())});
          }
        }
        const LinearProbe pk = stage3_retrain(encoder, semi, s2k, ctx.cfg.pipeline);
        save_checkpoint(ctx.paths.probe_for_k(k), "probe", probe_to_json(pk));
        artifacts.push_back(rel(ctx.paths, ctx.paths.probe_for_k(k)));
        const ProbeEval ev = evaluate_probe(encoder, pk, val_xs, val_truth, ctx.cfg.data.classes);
        k_grid_json.push_back({{"k", k}, {"val_accuracy", ev.accuracy}});
      }
    }

    nlohmann::json checks = metrics.at("invariant_checks");
    checks["encoder_frozen_ok"] = encoder_hash_before == encoder_hash_after;
    metrics["invariant_checks"] = checks;

    write_json(ctx.paths.timings(), timings);
    artifacts.push_back(rel(ctx.paths, ctx.paths.timings()));
    artifacts.push_back(rel(ctx.paths, ctx.paths.manifest()));

    nlohmann::json manifest{{"config", run_config_to_json(ctx.cfg)},
                            {"seed", ctx.cfg.pipeline.seed},
                            {"run_dir_name", ctx.paths.dir.filename().string()},
                            {"artifacts", artifacts},
                            {"warnings", warnings},
                            {"metrics", metrics}};
    if (!k_grid_json.empty()) manifest["k_grid"] = k_grid_json;
    write_json(ctx.paths.manifest(), manifest);

    nlohmann::json status = manifest;
    status["run_dir"] = ctx.paths.dir.string();
    return status;
  } catch (const Error& e) {
    const std::string msg = "pipeline stage '" + stage + "' failed: " + e.what() +
                            " (partial artifacts retained in " + ctx.paths.dir.string() + ")";
    if (dynamic_cast<const MissingArtifactError*>(&e)) throw MissingArtifactError(msg);
    if (dynamic_cast<const NumericError*>(&e)) throw NumericError(msg);
    if (dynamic_cast<const ParseError*>(&e)) throw ParseError(msg);
    if (dynamic_cast<const InputError*>(&e)) throw InputError(msg);
    if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
    throw Error(msg);
  }
}

}  // namespace

nlohmann::json run_command(const std::string& name, const nlohmann::json& args) {
  static const std::set<std::string> known{"gen-data",      "train-classifier", "pseudo-label",
                                           "train-diffusion", "sample",         "retrain-probe",
                                           "refine",          "evaluate",       "run-pipeline"};
  if (!known.count(name)) throw ConfigError("unknown command '" + name + "'");
  if (!args.is_object()) throw ConfigError("command arguments must be a JSON object");
  const CommandContext ctx = make_context(args);
  nlohmann::json status;
  if (name == "gen-data") {
    status = cmd_gen_data(ctx);
  } else if (name == "train-classifier") {
    status = cmd_train_classifier(ctx);
  } else if (name == "pseudo-label") {
    status = cmd_pseudo_label(ctx);
  } else if (name == "train-diffusion") {
    status = cmd_train_diffusion(ctx);
  } else if (name == "sample") {
    status = cmd_sample(ctx, args);
  } else if (name == "retrain-probe") {
    status = cmd_retrain_probe(ctx);
  } else if (name == "refine") {
    status = cmd_refine(ctx);
  } else if (name == "evaluate") {
    status = cmd_evaluate(ctx);
  } else if (name == "run-pipeline") {
    status = cmd_run_pipeline(ctx, args);
  } else {
    throw ConfigError("unknown command '" + name + "'");
  }
  status["command"] = name;
  status["ok"] = true;
  if (!status.contains("run_dir")) status["run_dir"] = ctx.paths.dir.string();
  return status;
}

}  // namespace dpt
