// dpt command-line tool. Parses flags, forwards everything to the shared
// library's C API, prints the JSON status block to stdout, and exits with
// the dpt_status code (0 ok, 2 missing artifact, 3 config error, 4 numeric
// failure, 1 internal).

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpt/dpt.h"

namespace {

struct CommonArgs {
  std::string config;
  std::string out_root;
  std::string run_dir;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonArgs& common) {
  cmd->add_option("--config", common.config, "run-config JSON file")->required();
  cmd->add_option("--seed", common.seed, "override the config master seed")
      ->each([&common](const std::string&) { common.has_seed = true; });
  cmd->add_option("--out-root", common.out_root,
                  "output root (flag > DPT_OUT_ROOT env > config out_root)");
  cmd->add_option("--run-dir", common.run_dir,
                  "write into this directory instead of <out-root>/<config-hash>-s<seed>");
}

nlohmann::json to_args(const CommonArgs& common) {
  nlohmann::json args{{"config", common.config}};
  if (common.has_seed) args["seed"] = common.seed;
  if (!common.out_root.empty()) args["out_root"] = common.out_root;
  if (!common.run_dir.empty()) args["run_dir"] = common.run_dir;
  return args;
}

int run(const char* command, const nlohmann::json& args) {
  struct SessionDeleter {
    void operator()(dpt_session* s) const { dpt_session_free(s); }
  };
  std::unique_ptr<dpt_session, SessionDeleter> session(dpt_session_new());
  if (!session) {
    std::fprintf(stderr, "failed to create session\n");
    return DPT_ERR_INTERNAL;
  }
  char* status_json = nullptr;
  const dpt_status rc = dpt_run(session.get(), command, args.dump().c_str(), &status_json);
  if (rc == DPT_OK) {
    std::printf("%s\n", status_json ? status_json : "{}");
  } else {
    const nlohmann::json err{{"ok", false},
                             {"command", command},
                             {"error_category", rc == DPT_ERR_MISSING_ARTIFACT ? "missing_artifact"
                                                : rc == DPT_ERR_CONFIG        ? "config"
                                                : rc == DPT_ERR_NUMERIC       ? "numeric"
                                                                              : "internal"},
                             {"error", dpt_last_error(session.get())}};
    std::printf("%s\n", err.dump(1).c_str());
  }
  dpt_free(status_json);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dual pseudo training at desk scale: a prototype self-supervised classifier and a\n"
      "class-conditional diffusion model that improve each other through pseudo labels\n"
      "and pseudo samples.\n\n"
      "Seed discipline: every stage derives its own substream from the master seed with\n"
      "fixed tags (train-data 1, split 2, val-data 3, encoder 4, diffusion 5, sampling 6,\n"
      "refinement round r: 16+2r and 16+2r+1), so stage commands composed by hand write\n"
      "byte-identical artifacts to one run-pipeline call."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dpt_version()));

  CommonArgs common;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the mixture dataset and the split");
  add_common(gen, common);

  CLI::App* trainc =
      app.add_subcommand("train-classifier", "stage 1: encoder on all data, probe on labels");
  add_common(trainc, common);

  CLI::App* plabel =
      app.add_subcommand("pseudo-label", "stage 1 output: predicted labels for every item");
  add_common(plabel, common);

  CLI::App* traind =
      app.add_subcommand("train-diffusion", "stage 2: conditional generator on pseudo labels");
  add_common(traind, common);

  CLI::App* sample = app.add_subcommand("sample", "draw samples from the trained generator");
  add_common(sample, common);
  bool s2_mode = false;
  long long sample_class = -1;
  std::size_t sample_n = 0;
  std::string sample_out;
  sample->add_flag("--s2", s2_mode, "write the per-class stage-2 artifact (K per class)");
  sample->add_option("--class", sample_class, "class to sample");
  sample->add_option("--n", sample_n, "number of samples");
  sample->add_option("--out", sample_out, "output CSV (class mode)");

  CLI::App* retrain =
      app.add_subcommand("retrain-probe", "stage 3: fresh probe on labels plus generated data");
  add_common(retrain, common);

  CLI::App* refine =
      app.add_subcommand("refine", "optional stage 4: refine labels, retrain generator and probe");
  add_common(refine, common);

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "accuracies, per-class P/R, deltas, generation report");
  add_common(evaluate, common);

  CLI::App* runp = app.add_subcommand("run-pipeline", "all stages in order, with a manifest");
  add_common(runp, common);
  std::vector<std::size_t> k_grid;
  runp->add_option("--k-grid", k_grid,
                   "comma-separated per-class sample counts; retrains the probe for each, "
                   "reusing the stage-1/2 artifacts")
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  nlohmann::json args = to_args(common);
  if (sample->parsed()) {
    if (s2_mode) args["s2"] = true;
    if (sample_class >= 0) args["class"] = sample_class;
    if (sample_n > 0) args["n"] = sample_n;
    if (!sample_out.empty()) args["out"] = sample_out;
  }
  if (runp->parsed() && !k_grid.empty()) args["k_grid"] = k_grid;

  const std::string name = app.get_subcommands().front()->get_name();
  return run(name.c_str(), args);
}
