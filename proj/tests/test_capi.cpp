// Exercises the public C surface end to end: session lifecycle, command
// dispatch, error-code mapping, and the stage-composition determinism
// contract (manual stages == one pipeline run, byte for byte).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dpt/dpt.h"

namespace {

namespace fs = std::filesystem;

struct Session {
  dpt_session* s = dpt_session_new();
  ~Session() { dpt_session_free(s); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const nlohmann::json& overrides) {
  nlohmann::json cfg{{"data", {{"classes", 4}, {"per_class", 80}, {"val_per_class", 40}}},
                     {"split", {{"labels_per_class", 2}}},
                     {"ssl", {{"epochs", 4}, {"prototypes", 16}, {"batch_size", 64}}},
                     {"diffusion", {{"epochs", 4}, {"hidden", {32, 32}}}},
                     {"pipeline", {{"pseudo_per_class", 4}}},
                     {"seed", 3}};
  for (const auto& [k, v] : overrides.items()) cfg[k] = v;
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  out << cfg.dump(2);
  return path;
}

nlohmann::json run_ok(Session& session, const char* cmd, const nlohmann::json& args) {
  char* out = nullptr;
  const dpt_status rc = dpt_run(session.s, cmd, args.dump().c_str(), &out);
  INFO("command ", cmd, ": ", dpt_last_error(session.s));
  REQUIRE(rc == DPT_OK);
  REQUIRE(out != nullptr);
  const nlohmann::json status = nlohmann::json::parse(out);
  dpt_free(out);
  return status;
}

}  // namespace

TEST_CASE("session lifecycle and basic error mapping") {
  Session session;
  REQUIRE(session.s != nullptr);
  CHECK(std::string(dpt_last_error(session.s)).empty());
  CHECK(std::string(dpt_version()) == "1.0.0");

  SUBCASE("null command is a config error") {
    CHECK(dpt_run(session.s, nullptr, "{}", nullptr) == DPT_ERR_CONFIG);
  }

  SUBCASE("unknown command is a config error with a message") {
    CHECK(dpt_run(session.s, "frobnicate", "{\"config\":\"x\"}", nullptr) == DPT_ERR_CONFIG);
    CHECK(std::string(dpt_last_error(session.s)).find("frobnicate") != std::string::npos);
  }

  SUBCASE("invalid args json is a config error") {
    CHECK(dpt_run(session.s, "gen-data", "not json", nullptr) == DPT_ERR_CONFIG);
  }

  SUBCASE("missing config file maps to the missing-artifact code") {
    CHECK(dpt_run(session.s, "gen-data", "{\"config\":\"/nonexistent/cfg.json\"}", nullptr) ==
          DPT_ERR_MISSING_ARTIFACT);
  }

  SUBCASE("config validation failure maps to the config code") {
    const fs::path bad = fs::temp_directory_path() / "dpt_capi_bad.json";
    std::ofstream(bad) << "{\"ssl\": {\"tau\": -5}}";
    const nlohmann::json args{{"config", bad.string()}};
    CHECK(dpt_run(session.s, "gen-data", args.dump().c_str(), nullptr) == DPT_ERR_CONFIG);
    fs::remove(bad);
  }

  SUBCASE("stage command without its input artifact maps to missing-artifact") {
    const fs::path cfg = write_config("dpt_capi_miss.json", {});
    const fs::path dir = fs::temp_directory_path() / "dpt_capi_missing_run";
    fs::remove_all(dir);
    const nlohmann::json args{{"config", cfg.string()}, {"run_dir", dir.string()}};
    CHECK(dpt_run(session.s, "train-classifier", args.dump().c_str(), nullptr) ==
          DPT_ERR_MISSING_ARTIFACT);
    fs::remove_all(dir);
    fs::remove(cfg);
  }
}

TEST_CASE("manual stage composition is byte-identical to run-pipeline") {
  Session session;
  const fs::path cfg = write_config("dpt_capi_cfg.json", {});
  const fs::path dir_a = fs::temp_directory_path() / "dpt_capi_run_a";
  const fs::path dir_b = fs::temp_directory_path() / "dpt_capi_run_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  const nlohmann::json base_a{{"config", cfg.string()}, {"run_dir", dir_a.string()}};
  run_ok(session, "gen-data", base_a);
  run_ok(session, "train-classifier", base_a);
  run_ok(session, "pseudo-label", base_a);
  run_ok(session, "train-diffusion", base_a);
  nlohmann::json sample_args = base_a;
  sample_args["s2"] = true;
  run_ok(session, "sample", sample_args);
  run_ok(session, "retrain-probe", base_a);
  const nlohmann::json eval_status = run_ok(session, "evaluate", base_a);
  CHECK(eval_status.at("invariant_checks").at("s1_size_ok").get<bool>());
  CHECK(eval_status.at("invariant_checks").at("s2_size_ok").get<bool>());

  const nlohmann::json base_b{{"config", cfg.string()}, {"run_dir", dir_b.string()}};
  const nlohmann::json manifest = run_ok(session, "run-pipeline", base_b);
  CHECK(manifest.at("ok").get<bool>());

  for (const char* name : {"train_full.csv", "train_semi.csv", "val.csv", "encoder.json",
                           "probe_stage1.json", "s1.csv", "denoiser.json", "s2.csv",
                           "probe_stage3.json", "metrics.json"}) {
    INFO("artifact ", name);
    CHECK(slurp(dir_a / name) == slurp(dir_b / name));
  }

  // single-class sampling equals the matching block of the s2 artifact
  nlohmann::json cls_args = base_a;
  cls_args["class"] = 2;
  cls_args["n"] = 4;
  cls_args["out"] = (dir_a / "cls2.csv").string();
  run_ok(session, "sample", cls_args);
  std::ifstream s2_in(dir_a / "s2.csv");
  std::string line;
  std::vector<std::string> s2_lines;
  while (std::getline(s2_in, line)) s2_lines.push_back(line);
  std::ifstream cls_in(dir_a / "cls2.csv");
  std::vector<std::string> cls_lines;
  while (std::getline(cls_in, line)) cls_lines.push_back(line);
  REQUIRE(cls_lines.size() == 5);  // header + 4 rows
  for (std::size_t i = 0; i < 4; ++i) {
    // s2 row: id,label,provenance,x...; class row: class,x...
    const std::string& s2_row = s2_lines[1 + 2 * 4 + i];
    const std::string coords = s2_row.substr(s2_row.find("pseudo,") + 7);
    CHECK(cls_lines[1 + i] == "2," + coords);
  }

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  fs::remove(cfg);
}

TEST_CASE("refine with zero rounds is a no-op") {
  Session session;
  const fs::path cfg = write_config("dpt_capi_cfg_r0.json", {});
  const fs::path dir = fs::temp_directory_path() / "dpt_capi_refine0";
  fs::remove_all(dir);
  const nlohmann::json args{{"config", cfg.string()}, {"run_dir", dir.string()}};
  const nlohmann::json status = run_ok(session, "refine", args);
  CHECK(status.at("rounds").get<int>() == 0);
  CHECK(status.at("artifacts").empty());
  fs::remove_all(dir);
  fs::remove(cfg);
}

TEST_CASE("rerunning the pipeline reproduces the manifest byte for byte") {
  Session session;
  const fs::path cfg = write_config("dpt_capi_cfg2.json", {});
  const fs::path dir = fs::temp_directory_path() / "dpt_capi_run_c";
  fs::remove_all(dir);
  const nlohmann::json args{{"config", cfg.string()}, {"run_dir", dir.string()}};
  run_ok(session, "run-pipeline", args);
  const std::string manifest1 = slurp(dir / "manifest.json");
  const std::string metrics1 = slurp(dir / "metrics.json");
  run_ok(session, "run-pipeline", args);
  CHECK(slurp(dir / "manifest.json") == manifest1);
  CHECK(slurp(dir / "metrics.json") == metrics1);
  fs::remove_all(dir);
  fs::remove(cfg);
}

TEST_CASE("seed override changes artifacts, same seed reproduces them") {
  Session session;
  const fs::path cfg = write_config("dpt_capi_cfg3.json", {});
  const fs::path dir1 = fs::temp_directory_path() / "dpt_capi_s1";
  const fs::path dir2 = fs::temp_directory_path() / "dpt_capi_s2";
  const fs::path dir3 = fs::temp_directory_path() / "dpt_capi_s3";
  for (const auto& d : {dir1, dir2, dir3}) fs::remove_all(d);

  nlohmann::json a1{{"config", cfg.string()}, {"run_dir", dir1.string()}, {"seed", 11}};
  nlohmann::json a2{{"config", cfg.string()}, {"run_dir", dir2.string()}, {"seed", 12}};
  nlohmann::json a3{{"config", cfg.string()}, {"run_dir", dir3.string()}, {"seed", 11}};
  run_ok(session, "gen-data", a1);
  run_ok(session, "gen-data", a2);
  run_ok(session, "gen-data", a3);
  CHECK(slurp(dir1 / "train_full.csv") != slurp(dir2 / "train_full.csv"));
  CHECK(slurp(dir1 / "train_full.csv") == slurp(dir3 / "train_full.csv"));
  for (const auto& d : {dir1, dir2, dir3}) fs::remove_all(d);
  fs::remove(cfg);
}
