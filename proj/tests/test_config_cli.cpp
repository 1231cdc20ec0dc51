// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vqat/config/run_config.hpp"
#include "vqat/pipeline.hpp"

using namespace vqat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "vqat_cli_tests";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VQAT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

int run_cli_capture(const std::string& args, const fs::path& stderr_file) {
  const std::string cmd = std::string(VQAT_CLI_PATH) + " " + args + " >/dev/null 2>" +
                          stderr_file.string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

// Small synthetic run that trains in a couple of seconds.
json tiny_config(const fs::path& out_dir) {
  return json{
      {"seed", 11},
      {"model",
       {{"provider", "toy"}, {"embedding_dim", 8}, {"hidden_dim", 12}, {"frame_count", 4}}},
      {"loss", {{"mode", "fcl"}}},
      {"fgm",
       {{"enabled", true},
        {"epsilon", 0.02},
        {"learning_rate", 0.05},
        {"batch_size", 8},
        {"epochs", 6},
        {"optimizer", "adam"}}},
      {"dataset",
       {{"kind", "synthetic"},
        {"mos_min", 1.0},
        {"mos_max", 5.0},
        {"synthetic",
         {{"n_videos", 16}, {"n_test", 4}, {"total_frames", 6}, {"height", 8}, {"width", 8}}}}},
      {"output", {{"dir", out_dir.string()}}}};
}

}  // namespace

TEST_CASE("config parsing applies defaults and rejects unknown keys") {
  config::RunConfig cfg = config::parse_config(json::parse(R"({"seed": 3})"));
  REQUIRE(cfg.seed == 3);
  REQUIRE(cfg.model.frame_count == 8);
  REQUIRE(cfg.loss_mode == config::LossMode::fcl);
  REQUIRE(cfg.fgm.norm_scope == train::NormScope::per_tensor);

  REQUIRE_THROWS_WITH(config::parse_config(json::parse(R"({"sede": 3})")),
                      Catch::Matchers::ContainsSubstring("sede"));
  REQUIRE_THROWS_WITH(config::parse_config(json::parse(R"({"model": {"hidden": 3}})")),
                      Catch::Matchers::ContainsSubstring("model.hidden"));
  REQUIRE_THROWS_WITH(config::parse_config(json::parse(R"({"loss": {"mode": "mse"}})")),
                      Catch::Matchers::ContainsSubstring("mse"));
  REQUIRE_THROWS_WITH(
      config::parse_config(json::parse(R"({"dataset": {"kind": "manifest"}})")),
      Catch::Matchers::ContainsSubstring("manifest"));

  config::RunConfig scoped =
      config::parse_config(json::parse(R"({"fgm": {"norm_scope": "global"}})"));
  REQUIRE(scoped.fgm.norm_scope == train::NormScope::global);
  REQUIRE_THROWS_AS(config::parse_config(json::parse(R"({"fgm": {"norm_scope": "all"}})")),
                    std::invalid_argument);

  config::RunConfig fixed_sigma =
      config::parse_config(json::parse(R"({"loss": {"sigma": 12.5}})"));
  REQUIRE(fixed_sigma.sigma == 12.5);
  REQUIRE(config::resolved_json(fixed_sigma)["loss"]["sigma"] == 12.5);
  config::RunConfig auto_sigma = config::parse_config(json::parse(R"({"loss": {}})"));
  REQUIRE(config::resolved_json(auto_sigma)["loss"]["sigma"] == "auto");
}

TEST_CASE("config hash is stable and sensitive") {
  config::RunConfig a = config::parse_config(json::parse(R"({"seed": 3})"));
  config::RunConfig b = config::parse_config(json::parse(R"({"seed": 3})"));
  config::RunConfig c = config::parse_config(json::parse(R"({"seed": 4})"));
  REQUIRE(config::config_hash(config::resolved_json(a)) ==
          config::config_hash(config::resolved_json(b)));
  REQUIRE(config::config_hash(config::resolved_json(a)) !=
          config::config_hash(config::resolved_json(c)));
}

TEST_CASE("checkpoints round-trip through JSON") {
  fs::path dir = temp_dir() / "ckpt_roundtrip";
  config::RunConfig cfg = config::parse_config(tiny_config(dir));
  pipeline::TrainRun run = pipeline::run_training(cfg);

  fs::create_directories(dir);
  fs::path path = dir / "checkpoint.json";
  write_file(path, pipeline::checkpoint_to_json(run).dump());

  pipeline::Checkpoint ck = pipeline::load_checkpoint(path.string());
  REQUIRE(ck.config_hash == run.config_hash);
  REQUIRE(ck.sigma_hundred == run.sigma_hundred);
  REQUIRE(ck.head.w1.isApprox(run.head.w1, 0.0));
  REQUIRE(ck.head.b2.isApprox(run.head.b2, 0.0));

  // Evaluation of the same checkpoint twice is byte-identical.
  pipeline::EvalRun e1 = pipeline::run_evaluation(ck, "test");
  pipeline::EvalRun e2 = pipeline::run_evaluation(ck, "test");
  REQUIRE(e1.report.to_json().dump() == e2.report.to_json().dump());

  // Training reduced the loss on this toy problem.
  REQUIRE(run.result.final_loss < run.result.initial_loss);
}

TEST_CASE("cli: train, eval and metrics round trip") {
  fs::path dir = temp_dir() / "round";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path cfg_path = dir / "config.json";
  write_file(cfg_path, tiny_config(dir / "out").dump(2));

  REQUIRE(run_cli("train --config " + cfg_path.string()) == 0);
  REQUIRE(fs::exists(dir / "out" / "checkpoint.json"));
  REQUIRE(fs::exists(dir / "out" / "train_log.jsonl"));

  // First log line carries the resolved config and its hash.
  std::istringstream log(read_file(dir / "out" / "train_log.jsonl"));
  std::string first;
  std::getline(log, first);
  json header = json::parse(first);
  REQUIRE(header["event"] == "config");
  REQUIRE(header.contains("config_hash"));

  const std::string ckpt = (dir / "out" / "checkpoint.json").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --split test --output " +
                  (dir / "report.json").string()) == 0);
  json report = json::parse(read_file(dir / "report.json"));
  REQUIRE(report["n"] == 4);
  REQUIRE(report.contains("config_hash"));

  // metrics subcommand on a hand-made perfect prediction file.
  fs::path preds = dir / "preds.jsonl";
  write_file(preds,
             R"({"video_id":"a","score":1.0})" "\n"
             R"({"video_id":"b","score":2.0})" "\n"
             R"({"video_id":"c","score":3.0})" "\n");
  fs::path manifest = dir / "manifest.csv";
  write_file(manifest, "video_id,path,mos\na,p,10\nb,p,20\nc,p,30\n");
  REQUIRE(run_cli("metrics --predictions " + preds.string() + " --manifest " +
                  manifest.string() + " --output " + (dir / "mreport.json").string()) == 0);
  json mreport = json::parse(read_file(dir / "mreport.json"));
  REQUIRE(mreport["plcc"].get<double>() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(mreport["srocc"].get<double>() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(mreport["krocc"].get<double>() == Catch::Approx(1.0).margin(1e-12));

  // Reversed predictions flip every correlation.
  write_file(preds,
             R"({"video_id":"a","score":3.0})" "\n"
             R"({"video_id":"b","score":2.0})" "\n"
             R"({"video_id":"c","score":1.0})" "\n");
  REQUIRE(run_cli("metrics --predictions " + preds.string() + " --manifest " +
                  manifest.string() + " --output " + (dir / "mreport2.json").string()) == 0);
  json m2 = json::parse(read_file(dir / "mreport2.json"));
  REQUIRE(m2["plcc"].get<double>() == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("cli: eval splits, hash warnings and empty manifests") {
  fs::path dir = temp_dir() / "eval_paths";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path cfg_path = dir / "config.json";
  json cfg = tiny_config(dir / "out");
  write_file(cfg_path, cfg.dump());
  REQUIRE(run_cli("train --config " + cfg_path.string()) == 0);
  const std::string ckpt = (dir / "out" / "checkpoint.json").string();

  // Sanity on the training split: ranking must be learnable on toy data.
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --split train --output " +
                  (dir / "train_report.json").string()) == 0);
  json report = json::parse(read_file(dir / "train_report.json"));
  REQUIRE(report["srocc"].get<double>() > 0.0);

  // A config with a different seed trips the hash cross-check warning.
  cfg["seed"] = 999;
  write_file(dir / "other.json", cfg.dump());
  REQUIRE(run_cli_capture("eval --checkpoint " + ckpt + " --config " +
                              (dir / "other.json").string() + " --split test --output " +
                              (dir / "warn_report.json").string(),
                          dir / "stderr.txt") == 0);
  REQUIRE(read_file(dir / "stderr.txt").find("hash mismatch") != std::string::npos);

  // Empty manifest: header only, no rows.
  write_file(dir / "empty.csv", "video_id,path,mos\n");
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --manifest " + (dir / "empty.csv").string() +
                  " --mos-min 1 --mos-max 5") == 2);
}

TEST_CASE("cli: ablation modes and crop-enabled training run to completion") {
  fs::path dir = temp_dir() / "ablation";
  fs::remove_all(dir);
  fs::create_directories(dir);

  for (const std::string mode : {"mae", "bce"}) {
    json cfg = tiny_config(dir / ("out_" + mode));
    cfg["loss"]["mode"] = mode;
    cfg["fgm"]["enabled"] = false;  // plain single-gradient ablation row
    write_file(dir / (mode + ".json"), cfg.dump());
    REQUIRE(run_cli("train --config " + (dir / (mode + ".json")).string()) == 0);
    REQUIRE(fs::exists(dir / ("out_" + mode) / "checkpoint.json"));
  }

  json cfg = tiny_config(dir / "out_crop");
  cfg["crop"] = {{"enabled", true},
                 {"feature_dim", 6},
                 {"mlp_hidden", 8},
                 {"top_n", 2},
                 {"stride_divisor", 2},
                 {"scales", {0.75}}};
  write_file(dir / "crop.json", cfg.dump());
  REQUIRE(run_cli("train --config " + (dir / "crop.json").string()) == 0);
  REQUIRE(fs::exists(dir / "out_crop" / "checkpoint.json"));
}

TEST_CASE("cli: interval checkpoints are written when configured") {
  fs::path dir = temp_dir() / "interval";
  fs::remove_all(dir);
  fs::create_directories(dir);
  json cfg = tiny_config(dir / "out");
  cfg["output"]["checkpoint_interval"] = 2;
  write_file(dir / "cfg.json", cfg.dump());
  REQUIRE(run_cli("train --config " + (dir / "cfg.json").string()) == 0);
  REQUIRE(fs::exists(dir / "out" / "checkpoint_step2.json"));
  // Interim checkpoints load like final ones.
  pipeline::Checkpoint ck =
      pipeline::load_checkpoint((dir / "out" / "checkpoint_step2.json").string());
  REQUIRE(ck.head.w1.rows() == 8);
}

TEST_CASE("predicted scores follow the configured scale") {
  quality::DistributionHead head;
  head.w1 = Mat::Zero(4, 3);
  head.b1 = Mat::Zero(1, 3);
  head.w2 = Mat::Zero(3, 100);
  head.b2 = Mat::Zero(1, 100);
  pipeline::PreparedVideo v;
  v.features = Mat::Ones(2, 4);
  // Uniform distribution decodes to 0.495 on the unit scale.
  REQUIRE(pipeline::predict_score(v, head, quality::ScoreScale::unit) ==
          Catch::Approx(0.495).margin(1e-12));
  REQUIRE(pipeline::predict_score(v, head, quality::ScoreScale::hundred) ==
          Catch::Approx(49.5).margin(1e-10));
}

TEST_CASE("cli: usage errors exit with code 2") {
  fs::path dir = temp_dir() / "usage";
  fs::create_directories(dir);
  REQUIRE(run_cli("train --config /does/not/exist.json") == 2);

  write_file(dir / "bad.json", R"({"unknown_section": 1})");
  REQUIRE(run_cli("train --config " + (dir / "bad.json").string()) == 2);

  json cfg = tiny_config(dir / "out");
  cfg["dataset"] = {{"kind", "manifest"}, {"manifest", "/missing/manifest.csv"}};
  write_file(dir / "missing_manifest.json", cfg.dump());
  REQUIRE(run_cli("train --config " + (dir / "missing_manifest.json").string()) != 0);

  REQUIRE(run_cli("eval --checkpoint /nope.json") == 2);
  REQUIRE(run_cli("crop --input /nope.ppm") == 2);
  REQUIRE(run_cli("frobnicate") == 2);
  REQUIRE(run_cli("--device cuda train --config " + (dir / "bad.json").string()) == 2);
}

TEST_CASE("cli: crop respects candidate files and records the sign flag") {
  fs::path dir = temp_dir() / "crop";
  fs::create_directories(dir);

  data::FrameStack img(1, 24, 24, 3);
  for (int h = 0; h < 24; ++h)
    for (int w = 0; w < 24; ++w)
      for (int c = 0; c < 3; ++c) img.at(0, h, w, c) = (h + w) % 7 * 0.1;
  fs::path input = dir / "scene.vframes";
  data::write_vframes(input.string(), img);

  write_file(dir / "cands.json", "[[2,2,18,18]]");
  REQUIRE(run_cli("crop --input " + input.string() + " --candidates file --candidates-file " +
                  (dir / "cands.json").string() + " --output " + (dir / "crop.json").string()) ==
          0);
  json out = json::parse(read_file(dir / "crop.json"));
  REQUIRE(out["box"] == json::array({2.0, 2.0, 18.0, 18.0}));
  REQUIRE(out["meta"]["spatial_exp_sign"] == 1.0);

  REQUIRE(run_cli("crop --input " + input.string() +
                  " --spatial-exp-sign -1 --output " + (dir / "crop2.json").string()) == 0);
  json out2 = json::parse(read_file(dir / "crop2.json"));
  REQUIRE(out2["meta"]["spatial_exp_sign"] == -1.0);
  const auto& box = out2["box"];
  REQUIRE(box[0].get<double>() >= 0.0);
  REQUIRE(box[2].get<double>() <= 24.0);

  // Empty candidate list is a usage error.
  write_file(dir / "empty.json", "[]");
  REQUIRE(run_cli("crop --input " + input.string() + " --candidates file --candidates-file " +
                  (dir / "empty.json").string()) == 2);
}

TEST_CASE("cli: identical config and seed reproduce outputs byte for byte") {
  fs::path dir = temp_dir() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  write_file(dir / "a.json", tiny_config(dir / "out").dump());

  REQUIRE(run_cli("train --config " + (dir / "a.json").string()) == 0);
  const std::string log1 = read_file(dir / "out" / "train_log.jsonl");
  const std::string ckpt1 = read_file(dir / "out" / "checkpoint.json");

  REQUIRE(run_cli("train --config " + (dir / "a.json").string()) == 0);
  REQUIRE(read_file(dir / "out" / "train_log.jsonl") == log1);
  REQUIRE(read_file(dir / "out" / "checkpoint.json") == ckpt1);
}
