// SPDX-License-Identifier: Apache-2.0
//
// vqat — train, evaluate and crop for no-reference video quality assessment
// of AI-generated video.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqat/config/run_config.hpp"
#include "vqat/crop/s2cnet.hpp"
#include "vqat/data/frames.hpp"
#include "vqat/data/manifest.hpp"
#include "vqat/metrics/report.hpp"
#include "vqat/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct GlobalFlags {
  std::string log_level = "info";
  std::string device = "cpu";
  bool seed_set = false;
  std::uint64_t seed = 0;
};

void write_text(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out.good()) throw std::runtime_error("short write to " + path);
}

json step_record_to_json(const vqat::train::TrainStepRecord& rec) {
  json deltas = json::object();
  for (const auto& [name, norm] : rec.delta_norms) deltas[name] = norm;
  return json{{"step", rec.step},         {"clean_loss", rec.clean_loss},
              {"adv_loss", rec.adv_loss}, {"mae", rec.clean_parts.mae},
              {"bce", rec.clean_parts.bce}, {"fcl", rec.clean_parts.fcl},
              {"delta_norms", deltas},    {"lr", rec.lr},
              {"aborted", rec.aborted}};
}

int cmd_train(const std::string& config_path, const GlobalFlags& flags) {
  vqat::config::RunConfig cfg;
  try {
    cfg = vqat::config::load_config(config_path);
    if (flags.seed_set) cfg.seed = flags.seed;
    cfg.dataset.synthetic.seed = cfg.seed;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const fs::path out_dir(cfg.output.dir);
    fs::create_directories(out_dir);
    const std::string hash =
        vqat::config::config_hash(vqat::config::resolved_json(cfg));
    vqat::pipeline::CheckpointHook interim =
        [&](int step, const vqat::quality::DistributionHead& head, double sigma) {
          const fs::path path = out_dir / ("checkpoint_step" + std::to_string(step) + ".json");
          write_text(path.string(),
                     vqat::pipeline::checkpoint_json(cfg, hash, head, sigma).dump(2) + "\n");
        };
    vqat::pipeline::TrainRun run = vqat::pipeline::run_training(cfg, interim);
    if (!std::isfinite(run.result.final_loss))
      throw std::runtime_error("training produced a non-finite loss");

    std::string log_text;
    {
      json header{{"event", "config"},
                  {"config", vqat::config::resolved_json(cfg)},
                  {"config_hash", run.config_hash},
                  {"sigma_hundred", run.sigma_hundred}};
      log_text += header.dump() + "\n";
      for (const auto& rec : run.result.log) log_text += step_record_to_json(rec).dump() + "\n";
      json summary{{"event", "summary"},
                   {"steps_run", run.result.steps_run},
                   {"steps_aborted", run.result.steps_aborted},
                   {"converged", run.result.converged},
                   {"initial_loss", run.result.initial_loss},
                   {"final_loss", run.result.final_loss}};
      log_text += summary.dump() + "\n";
    }
    write_text((out_dir / cfg.output.log).string(), log_text);

    json ck = vqat::pipeline::checkpoint_to_json(run);
    write_text((out_dir / cfg.output.checkpoint).string(), ck.dump(2) + "\n");

    std::cout << "trained " << run.result.steps_run << " steps (" << run.result.steps_aborted
              << " aborted), loss " << run.result.initial_loss << " -> "
              << run.result.final_loss << "\n"
              << "checkpoint: " << (out_dir / cfg.output.checkpoint).string() << "\n"
              << "log: " << (out_dir / cfg.output.log).string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitDiverged;
  }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
             const std::string& split, const std::string& output_path, double mos_min,
             double mos_max, const std::string& compare_config) {
  try {
    vqat::pipeline::Checkpoint ck = vqat::pipeline::load_checkpoint(checkpoint_path);
    if (!compare_config.empty()) {
      vqat::config::RunConfig other = vqat::config::load_config(compare_config);
      const std::string other_hash =
          vqat::config::config_hash(vqat::config::resolved_json(other));
      if (other_hash != ck.config_hash)
        std::cerr << "warning: config hash mismatch (checkpoint " << ck.config_hash
                  << ", config " << other_hash << ")\n";
    }
    if (!manifest_path.empty()) {
      ck.cfg.dataset.kind = "manifest";
      ck.cfg.dataset.manifest = manifest_path;
      ck.cfg.dataset.mos_min = mos_min;
      ck.cfg.dataset.mos_max = mos_max;
    }
    vqat::pipeline::EvalRun run = vqat::pipeline::run_evaluation(ck, split);
    json out = run.report.to_json();
    out["config_hash"] = run.config_hash;
    out["config"] = vqat::config::resolved_json(ck.cfg);
    out["split"] = split;
    const std::string text = out.dump(2) + "\n";
    if (output_path.empty())
      std::cout << text;
    else
      write_text(output_path, text);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "eval error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_crop(const std::string& input_path, const std::string& candidates_mode,
             const std::string& candidates_file, const std::string& detections_file,
             double spatial_exp_sign, const std::string& fag_mode, int top_n,
             const std::string& output_path, std::uint64_t seed) {
  try {
    vqat::data::FrameStack frames = vqat::data::decode_media(input_path);

    vqat::crop::S2CNetConfig net;
    net.spatial_exp_sign = spatial_exp_sign;
    net.fag_mode = vqat::crop::fag_mode_from_string(fag_mode);
    net.top_n = top_n;
    net.validate();
    vqat::crop::S2CNetParams params = vqat::crop::S2CNetParams::init(net, seed);

    std::unique_ptr<vqat::crop::DetectionProvider> provider;
    if (!detections_file.empty())
      provider = std::make_unique<vqat::crop::SidecarDetectionProvider>(detections_file,
                                                                        net.feature_dim, seed);
    else
      provider = std::make_unique<vqat::crop::StubDetectionProvider>(
          std::vector<vqat::crop::Rect>{}, net.feature_dim, seed);

    std::vector<vqat::crop::Rect> file_candidates;
    if (candidates_mode == "file") {
      if (candidates_file.empty())
        throw std::invalid_argument("--candidates file requires --candidates-file");
      std::ifstream in(candidates_file);
      if (!in.good()) throw std::runtime_error("cannot open candidates file " + candidates_file);
      json j;
      in >> j;
      for (const auto& b : j) {
        if (b.size() != 4) throw std::runtime_error("candidate boxes need 4 coordinates");
        file_candidates.push_back(vqat::crop::Rect{b[0].get<double>(), b[1].get<double>(),
                                                   b[2].get<double>(), b[3].get<double>()});
      }
    } else if (candidates_mode != "grid") {
      throw std::invalid_argument("--candidates must be 'grid' or 'file'");
    }

    json frame_results = json::array();
    for (int f = 0; f < frames.frames; ++f) {
      vqat::data::ImageView view{&frames, f};
      std::vector<vqat::crop::Rect> candidates =
          candidates_mode == "grid" ? vqat::crop::grid_candidates(frames.width, frames.height, net)
                                    : file_candidates;
      if (candidates.empty()) throw std::invalid_argument("no crop candidates");
      std::vector<vqat::crop::CropCandidate> scored =
          vqat::crop::score_candidates(view, candidates, *provider, params, net);
      vqat::crop::CropCandidate best = vqat::crop::select_best_crop(scored);
      frame_results.push_back(
          {{"box", {best.box.x1, best.box.y1, best.box.x2, best.box.y2}},
           {"score", best.score}});
    }

    json out;
    out["box"] = frame_results[0]["box"];
    out["score"] = frame_results[0]["score"];
    out["frames"] = frame_results;
    out["meta"] = {{"input", input_path},
                   {"candidates", candidates_mode},
                   {"detections", detections_file.empty() ? "none" : detections_file},
                   {"spatial_exp_sign", spatial_exp_sign},
                   {"fag_mode", fag_mode},
                   {"top_n", top_n},
                   {"seed", seed}};
    const std::string text = out.dump(2) + "\n";
    if (output_path.empty())
      std::cout << text;
    else
      write_text(output_path, text);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "crop error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_metrics(const std::string& predictions_path, const std::string& manifest_path,
                double mos_min, double mos_max, const std::string& output_path) {
  try {
    std::ifstream in(predictions_path);
    if (!in.good()) throw std::runtime_error("cannot open predictions " + predictions_path);
    std::vector<vqat::metrics::PredictionRow> preds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const std::exception& e) {
        throw std::runtime_error("predictions line " + std::to_string(line_no) +
                                 ": invalid JSON: " + e.what());
      }
      if (!j.contains("video_id") || !j.contains("score"))
        throw std::runtime_error("predictions line " + std::to_string(line_no) +
                                 ": expected {video_id, score}");
      preds.push_back({j["video_id"].get<std::string>(), j["score"].get<double>()});
    }

    vqat::data::DatasetManifest manifest = vqat::data::load_manifest(
        manifest_path, vqat::data::MosScale{mos_min, mos_max}, /*check_paths=*/false);
    std::vector<vqat::metrics::GroundTruthRow> truth;
    for (const auto& e : manifest.entries) truth.push_back({e.video_id, e.mos_raw});

    vqat::metrics::EvalReport report = vqat::metrics::evaluate(preds, truth);
    json out = report.to_json();
    out["meta"] = {{"predictions", predictions_path},
                   {"manifest", manifest_path},
                   {"mos_min", mos_min},
                   {"mos_max", mos_max}};
    const std::string text = out.dump(2) + "\n";
    if (output_path.empty())
      std::cout << text;
    else
      write_text(output_path, text);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "metrics error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video quality assessment toolkit for AI-generated video"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--log-level", flags.log_level, "log level (quiet|info|debug)");
  app.add_option("--device", flags.device, "compute device (cpu)");
  auto* seed_opt = app.add_option("--seed", flags.seed, "override the config seed");

  std::string config_path;
  auto* train = app.add_subcommand("train", "train a quality model from a run config");
  train->add_option("--config", config_path, "run config JSON")->required();

  std::string checkpoint_path, eval_manifest, eval_split = "test", eval_output, compare_config;
  double eval_mos_min = 0.0, eval_mos_max = 100.0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and report correlations");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  eval->add_option("--manifest", eval_manifest, "override manifest CSV");
  eval->add_option("--split", eval_split, "split tag to evaluate (default test)");
  eval->add_option("--output", eval_output, "write the report here instead of stdout");
  eval->add_option("--mos-min", eval_mos_min, "declared MOS minimum for --manifest");
  eval->add_option("--mos-max", eval_mos_max, "declared MOS maximum for --manifest");
  eval->add_option("--config", compare_config, "config to cross-check the checkpoint hash");

  std::string crop_input, crop_candidates = "grid", crop_candidates_file, crop_detections,
              crop_fag = "hadamard", crop_output;
  double crop_sign = 1.0;
  int crop_top_n = 5;
  auto* crop = app.add_subcommand("crop", "select the best content-aware crop");
  crop->add_option("--input", crop_input, "image or video file (.ppm, .vframes)")->required();
  crop->add_option("--candidates", crop_candidates, "candidate source: grid|file");
  crop->add_option("--candidates-file", crop_candidates_file, "JSON [[x1,y1,x2,y2],...]");
  crop->add_option("--detections", crop_detections, "detection sidecar JSON");
  crop->add_option("--spatial-exp-sign", crop_sign, "+1 literal, -1 distance decay");
  crop->add_option("--fag-mode", crop_fag, "hadamard|projection");
  crop->add_option("--top-n", crop_top_n, "max objects in the graph");
  crop->add_option("--output", crop_output, "write the crop JSON here instead of stdout");

  std::string met_predictions, met_manifest, met_output;
  double met_mos_min = 0.0, met_mos_max = 100.0;
  auto* met = app.add_subcommand("metrics", "correlations for a predictions file");
  met->add_option("--predictions", met_predictions, "JSON-lines {video_id, score}")->required();
  met->add_option("--manifest", met_manifest, "ground-truth manifest CSV")->required();
  met->add_option("--mos-min", met_mos_min, "declared MOS minimum");
  met->add_option("--mos-max", met_mos_max, "declared MOS maximum");
  met->add_option("--output", met_output, "write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  flags.seed_set = seed_opt->count() > 0;
  if (flags.device != "cpu") {
    std::cerr << "unsupported device '" << flags.device << "' (only cpu is available)\n";
    return kExitUsage;
  }

  if (train->parsed()) return cmd_train(config_path, flags);
  if (eval->parsed())
    return cmd_eval(checkpoint_path, eval_manifest, eval_split, eval_output, eval_mos_min,
                    eval_mos_max, compare_config);
  if (crop->parsed())
    return cmd_crop(crop_input, crop_candidates, crop_candidates_file, crop_detections, crop_sign,
                    crop_fag, crop_top_n, crop_output, flags.seed_set ? flags.seed : 0);
  if (met->parsed())
    return cmd_metrics(met_predictions, met_manifest, met_mos_min, met_mos_max, met_output);
  return kExitUsage;
}
