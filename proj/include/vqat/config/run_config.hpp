// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqat/core/common.hpp"
#include "vqat/crop/attention.hpp"
#include "vqat/crop/s2cnet.hpp"
#include "vqat/data/synthetic.hpp"
#include "vqat/quality/model.hpp"
#include "vqat/train/fgm.hpp"

namespace vqat::config {

using nlohmann::json;

enum class LossMode { fcl, mae, bce };

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "fcl") return LossMode::fcl;
  if (s == "mae") return LossMode::mae;
  if (s == "bce") return LossMode::bce;
  throw std::invalid_argument("loss.mode must be fcl, mae or bce, got '" + s + "'");
}

inline std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::fcl: return "fcl";
    case LossMode::mae: return "mae";
    default: return "bce";
  }
}

struct CropSection {
  bool enabled = false;
  crop::S2CNetConfig net;
  int output_height = 0;  // 0 keeps the input frame size
  int output_width = 0;
  std::uint64_t feature_seed = 0;
};

struct DatasetSection {
  std::string kind = "synthetic";  // synthetic | manifest
  std::string manifest;
  std::string decoder = "auto";
  bool check_paths = true;
  double mos_min = 1.0;
  double mos_max = 5.0;
  data::SyntheticConfig synthetic;
};

struct OutputSection {
  std::string dir = "runs/default";
  std::string checkpoint = "checkpoint.json";
  std::string log = "train_log.jsonl";
  int checkpoint_interval = 0;  // steps between interim checkpoints; 0 = final only
};

struct RunConfig {
  std::uint64_t seed = 0;
  quality::QualityModelConfig model;
  std::string provider = "toy";
  LossMode loss_mode = LossMode::fcl;
  double sigma = 0.0;   // 0 = derive from the training split
  bool fgm_enabled = true;
  train::FgmConfig fgm;
  int epochs = 5;       // used when fgm.max_steps == 0
  CropSection crop;
  DatasetSection dataset;
  OutputSection output;
};

namespace detail {

inline void check_keys(const json& j, const std::string& path,
                       const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (allowed.find(key) == allowed.end())
      throw std::invalid_argument("config: unknown key '" + (path.empty() ? key : path + "." + key) +
                                  "'");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  using detail::check_keys;
  using detail::get_or;
  RunConfig cfg;
  check_keys(j, "", {"seed", "model", "loss", "fgm", "crop", "dataset", "output"});

  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model",
               {"provider", "embedding_dim", "hidden_dim", "frame_count", "score_scale"});
    cfg.provider = get_or<std::string>(m, "provider", "toy");
    cfg.model.embedding_dim = get_or<int>(m, "embedding_dim", cfg.model.embedding_dim);
    cfg.model.hidden_dim = get_or<int>(m, "hidden_dim", cfg.model.hidden_dim);
    cfg.model.frame_count = get_or<int>(m, "frame_count", cfg.model.frame_count);
    cfg.model.score_scale =
        quality::score_scale_from_string(get_or<std::string>(m, "score_scale", "unit"));
    cfg.model.validate();
  }

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, "loss", {"mode", "sigma"});
    cfg.loss_mode = loss_mode_from_string(get_or<std::string>(l, "mode", "fcl"));
    if (l.contains("sigma") && l.at("sigma").is_number())
      cfg.sigma = l.at("sigma").get<double>();
    else if (l.contains("sigma") && l.at("sigma") != "auto")
      throw std::invalid_argument("config: loss.sigma must be a number or \"auto\"");
  }

  if (j.contains("fgm")) {
    const json& f = j.at("fgm");
    check_keys(f, "fgm",
               {"enabled", "epsilon", "norm_scope", "exclude_patterns", "learning_rate",
                "batch_size", "epochs", "max_steps", "convergence_tol", "convergence_window",
                "optimizer"});
    cfg.fgm_enabled = get_or<bool>(f, "enabled", true);
    cfg.fgm.epsilon = get_or<double>(f, "epsilon", cfg.fgm.epsilon);
    cfg.fgm.norm_scope =
        train::norm_scope_from_string(get_or<std::string>(f, "norm_scope", "per_tensor"));
    if (f.contains("exclude_patterns"))
      cfg.fgm.exclude_patterns = f.at("exclude_patterns").get<std::vector<std::string>>();
    cfg.fgm.learning_rate = get_or<double>(f, "learning_rate", cfg.fgm.learning_rate);
    cfg.fgm.batch_size = get_or<int>(f, "batch_size", cfg.fgm.batch_size);
    cfg.epochs = get_or<int>(f, "epochs", cfg.epochs);
    cfg.fgm.max_steps = get_or<int>(f, "max_steps", 0);
    cfg.fgm.convergence_tol = get_or<double>(f, "convergence_tol", cfg.fgm.convergence_tol);
    cfg.fgm.convergence_window =
        get_or<int>(f, "convergence_window", cfg.fgm.convergence_window);
    cfg.fgm.optimizer = get_or<std::string>(f, "optimizer", cfg.fgm.optimizer);
  }

  if (j.contains("crop")) {
    const json& c = j.at("crop");
    check_keys(c, "crop",
               {"enabled", "feature_dim", "mlp_hidden", "max_nodes", "top_n", "spatial_exp_sign",
                "fag_mode", "scales", "stride_divisor", "output_height", "output_width",
                "feature_seed"});
    cfg.crop.enabled = get_or<bool>(c, "enabled", false);
    cfg.crop.net.feature_dim = get_or<int>(c, "feature_dim", cfg.crop.net.feature_dim);
    cfg.crop.net.mlp_hidden = get_or<int>(c, "mlp_hidden", cfg.crop.net.mlp_hidden);
    cfg.crop.net.max_nodes = get_or<int>(c, "max_nodes", cfg.crop.net.max_nodes);
    cfg.crop.net.top_n = get_or<int>(c, "top_n", cfg.crop.net.top_n);
    cfg.crop.net.spatial_exp_sign =
        get_or<double>(c, "spatial_exp_sign", cfg.crop.net.spatial_exp_sign);
    cfg.crop.net.fag_mode =
        crop::fag_mode_from_string(get_or<std::string>(c, "fag_mode", "hadamard"));
    if (c.contains("scales")) cfg.crop.net.scales = c.at("scales").get<std::vector<double>>();
    cfg.crop.net.stride_divisor = get_or<int>(c, "stride_divisor", cfg.crop.net.stride_divisor);
    cfg.crop.output_height = get_or<int>(c, "output_height", 0);
    cfg.crop.output_width = get_or<int>(c, "output_width", 0);
    cfg.crop.feature_seed = get_or<std::uint64_t>(c, "feature_seed", 0);
    cfg.crop.net.validate();
  }

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset",
               {"kind", "manifest", "decoder", "check_paths", "mos_min", "mos_max", "synthetic"});
    cfg.dataset.kind = get_or<std::string>(d, "kind", "synthetic");
    if (cfg.dataset.kind != "synthetic" && cfg.dataset.kind != "manifest")
      throw std::invalid_argument("config: dataset.kind must be 'synthetic' or 'manifest'");
    cfg.dataset.manifest = get_or<std::string>(d, "manifest", "");
    cfg.dataset.decoder = get_or<std::string>(d, "decoder", "auto");
    cfg.dataset.check_paths = get_or<bool>(d, "check_paths", true);
    cfg.dataset.mos_min = get_or<double>(d, "mos_min", cfg.dataset.mos_min);
    cfg.dataset.mos_max = get_or<double>(d, "mos_max", cfg.dataset.mos_max);
    if (cfg.dataset.kind == "manifest" && cfg.dataset.manifest.empty())
      throw std::invalid_argument("config: dataset.kind=manifest requires dataset.manifest");
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      check_keys(s, "dataset.synthetic",
                 {"n_videos", "n_test", "total_frames", "height", "width", "channels",
                  "max_spread", "pixel_noise"});
      auto& sc = cfg.dataset.synthetic;
      sc.n_videos = get_or<int>(s, "n_videos", sc.n_videos);
      sc.n_test = get_or<int>(s, "n_test", sc.n_test);
      sc.total_frames = get_or<int>(s, "total_frames", sc.total_frames);
      sc.height = get_or<int>(s, "height", sc.height);
      sc.width = get_or<int>(s, "width", sc.width);
      sc.channels = get_or<int>(s, "channels", sc.channels);
      sc.max_spread = get_or<double>(s, "max_spread", sc.max_spread);
      sc.pixel_noise = get_or<double>(s, "pixel_noise", sc.pixel_noise);
    }
  }
  // Synthetic generation inherits the run seed and declared scale.
  cfg.dataset.synthetic.seed = cfg.seed;
  cfg.dataset.synthetic.mos_min = cfg.dataset.mos_min;
  cfg.dataset.synthetic.mos_max = cfg.dataset.mos_max;
  cfg.dataset.synthetic.validate();

  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, "output", {"dir", "checkpoint", "log", "checkpoint_interval"});
    cfg.output.dir = get_or<std::string>(o, "dir", cfg.output.dir);
    cfg.output.checkpoint = get_or<std::string>(o, "checkpoint", cfg.output.checkpoint);
    cfg.output.log = get_or<std::string>(o, "log", cfg.output.log);
    cfg.output.checkpoint_interval = get_or<int>(o, "checkpoint_interval", 0);
    require(cfg.output.checkpoint_interval >= 0,
            "config: output.checkpoint_interval must be >= 0");
  }
  cfg.fgm.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: invalid JSON in " + path + ": " + e.what());
  }
  return parse_config(j);
}

// Full round-trip of the resolved configuration; this is what gets hashed
// and echoed into output artifacts.
inline json resolved_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["model"] = {{"provider", cfg.provider},
                {"embedding_dim", cfg.model.embedding_dim},
                {"hidden_dim", cfg.model.hidden_dim},
                {"frame_count", cfg.model.frame_count},
                {"score_scale",
                 cfg.model.score_scale == quality::ScoreScale::unit ? "unit" : "hundred"}};
  j["loss"] = {{"mode", to_string(cfg.loss_mode)},
               {"sigma", cfg.sigma == 0.0 ? json("auto") : json(cfg.sigma)}};
  j["fgm"] = {{"enabled", cfg.fgm_enabled},
              {"epsilon", cfg.fgm.epsilon},
              {"norm_scope",
               cfg.fgm.norm_scope == train::NormScope::per_tensor ? "per_tensor" : "global"},
              {"exclude_patterns", cfg.fgm.exclude_patterns},
              {"learning_rate", cfg.fgm.learning_rate},
              {"batch_size", cfg.fgm.batch_size},
              {"epochs", cfg.epochs},
              {"max_steps", cfg.fgm.max_steps},
              {"convergence_tol", cfg.fgm.convergence_tol},
              {"convergence_window", cfg.fgm.convergence_window},
              {"optimizer", cfg.fgm.optimizer}};
  j["crop"] = {{"enabled", cfg.crop.enabled},
               {"feature_dim", cfg.crop.net.feature_dim},
               {"mlp_hidden", cfg.crop.net.mlp_hidden},
               {"max_nodes", cfg.crop.net.max_nodes},
               {"top_n", cfg.crop.net.top_n},
               {"spatial_exp_sign", cfg.crop.net.spatial_exp_sign},
               {"fag_mode",
                cfg.crop.net.fag_mode == crop::FagMode::hadamard ? "hadamard" : "projection"},
               {"scales", cfg.crop.net.scales},
               {"stride_divisor", cfg.crop.net.stride_divisor},
               {"output_height", cfg.crop.output_height},
               {"output_width", cfg.crop.output_width},
               {"feature_seed", cfg.crop.feature_seed}};
  j["dataset"] = {{"kind", cfg.dataset.kind},
                  {"manifest", cfg.dataset.manifest},
                  {"decoder", cfg.dataset.decoder},
                  {"check_paths", cfg.dataset.check_paths},
                  {"mos_min", cfg.dataset.mos_min},
                  {"mos_max", cfg.dataset.mos_max},
                  {"synthetic",
                   {{"n_videos", cfg.dataset.synthetic.n_videos},
                    {"n_test", cfg.dataset.synthetic.n_test},
                    {"total_frames", cfg.dataset.synthetic.total_frames},
                    {"height", cfg.dataset.synthetic.height},
                    {"width", cfg.dataset.synthetic.width},
                    {"channels", cfg.dataset.synthetic.channels},
                    {"max_spread", cfg.dataset.synthetic.max_spread},
                    {"pixel_noise", cfg.dataset.synthetic.pixel_noise}}}};
  j["output"] = {{"dir", cfg.output.dir},
                 {"checkpoint", cfg.output.checkpoint},
                 {"log", cfg.output.log},
                 {"checkpoint_interval", cfg.output.checkpoint_interval}};
  return j;
}

// FNV-1a over the canonical dump; stable across runs and platforms.
inline std::string config_hash(const json& resolved) {
  const std::string dump = resolved.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace vqat::config
