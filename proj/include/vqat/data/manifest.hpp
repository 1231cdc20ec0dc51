// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vqat/core/common.hpp"
#include "vqat/data/frames.hpp"

namespace vqat::data {

// Declared MOS range of a dataset; all score bookkeeping goes through here.
struct MosScale {
  double min = 0.0;
  double max = 100.0;

  void validate() const {
    require(max > min, "MosScale: max must exceed min");
  }
  double to_unit(double raw) const { return (raw - min) / (max - min); }
  double to_hundred(double raw) const { return 100.0 * to_unit(raw); }
  double from_unit(double unit) const { return min + unit * (max - min); }
};

struct ManifestEntry {
  std::string video_id;
  std::string path;
  double mos_raw = 0.0;
  std::string split;  // optional tag, e.g. "train" / "test"
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  MosScale scale;

  std::vector<ManifestEntry> subset(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(e);
    return out;
  }
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}
}  // namespace detail

// CSV with header `video_id,path,mos[,split]`. Row numbers in errors are
// 1-based counting the header.
inline DatasetManifest load_manifest(const std::string& path, const MosScale& scale,
                                     bool check_paths = true) {
  scale.validate();
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("manifest: cannot open " + path);

  DatasetManifest manifest;
  manifest.scale = scale;

  std::string line;
  int row = 0;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (row == 1) {
      if (fields.size() < 3 || fields[0] != "video_id" || fields[1] != "path" ||
          fields[2] != "mos")
        throw std::runtime_error("manifest: row 1: expected header video_id,path,mos[,split]");
      continue;
    }
    if (fields.size() < 3 || fields.size() > 4)
      throw std::runtime_error("manifest: row " + std::to_string(row) +
                               ": expected 3 or 4 columns, got " +
                               std::to_string(fields.size()));
    ManifestEntry e;
    e.video_id = fields[0];
    e.path = fields[1];
    try {
      std::size_t used = 0;
      e.mos_raw = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::runtime_error("manifest: row " + std::to_string(row) + ": invalid mos value '" +
                               fields[2] + "'");
    }
    if (fields.size() == 4) e.split = fields[3];

    if (e.video_id.empty())
      throw std::runtime_error("manifest: row " + std::to_string(row) + ": empty video_id");
    if (!seen_ids.insert(e.video_id).second)
      throw std::runtime_error("manifest: row " + std::to_string(row) + ": duplicate video_id '" +
                               e.video_id + "'");
    if (e.mos_raw < scale.min || e.mos_raw > scale.max)
      throw std::runtime_error("manifest: row " + std::to_string(row) + ": mos " +
                               std::to_string(e.mos_raw) + " outside declared range [" +
                               std::to_string(scale.min) + ", " + std::to_string(scale.max) + "]");
    if (check_paths && !std::filesystem::exists(e.path))
      throw std::runtime_error("manifest: row " + std::to_string(row) + ": path not found '" +
                               e.path + "'");
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

// One video ready for the model: sampled frames plus the score on every
// working scale.
struct VideoSample {
  std::string video_id;
  FrameStack frames;  // [F, H, W, C]
  double mos_raw = 0.0;
  double mos_unit = 0.0;
  double mos_hundred = 0.0;
};

inline VideoSample make_sample(const ManifestEntry& entry, const MosScale& scale,
                               const FrameStack& full_video, int sample_count) {
  VideoSample s;
  s.video_id = entry.video_id;
  s.frames = sample_frames(full_video, sample_count);
  s.mos_raw = entry.mos_raw;
  s.mos_unit = scale.to_unit(entry.mos_raw);
  s.mos_hundred = scale.to_hundred(entry.mos_raw);
  return s;
}

// Resolves manifest paths to pixel data. File-backed sources go through the
// decoder registry; synthetic datasets keep stacks in memory.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual FrameStack load(const ManifestEntry& entry) const = 0;
};

class FileFrameSource final : public FrameSource {
 public:
  FrameStack load(const ManifestEntry& entry) const override {
    return decode_media(entry.path);
  }
};

class MemoryFrameSource final : public FrameSource {
 public:
  std::map<std::string, FrameStack> videos;  // keyed by video_id

  FrameStack load(const ManifestEntry& entry) const override {
    auto it = videos.find(entry.video_id);
    if (it == videos.end())
      throw std::runtime_error("memory frame source: unknown video_id '" + entry.video_id + "'");
    return it->second;
  }
};

}  // namespace vqat::data
