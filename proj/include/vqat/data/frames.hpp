// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqat/core/common.hpp"

namespace vqat::data {

// Dense [F, H, W, C] pixel block, doubles in [0, 1].
struct FrameStack {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  FrameStack() = default;
  FrameStack(int f, int h, int w, int c)
      : frames(f), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(f) * h * w * c, 0.0) {}

  double& at(int f, int h, int w, int c) {
    return data[idx(f, h, w, c)];
  }
  double at(int f, int h, int w, int c) const {
    return data[idx(f, h, w, c)];
  }

  std::size_t idx(int f, int h, int w, int c) const {
    return ((static_cast<std::size_t>(f) * height + h) * width + w) * channels + c;
  }

  bool empty() const { return data.empty(); }
};

// Read-only view of one frame inside a stack.
struct ImageView {
  const FrameStack* stack = nullptr;
  int frame = 0;

  int height() const { return stack->height; }
  int width() const { return stack->width; }
  int channels() const { return stack->channels; }
  double at(int h, int w, int c) const { return stack->at(frame, h, w, c); }
};

// Uniform frame-sampling indices: idx_k = round(k * (T-1) / (F-1)).
// T < F yields clamped repeats; indices are always non-decreasing.
inline std::vector<int> sample_indices(int total_frames, int sample_count) {
  require(total_frames >= 1, "sample_indices: video has no frames");
  require(sample_count >= 1, "sample_indices: sample count must be >= 1");
  std::vector<int> idx(static_cast<std::size_t>(sample_count));
  if (sample_count == 1) {
    idx[0] = 0;
    return idx;
  }
  for (int k = 0; k < sample_count; ++k) {
    double pos = static_cast<double>(k) * (total_frames - 1) / (sample_count - 1);
    idx[static_cast<std::size_t>(k)] =
        std::min(total_frames - 1, static_cast<int>(std::llround(pos)));
  }
  return idx;
}

inline FrameStack sample_frames(const FrameStack& video, int sample_count) {
  std::vector<int> idx = sample_indices(video.frames, sample_count);
  FrameStack out(sample_count, video.height, video.width, video.channels);
  const std::size_t frame_size =
      static_cast<std::size_t>(video.height) * video.width * video.channels;
  for (int k = 0; k < sample_count; ++k) {
    const double* src = video.data.data() + frame_size * static_cast<std::size_t>(idx[k]);
    double* dst = out.data.data() + frame_size * static_cast<std::size_t>(k);
    std::copy(src, src + frame_size, dst);
  }
  return out;
}

inline FrameStack crop_frame(const ImageView& img, int x1, int y1, int x2, int y2) {
  require(x1 >= 0 && y1 >= 0 && x2 <= img.width() && y2 <= img.height() && x2 > x1 && y2 > y1,
          "crop_frame: box out of image bounds");
  FrameStack out(1, y2 - y1, x2 - x1, img.channels());
  for (int h = y1; h < y2; ++h)
    for (int w = x1; w < x2; ++w)
      for (int c = 0; c < img.channels(); ++c) out.at(0, h - y1, w - x1, c) = img.at(h, w, c);
  return out;
}

inline FrameStack resize_bilinear(const FrameStack& src, int out_h, int out_w) {
  require(src.frames >= 1 && out_h >= 1 && out_w >= 1, "resize_bilinear: bad dimensions");
  FrameStack out(src.frames, out_h, out_w, src.channels);
  const double sy = out_h > 1 ? static_cast<double>(src.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(src.width - 1) / (out_w - 1) : 0.0;
  for (int f = 0; f < src.frames; ++f) {
    for (int h = 0; h < out_h; ++h) {
      const double fy = h * sy;
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, src.height - 1);
      const double wy = fy - y0;
      for (int w = 0; w < out_w; ++w) {
        const double fx = w * sx;
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, src.width - 1);
        const double wx = fx - x0;
        for (int c = 0; c < src.channels; ++c) {
          const double top = (1.0 - wx) * src.at(f, y0, x0, c) + wx * src.at(f, y0, x1, c);
          const double bot = (1.0 - wx) * src.at(f, y1, x0, c) + wx * src.at(f, y1, x1, c);
          out.at(f, h, w, c) = (1.0 - wy) * top + wy * bot;
        }
      }
    }
  }
  return out;
}

// ---- decoder plugins: path -> [T, H, W, C] ----

class FrameDecoder {
 public:
  virtual ~FrameDecoder() = default;
  virtual std::string name() const = 0;
  virtual FrameStack decode(const std::string& path) const = 0;
};

// Raw frame container: "VFRM" magic, four u32 LE dims, float64 LE payload.
inline void write_vframes(const std::string& path, const FrameStack& stack) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_vframes: cannot open " + path);
  out.write("VFRM", 4);
  const std::uint32_t dims[4] = {
      static_cast<std::uint32_t>(stack.frames), static_cast<std::uint32_t>(stack.height),
      static_cast<std::uint32_t>(stack.width), static_cast<std::uint32_t>(stack.channels)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(stack.data.data()),
            static_cast<std::streamsize>(stack.data.size() * sizeof(double)));
  require(out.good(), "write_vframes: short write to " + path);
}

class VframesDecoder final : public FrameDecoder {
 public:
  std::string name() const override { return "vframes"; }

  FrameStack decode(const std::string& path) const override {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw std::runtime_error("vframes: cannot open " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in.good() || std::string(magic, 4) != "VFRM")
      throw std::runtime_error("vframes: bad magic in " + path);
    std::uint32_t dims[4] = {};
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in.good()) throw std::runtime_error("vframes: truncated header in " + path);
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[3] == 0)
      throw std::runtime_error("vframes: zero dimension in " + path);
    FrameStack stack(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                     static_cast<int>(dims[2]), static_cast<int>(dims[3]));
    in.read(reinterpret_cast<char*>(stack.data.data()),
            static_cast<std::streamsize>(stack.data.size() * sizeof(double)));
    if (!in.good()) throw std::runtime_error("vframes: truncated payload in " + path);
    return stack;
  }
};

// Binary PPM (P6), 8-bit, as a single-frame stack. Header comments allowed.
class PpmDecoder final : public FrameDecoder {
 public:
  std::string name() const override { return "ppm"; }

  FrameStack decode(const std::string& path) const override {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw std::runtime_error("ppm: cannot open " + path);
    auto next_token = [&in]() {
      std::string tok;
      while (in >> tok) {
        if (tok[0] != '#') return tok;
        std::string rest;
        std::getline(in, rest);
      }
      return std::string();
    };
    if (next_token() != "P6") throw std::runtime_error("ppm: unsupported format in " + path);
    int w = 0, h = 0, maxval = 0;
    try {
      w = std::stoi(next_token());
      h = std::stoi(next_token());
      maxval = std::stoi(next_token());
    } catch (const std::exception&) {
      throw std::runtime_error("ppm: bad header in " + path);
    }
    in.get();  // single whitespace before payload
    if (!in.good() || w <= 0 || h <= 0 || maxval != 255)
      throw std::runtime_error("ppm: bad header in " + path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in.good()) throw std::runtime_error("ppm: truncated payload in " + path);
    FrameStack stack(1, h, w, 3);
    for (std::size_t i = 0; i < raw.size(); ++i) stack.data[i] = raw[i] / 255.0;
    return stack;
  }
};

// Picks a decoder from the file extension.
inline FrameStack decode_media(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "vframes") return VframesDecoder{}.decode(path);
  if (ext == "ppm") return PpmDecoder{}.decode(path);
  throw std::runtime_error("no frame decoder for '" + path + "' (supported: .vframes, .ppm)");
}

}  // namespace vqat::data
