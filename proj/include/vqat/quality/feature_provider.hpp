// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "vqat/core/common.hpp"
#include "vqat/core/rng.hpp"
#include "vqat/data/frames.hpp"

namespace vqat::quality {

// Per-frame embedding backbone. Given a [F, H, W, C] stack, returns [F, D]
// features. Implementations must be deterministic for fixed construction
// parameters; heavyweight backbones plug in through this interface.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual Mat features(const data::FrameStack& frames) const = 0;
};

// Mean-pools each frame per channel, then applies a fixed random projection
// to the configured width. Carries enough signal for desk-scale experiments
// while staying dependency-free.
class ToyFeatureProvider final : public FeatureProvider {
 public:
  ToyFeatureProvider(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    require(dim >= 1, "ToyFeatureProvider: dim must be >= 1");
  }

  std::string name() const override { return "toy"; }
  int dim() const override { return dim_; }

  Mat features(const data::FrameStack& frames) const override {
    require(frames.frames >= 1, "ToyFeatureProvider: empty frame stack");
    const int c = frames.channels;
    Mat pooled(frames.frames, c);
    for (int f = 0; f < frames.frames; ++f) {
      for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int h = 0; h < frames.height; ++h)
          for (int w = 0; w < frames.width; ++w) sum += frames.at(f, h, w, ch);
        pooled(f, ch) = sum / (static_cast<double>(frames.height) * frames.width);
      }
    }
    return pooled * projection(c);
  }

 private:
  int dim_;
  std::uint64_t seed_;

  Mat projection(int in_dim) const {
    std::mt19937_64 rng(mix_seed(seed_, 0x70726f6aULL));
    return random_normal(in_dim, dim_, rng, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  }
};

using ProviderFactory =
    std::function<std::unique_ptr<FeatureProvider>(int dim, std::uint64_t seed)>;

// String-keyed registry so configs can select backbones by name.
class FeatureProviderRegistry {
 public:
  static FeatureProviderRegistry& instance() {
    static FeatureProviderRegistry reg;
    return reg;
  }

  void register_provider(const std::string& name, ProviderFactory factory) {
    factories_[name] = std::move(factory);
  }

  std::unique_ptr<FeatureProvider> create(const std::string& name, int dim,
                                          std::uint64_t seed) const {
    auto it = factories_.find(name);
    if (it == factories_.end())
      throw std::runtime_error("unknown feature provider '" + name + "'");
    return it->second(dim, seed);
  }

 private:
  FeatureProviderRegistry() {
    factories_["toy"] = [](int dim, std::uint64_t seed) {
      return std::make_unique<ToyFeatureProvider>(dim, seed);
    };
  }

  std::map<std::string, ProviderFactory> factories_;
};

}  // namespace vqat::quality
