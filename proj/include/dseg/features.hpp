// Copyright 2026 The dseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dseg/schedule.hpp"
#include "dseg/unet.hpp"

namespace dseg {

enum class NoisePolicy {
  fixed_shared,         // one eps for every t, train and test
  per_timestep_shared,  // eps_t per t, shared by train and test
  resampled,            // fresh eps on every extraction
};

std::string_view to_string(NoisePolicy policy);
NoisePolicy noise_policy_from_string(std::string_view name);

struct FeatureExtractionConfig {
  std::vector<int> blocks;     // sorted decoder block indices, 1 = deepest
  std::vector<int> timesteps;  // sorted, within [1, T]
  NoisePolicy noise_policy = NoisePolicy::fixed_shared;
  std::uint64_t noise_seed = 0;

  void validate(int decoder_block_count, int schedule_steps) const;
};

/// Middle third of the decoder, [ceil(D/3), ceil(2D/3)], plus the block one
/// above the shallowest: the toy-scale analogue of {5,6,7,8,12} out of 18.
std::vector<int> default_feature_blocks(int decoder_block_count);

struct ChannelSpan {
  int timestep = 0;
  int block = 0;
  int offset = 0;
  int count = 0;

  friend bool operator==(const ChannelSpan&, const ChannelSpan&) = default;
};

struct FeatureProvenance {
  std::vector<int> blocks;
  std::vector<int> timesteps;
  std::string noise_policy;
  std::uint64_t noise_seed = 0;
  std::uint64_t model_checksum = 0;
  std::uint64_t draw_index = 0;

  friend bool operator==(const FeatureProvenance&, const FeatureProvenance&) = default;
};

/// Per-pixel feature vectors [C_total, H, W] plus where every channel came from.
struct PixelFeatureVolume {
  Tensor3<float> features;
  FeatureProvenance provenance;
  std::vector<ChannelSpan> channel_layout;

  int channel_count() const { return features.channels; }

  friend bool operator==(const PixelFeatureVolume& a, const PixelFeatureVolume& b) {
    return a.features == b.features && a.provenance == b.provenance && a.channel_layout == b.channel_layout;
  }
};

/// Half-pixel-center bilinear resampling (align_corners off); source
/// coordinates are clamped at the borders. Upscaling only.
template <typename Scalar>
Tensor3<Scalar> bilinear_upsample(const Tensor3<Scalar>& map, int out_h, int out_w) {
  if (out_h < map.height || out_w < map.width) {
    throw DimensionError("bilinear_upsample: cannot downscale " + shape_string(map) + " to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  if (out_h == map.height && out_w == map.width) return map;
  struct Tap {
    int i0, i1;
    double w1;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> result(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      int i0 = static_cast<int>(src);
      if (i0 > in - 1) i0 = in - 1;
      const int i1 = i0 + 1 < in ? i0 + 1 : in - 1;
      result[o] = {i0, i1, src - i0};
    }
    return result;
  };
  const auto ty = taps(map.height, out_h);
  const auto tx = taps(map.width, out_w);
  Tensor3<Scalar> out(map.channels, out_h, out_w);
  for (int c = 0; c < map.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const double top = (1.0 - b.w1) * map(c, a.i0, b.i0) + b.w1 * map(c, a.i0, b.i1);
        const double bottom = (1.0 - b.w1) * map(c, a.i1, b.i0) + b.w1 * map(c, a.i1, b.i1);
        out(c, y, x) = static_cast<Scalar>((1.0 - a.w1) * top + a.w1 * bottom);
      }
    }
  }
  return out;
}

/// Total channels and layout for a config on an architecture, without running it.
std::vector<ChannelSpan> feature_layout(const UNetConfig& unet, const FeatureExtractionConfig& config);

/// Same formula over an explicit per-block channel table (index i -> block i).
int feature_dimension(std::span<const int> block_channels, std::span<const int> blocks, std::size_t timestep_count);

/// The noise tensor used at timestep t. draw_index only matters for the resampled policy.
Image extraction_noise(const FeatureExtractionConfig& config, int t, int height, int width, std::uint64_t draw_index);

/// Noise the image per timestep, tap the requested decoder blocks, upsample
/// each tap to the image size and concatenate (timestep-major, then blocks deep
/// to shallow).
PixelFeatureVolume extract_features(const UNet<float>& model, const NoiseSchedule& schedule, const Image& image,
                                    const FeatureExtractionConfig& config, std::uint64_t draw_index = 0);

struct ExtractionFailure {
  std::size_t index = 0;
  std::string message;
};

struct DatasetFeatures {
  std::vector<std::optional<PixelFeatureVolume>> volumes;
  std::vector<ExtractionFailure> failures;
};

/// Order-preserving batch extraction; image i uses draw index first_draw_index + i.
/// A failing image is reported and the rest still run. workers > 1 fans out.
DatasetFeatures extract_dataset_features(const UNet<float>& model, const NoiseSchedule& schedule,
                                         std::span<const Image> images, const FeatureExtractionConfig& config,
                                         const std::function<void(std::size_t, std::size_t)>& on_progress = {},
                                         std::uint64_t first_draw_index = 0, int workers = 1);

/// "DDPF" feature file: magic | u32 version | u32 C | u32 H | u32 W |
/// u32 provenance length | provenance JSON | f32 payload [C, H, W].
inline constexpr std::uint32_t kFeatureFileVersion = 1;
std::size_t feature_file_bytes(const PixelFeatureVolume& volume);
void save_features(const PixelFeatureVolume& volume, const std::filesystem::path& path);
PixelFeatureVolume load_features(const std::filesystem::path& path);

/// Raw RGB values as 3-channel features; the classifier baseline.
PixelFeatureVolume rgb_features(const Image& image);

}  // namespace dseg
