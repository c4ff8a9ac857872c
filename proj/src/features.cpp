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

#include "dseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "dseg/container.hpp"

namespace dseg {

std::string_view to_string(NoisePolicy policy) {
  switch (policy) {
    case NoisePolicy::fixed_shared: return "fixed_shared";
    case NoisePolicy::per_timestep_shared: return "per_timestep_shared";
    case NoisePolicy::resampled: return "resampled";
  }
  return "unknown";
}

NoisePolicy noise_policy_from_string(std::string_view name) {
  for (auto p : {NoisePolicy::fixed_shared, NoisePolicy::per_timestep_shared, NoisePolicy::resampled})
    if (to_string(p) == name) return p;
  throw ConfigError("unknown noise policy: " + std::string(name));
}

namespace {

void require_sorted_unique(const std::vector<int>& v, const char* what) {
  if (v.empty()) throw ConfigError(std::string(what) + " must be non-empty");
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] <= v[i - 1]) throw ConfigError(std::string(what) + " must be sorted and unique");
}

}  // namespace

void FeatureExtractionConfig::validate(int decoder_block_count, int schedule_steps) const {
  require_sorted_unique(blocks, "feature blocks");
  require_sorted_unique(timesteps, "feature timesteps");
  if (blocks.front() < 1 || blocks.back() > decoder_block_count) {
    throw ConfigError("feature blocks must lie in [1, " + std::to_string(decoder_block_count) + "]");
  }
  if (timesteps.front() < 1 || timesteps.back() > schedule_steps) {
    throw ConfigError("feature timesteps must lie in [1, " + std::to_string(schedule_steps) + "]");
  }
}

std::vector<int> default_feature_blocks(int decoder_block_count) {
  const int d = decoder_block_count;
  if (d < 3) throw ConfigError("need at least 3 decoder blocks for the default block set");
  std::set<int> blocks;
  for (int b = (d + 2) / 3; b <= (2 * d + 2) / 3; ++b) blocks.insert(b);
  blocks.insert(d - 1);
  return {blocks.begin(), blocks.end()};
}

std::vector<ChannelSpan> feature_layout(const UNetConfig& unet, const FeatureExtractionConfig& config) {
  const auto info = decoder_blocks(unet);
  config.validate(static_cast<int>(info.size()), std::numeric_limits<int>::max());
  std::vector<ChannelSpan> layout;
  int offset = 0;
  for (int t : config.timesteps) {
    for (int b : config.blocks) {
      const int count = info[b - 1].channels;
      layout.push_back({t, b, offset, count});
      offset += count;
    }
  }
  return layout;
}

int feature_dimension(std::span<const int> block_channels, std::span<const int> blocks, std::size_t timestep_count) {
  int per_step = 0;
  for (int b : blocks) {
    if (b < 0 || static_cast<std::size_t>(b) >= block_channels.size()) throw ConfigError("block outside channel table");
    per_step += block_channels[b];
  }
  return per_step * static_cast<int>(timestep_count);
}

Image extraction_noise(const FeatureExtractionConfig& config, int t, int height, int width, std::uint64_t draw_index) {
  switch (config.noise_policy) {
    case NoisePolicy::fixed_shared:
      return standard_normal<float>(3, height, width, derive_seed(config.noise_seed, 0));
    case NoisePolicy::per_timestep_shared:
      return standard_normal<float>(3, height, width, derive_seed(config.noise_seed, 1, static_cast<std::uint64_t>(t)));
    case NoisePolicy::resampled:
      return standard_normal<float>(
          3, height, width, derive_seed(derive_seed(config.noise_seed, 2, draw_index), static_cast<std::uint64_t>(t)));
  }
  throw ConfigError("unknown noise policy");
}

PixelFeatureVolume extract_features(const UNet<float>& model, const NoiseSchedule& schedule, const Image& image,
                                    const FeatureExtractionConfig& config, std::uint64_t draw_index) {
  config.validate(model.decoder_block_count(), schedule.steps());
  const int h = image.height, w = image.width;
  PixelFeatureVolume volume;
  volume.channel_layout = feature_layout(model.config(), config);
  const int total = volume.channel_layout.empty()
                        ? 0
                        : volume.channel_layout.back().offset + volume.channel_layout.back().count;
  volume.features = Tensor3<float>(total, h, w);
  volume.provenance = {config.blocks,
                       config.timesteps,
                       std::string(to_string(config.noise_policy)),
                       config.noise_seed,
                       parameter_checksum(model.parameters()),
                       config.noise_policy == NoisePolicy::resampled ? draw_index : 0};

  const std::set<int> block_set(config.blocks.begin(), config.blocks.end());
  std::size_t span = 0;
  for (int t : config.timesteps) {
    const auto noised = add_noise(image, t, extraction_noise(config, t, h, w, draw_index), schedule);
    ActivationTapResult<float> taps;
    model.forward_with_taps(noised.x_t, t, block_set, taps);
    for (int b : config.blocks) {
      const auto& s = volume.channel_layout[span++];
      volume.features.data.middleRows(s.offset, s.count) = bilinear_upsample(taps.at(b), h, w).data;
    }
  }
  return volume;
}

DatasetFeatures extract_dataset_features(const UNet<float>& model, const NoiseSchedule& schedule,
                                         std::span<const Image> images, const FeatureExtractionConfig& config,
                                         const std::function<void(std::size_t, std::size_t)>& on_progress,
                                         std::uint64_t first_draw_index, int workers) {
  DatasetFeatures result;
  result.volumes.resize(images.size());
  std::mutex mutex;
  std::size_t done = 0;
  auto work = [&](std::size_t i) {
    std::optional<PixelFeatureVolume> volume;
    std::optional<ExtractionFailure> failure;
    try {
      volume = extract_features(model, schedule, images[i], config, first_draw_index + i);
    } catch (const std::exception& e) {
      failure = ExtractionFailure{i, e.what()};
    }
    std::lock_guard lock(mutex);
    result.volumes[i] = std::move(volume);
    if (failure) result.failures.push_back(*failure);
    ++done;
    if (on_progress) on_progress(done, images.size());
  };
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(images.size())));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < images.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < images.size(); i += n_workers) work(i);
      });
    }
  }
  std::sort(result.failures.begin(), result.failures.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  return result;
}

namespace {

nlohmann::json provenance_json(const PixelFeatureVolume& v, std::uint64_t payload_checksum) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& s : v.channel_layout) layout.push_back({s.timestep, s.block, s.offset, s.count});
  const auto& p = v.provenance;
  return {{"blocks", p.blocks},
          {"timesteps", p.timesteps},
          {"noise_policy", p.noise_policy},
          {"noise_seed", p.noise_seed},
          {"model_checksum", hex64(p.model_checksum)},
          {"draw_index", p.draw_index},
          {"channel_layout", layout},
          {"payload_checksum", hex64(payload_checksum)}};
}

std::uint64_t payload_checksum(const Tensor3<float>& t) {
  return fnv1a64(t.data.data(), static_cast<std::size_t>(t.data.size()) * sizeof(float));
}

std::string provenance_text(const PixelFeatureVolume& volume) {
  return provenance_json(volume, payload_checksum(volume.features)).dump();
}

}  // namespace

std::size_t feature_file_bytes(const PixelFeatureVolume& volume) {
  return 4 + 4 + 12 + 4 + provenance_text(volume).size() + static_cast<std::size_t>(volume.features.size()) * 4;
}

void save_features(const PixelFeatureVolume& volume, const std::filesystem::path& path) {
  const auto& f = volume.features;
  std::string out = "DDPF";
  le::put_u32(out, kFeatureFileVersion);
  le::put_u32(out, static_cast<std::uint32_t>(f.channels));
  le::put_u32(out, static_cast<std::uint32_t>(f.height));
  le::put_u32(out, static_cast<std::uint32_t>(f.width));
  const std::string prov = provenance_text(volume);
  le::put_u32(out, static_cast<std::uint32_t>(prov.size()));
  out += prov;
  out.append(reinterpret_cast<const char*>(f.data.data()), static_cast<std::size_t>(f.data.size()) * 4);
  le::write_file_atomic(path, out);
}

PixelFeatureVolume load_features(const std::filesystem::path& path) {
  le::Reader in(le::read_file(path), path.string());
  if (in.remaining() < 4 || in.text(4) != "DDPF") throw LoadError("bad magic in " + path.string());
  if (const auto v = in.u32(); v != kFeatureFileVersion) {
    throw LoadError("unsupported feature file version " + std::to_string(v) + " in " + path.string());
  }
  const int c = static_cast<int>(in.u32()), h = static_cast<int>(in.u32()), w = static_cast<int>(in.u32());
  const auto json_len = in.u32();
  nlohmann::json prov;
  try {
    prov = nlohmann::json::parse(in.text(json_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed provenance in " + path.string() + ": " + e.what());
  }
  const std::size_t expected = static_cast<std::size_t>(c) * h * w * 4;
  if (in.remaining() != expected) {
    throw LoadError("payload length " + std::to_string(in.remaining()) + " != C*H*W*4 = " + std::to_string(expected) +
                    " in " + path.string());
  }
  PixelFeatureVolume volume;
  volume.features = Tensor3<float>(c, h, w);
  in.floats(volume.features.data.data(), static_cast<std::size_t>(c) * h * w);
  try {
    auto& p = volume.provenance;
    p.blocks = prov.at("blocks").get<std::vector<int>>();
    p.timesteps = prov.at("timesteps").get<std::vector<int>>();
    p.noise_policy = prov.at("noise_policy").get<std::string>();
    p.noise_seed = prov.at("noise_seed").get<std::uint64_t>();
    p.model_checksum = std::stoull(prov.at("model_checksum").get<std::string>(), nullptr, 16);
    p.draw_index = prov.at("draw_index").get<std::uint64_t>();
    int covered = 0;
    for (const auto& s : prov.at("channel_layout")) {
      ChannelSpan span{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>(), s.at(3).get<int>()};
      if (span.offset != covered) throw LoadError("channel layout not contiguous in " + path.string());
      covered += span.count;
      volume.channel_layout.push_back(span);
    }
    if (covered != c) throw LoadError("channel layout covers " + std::to_string(covered) + " of " + std::to_string(c));
    const auto stored = std::stoull(prov.at("payload_checksum").get<std::string>(), nullptr, 16);
    if (stored != payload_checksum(volume.features)) throw LoadError("payload checksum mismatch in " + path.string());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("provenance in " + path.string() + ": " + e.what());
  }
  return volume;
}

PixelFeatureVolume rgb_features(const Image& image) {
  PixelFeatureVolume v;
  v.features = image;
  v.provenance.noise_policy = "none";
  v.channel_layout.push_back({0, 0, 0, image.channels});
  return v;
}

}  // namespace dseg
