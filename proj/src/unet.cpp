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

#include "dseg/unet.hpp"

#include "dseg/container.hpp"

namespace dseg {

template class UNet<float>;
template class UNet<double>;

void UNetConfig::validate() const {
  if (base_channels <= 0 || blocks_per_resolution <= 0 || time_embedding_dim <= 0 || input_resolution <= 0) {
    throw ConfigError("unet config values must be positive");
  }
  if (channel_multipliers.empty()) throw ConfigError("unet needs at least one channel multiplier");
  for (int m : channel_multipliers)
    if (m <= 0) throw ConfigError("channel multipliers must be positive");
  if (time_embedding_dim % 2 != 0) throw ConfigError("time_embedding_dim must be even");
  const int factor = 1 << (levels() - 1);
  if (input_resolution % factor != 0) {
    throw ConfigError("input_resolution " + std::to_string(input_resolution) + " not divisible by 2^" +
                      std::to_string(levels() - 1));
  }
}

std::vector<DecoderBlockInfo> decoder_blocks(const UNetConfig& config) {
  config.validate();
  std::vector<DecoderBlockInfo> out;
  for (int level = config.levels() - 1; level >= 0; --level) {
    for (int i = 0; i <= config.blocks_per_resolution; ++i) {
      DecoderBlockInfo info;
      info.index = static_cast<int>(out.size()) + 1;
      info.level = level;
      info.channels = config.base_channels * config.channel_multipliers[level];
      info.upsamples = level > 0 && i == config.blocks_per_resolution;
      info.resolution = config.input_resolution >> (info.upsamples ? level - 1 : level);
      out.push_back(info);
    }
  }
  return out;
}

UNet<float> build_unet(const UNetConfig& config, std::uint64_t seed) { return UNet<float>(config, seed); }

std::uint64_t parameter_checksum(const ParameterSet<float>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(float), h);
  }
  return h;
}

namespace {
constexpr const char* kConfigTensor = "__config__";
}

void save_checkpoint(const UNet<float>& model, const NoiseSchedule& schedule, const std::filesystem::path& path) {
  TensorContainer c;
  c.schedule_steps = static_cast<std::uint32_t>(schedule.steps());
  c.beta_start = schedule.beta_start();
  c.beta_end = schedule.beta_end();
  const auto& cfg = model.config();
  NamedTensor config_tensor{kConfigTensor, {}, {}};
  for (int v : {cfg.base_channels, cfg.blocks_per_resolution, cfg.time_embedding_dim, cfg.input_resolution}) {
    config_tensor.values.push_back(static_cast<float>(v));
  }
  for (int m : cfg.channel_multipliers) config_tensor.values.push_back(static_cast<float>(m));
  config_tensor.dims = {static_cast<std::uint32_t>(config_tensor.values.size())};
  c.tensors.push_back(std::move(config_tensor));
  for (const auto& p : model.parameters()) {
    NamedTensor t{p.name, {}, std::vector<float>(p.value.data(), p.value.data() + p.value.size())};
    for (int d : p.shape) t.dims.push_back(static_cast<std::uint32_t>(d));
    c.tensors.push_back(std::move(t));
  }
  write_container(path, c);
}

std::pair<UNet<float>, NoiseSchedule> load_checkpoint(const std::filesystem::path& path) {
  TensorContainer c = read_container(path);
  if (c.tensors.empty() || c.tensors.front().name != kConfigTensor || c.tensors.front().values.size() < 5) {
    throw LoadError("checkpoint lacks architecture record: " + path.string());
  }
  const auto& v = c.tensors.front().values;
  UNetConfig cfg;
  cfg.base_channels = static_cast<int>(v[0]);
  cfg.blocks_per_resolution = static_cast<int>(v[1]);
  cfg.time_embedding_dim = static_cast<int>(v[2]);
  cfg.input_resolution = static_cast<int>(v[3]);
  cfg.channel_multipliers.assign(v.begin() + 4, v.end());
  try {
    UNet<float> model(cfg, 0);
    NoiseSchedule schedule(static_cast<int>(c.schedule_steps), c.beta_start, c.beta_end);
    auto& params = model.parameters();
    if (c.tensors.size() != params.size() + 1) throw LoadError("checkpoint tensor count mismatch: " + path.string());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = c.tensors[i + 1];
      if (t.name != params[i].name || static_cast<Eigen::Index>(t.values.size()) != params[i].value.size()) {
        throw LoadError("checkpoint tensor '" + t.name + "' does not match architecture: " + path.string());
      }
      params[i].value = Eigen::Map<const Vector<float>>(t.values.data(), params[i].value.size());
    }
    return {std::move(model), std::move(schedule)};
  } catch (const ConfigError& e) {
    throw LoadError(std::string("invalid checkpoint header: ") + e.what());
  }
}

}  // namespace dseg
