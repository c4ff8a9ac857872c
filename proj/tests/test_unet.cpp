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

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "dseg/container.hpp"
#include "dseg/unet.hpp"
#include "test_util.hpp"

namespace dseg {
namespace {

UNetConfig tiny_config() { return UNetConfig{4, {1, 2}, 1, 8, 8}; }

// Skip tensors pushed by the encoder: input conv, every res block, every downsampler.
// Each decoder block consumes exactly one of them.
int skip_count(const UNetConfig& c) {
  int n = 1;
  for (int level = 0; level < c.levels(); ++level) {
    n += c.blocks_per_resolution;
    if (level + 1 < c.levels()) ++n;
  }
  return n;
}

TEST(Build, SameSeedSameParameters) {
  const auto a = build_unet(tiny_config(), 5);
  const auto b = build_unet(tiny_config(), 5);
  EXPECT_EQ(parameter_checksum(a.parameters()), parameter_checksum(b.parameters()));
  EXPECT_NE(parameter_checksum(a.parameters()), parameter_checksum(build_unet(tiny_config(), 6).parameters()));
  EXPECT_GT(a.parameter_count(), 0);
}

TEST(Build, DecoderBlockCountMatchesWalk) {
  for (const auto& cfg : {UNetConfig{8, {1, 2}, 2, 16, 16}, UNetConfig{}, UNetConfig{4, {1, 1, 2, 2}, 1, 8, 16}}) {
    EXPECT_EQ(cfg.decoder_block_count(), skip_count(cfg));
    EXPECT_EQ(static_cast<int>(decoder_blocks(cfg).size()), skip_count(cfg));
  }
  EXPECT_EQ(UNetConfig{}.decoder_block_count(), 9);
}

TEST(Build, RejectsIncompatibleResolution) {
  EXPECT_THROW(build_unet(UNetConfig{4, {1, 2, 4}, 1, 8, 18}, 0), ConfigError);
  EXPECT_THROW(build_unet(UNetConfig{0, {1}, 1, 8, 8}, 0), ConfigError);
  EXPECT_THROW(build_unet(UNetConfig{4, {}, 1, 8, 8}, 0), ConfigError);
}

TEST(Forward, ZerosGiveFiniteOutputOfInputShape) {
  const auto model = build_unet(tiny_config(), 1);
  const auto y = model.forward(Image(3, 8, 8), 1);
  EXPECT_TRUE(y.same_shape(Image(3, 8, 8)));
  EXPECT_TRUE(y.all_finite());
}

TEST(Forward, TimestepConditioningIsLive) {
  const auto model = build_unet(tiny_config(), 1);
  const auto x = standard_normal<float>(3, 8, 8, 2);
  EXPECT_GT(squared_distance(model.forward(x, 1), model.forward(x, 100)), 0.0);
}

TEST(Forward, WrongSpatialSizeIsADimensionError) {
  const auto model = build_unet(tiny_config(), 1);
  EXPECT_THROW(model.forward(Image(3, 16, 16), 1), DimensionError);
  EXPECT_THROW(model.forward(Image(2, 8, 8), 1), DimensionError);
}

TEST(Taps, EmptyRequestEqualsForward) {
  const auto model = build_unet(tiny_config(), 3);
  const auto x = standard_normal<float>(3, 8, 8, 4);
  ActivationTapResult<float> taps;
  EXPECT_TRUE(model.forward_with_taps(x, 7, {}, taps) == model.forward(x, 7));
  EXPECT_TRUE(taps.empty());
}

TEST(Taps, ObservationDoesNotChangeOutput) {
  const auto model = build_unet(tiny_config(), 3);
  std::set<int> all;
  for (int b = 1; b <= model.decoder_block_count(); ++b) all.insert(b);
  for (int i = 0; i < 5; ++i) {
    const auto x = standard_normal<float>(3, 8, 8, 10 + i);
    ActivationTapResult<float> taps;
    EXPECT_TRUE(model.forward_with_taps(x, 1 + i, all, taps) == model.forward(x, 1 + i));
    EXPECT_EQ(taps.size(), all.size());
  }
}

TEST(Taps, ChannelsAndResolutionMatchWalk) {
  const UNetConfig cfg{4, {1, 2, 3}, 2, 8, 16};
  const auto model = build_unet(cfg, 0);
  std::set<int> all;
  for (int b = 1; b <= cfg.decoder_block_count(); ++b) all.insert(b);
  ActivationTapResult<float> taps;
  model.forward_with_taps(Image(3, 16, 16), 3, all, taps);
  // Decoder walks levels from deepest; each level has blocks_per_resolution + 1 blocks,
  // the last of which doubles the resolution unless it is the top level.
  int b = 1;
  for (int level = cfg.levels() - 1; level >= 0; --level) {
    for (int i = 0; i <= cfg.blocks_per_resolution; ++i, ++b) {
      const bool up = level > 0 && i == cfg.blocks_per_resolution;
      const int side = (cfg.input_resolution >> level) * (up ? 2 : 1);
      EXPECT_EQ(taps.at(b).channels, cfg.base_channels * cfg.channel_multipliers[level]) << "block " << b;
      EXPECT_EQ(taps.at(b).height, side) << "block " << b;
      EXPECT_EQ(taps.at(b).width, side) << "block " << b;
    }
  }
}

TEST(Taps, UnknownBlockListsValidRange) {
  const auto model = build_unet(tiny_config(), 0);
  ActivationTapResult<float> taps;
  try {
    model.forward_with_taps(Image(3, 8, 8), 1, {0}, taps);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("[1, 4]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(model.forward_with_taps(Image(3, 8, 8), 1, {5}, taps), ConfigError);
}

// Mean squared output as the scalar objective; d/dy = 2y/N.
double objective(const UNet<double>& m, const Tensor3<double>& x, int t) {
  return m.forward(x, t).data.squaredNorm() / static_cast<double>(x.size());
}

TEST(Gradient, AnalyticMatchesCentralDifferences) {
  auto model = build_unet(UNetConfig{4, {1, 2}, 1, 8, 8}, 9).cast<double>();
  const auto x = standard_normal<double>(3, 8, 8, 1);
  const int t = 17;
  UNetTape<double> tape;
  const auto y = model.forward_train(x, t, tape);
  model.parameters().zero_grad();
  Tensor3<double> dy = y;
  dy.data *= 2.0 / static_cast<double>(y.size());
  model.backward(tape, dy);

  // One random entry from each parameter tensor covers every layer type.
  Rng rng(3);
  int checked = 0;
  for (std::size_t p = 0; p < model.parameters().size(); ++p) {
    auto& param = model.parameters()[static_cast<int>(p)];
    std::uniform_int_distribution<Eigen::Index> pick(0, param.numel() - 1);
    const Eigen::Index i = pick(rng);
    const double saved = param.value[i];
    const double h = 1e-5;
    param.value[i] = saved + h;
    const double up = objective(model, x, t);
    param.value[i] = saved - h;
    const double down = objective(model, x, t);
    param.value[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = param.grad[i];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    EXPECT_LT(std::abs(numeric - analytic) / scale, 1e-3) << param.name << "[" << i << "]";
    ++checked;
  }
  EXPECT_GE(checked, 32);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = test::scratch_dir("ckpt");
  const auto model = build_unet(tiny_config(), 4);
  const auto schedule = build_schedule(20, 1e-3, 0.2);
  save_checkpoint(model, schedule, dir / "m.dseg");
  const auto [back, sched] = load_checkpoint(dir / "m.dseg");
  EXPECT_EQ(back.config(), model.config());
  EXPECT_EQ(sched.steps(), 20);
  EXPECT_EQ(sched.beta_start(), 1e-3);
  EXPECT_EQ(sched.beta_end(), 0.2);
  EXPECT_EQ(parameter_checksum(back.parameters()), parameter_checksum(model.parameters()));
  const auto x = standard_normal<float>(3, 8, 8, 5);
  EXPECT_TRUE(back.forward(x, 9) == model.forward(x, 9));
}

TEST(Checkpoint, FileSizeMatchesAccounting) {
  const auto dir = test::scratch_dir("ckpt_size");
  const auto cfg = tiny_config();
  const auto model = build_unet(cfg, 4);
  save_checkpoint(model, build_schedule(20, 1e-3, 0.2), dir / "m.dseg");
  auto record = [](std::size_t name_len, std::size_t rank, std::size_t numel) {
    return 4 + name_len + 1 + 4 * rank + 4 * numel;
  };
  // Architecture record: 4 scalars plus one entry per multiplier.
  std::size_t expected = TensorContainer::kHeaderBytes + record(10, 1, 4 + cfg.channel_multipliers.size());
  for (const auto& p : model.parameters()) expected += record(p.name.size(), p.shape.size(), p.numel());
  EXPECT_EQ(std::filesystem::file_size(dir / "m.dseg"), expected);
}

TEST(Checkpoint, CorruptMagicIsRejected) {
  const auto dir = test::scratch_dir("ckpt_magic");
  save_checkpoint(build_unet(tiny_config(), 4), build_schedule(20, 1e-3, 0.2), dir / "m.dseg");
  {
    std::fstream f(dir / "m.dseg", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(1);
    f.put('X');
  }
  EXPECT_THROW(load_checkpoint(dir / "m.dseg"), LoadError);
}

TEST(Checkpoint, VersionMismatchIsRejected) {
  const auto dir = test::scratch_dir("ckpt_version");
  save_checkpoint(build_unet(tiny_config(), 4), build_schedule(20, 1e-3, 0.2), dir / "m.dseg");
  {
    std::fstream f(dir / "m.dseg", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(char(99));
  }
  EXPECT_THROW(load_checkpoint(dir / "m.dseg"), LoadError);
}

TEST(Checkpoint, TruncatedPayloadIsRejected) {
  const auto dir = test::scratch_dir("ckpt_trunc");
  save_checkpoint(build_unet(tiny_config(), 4), build_schedule(20, 1e-3, 0.2), dir / "m.dseg");
  const auto size = std::filesystem::file_size(dir / "m.dseg");
  std::filesystem::resize_file(dir / "m.dseg", size - 7);
  EXPECT_THROW(load_checkpoint(dir / "m.dseg"), LoadError);
}

}  // namespace
}  // namespace dseg
