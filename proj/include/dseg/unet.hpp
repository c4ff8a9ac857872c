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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dseg/layers.hpp"
#include "dseg/schedule.hpp"

namespace dseg {

struct UNetConfig {
  int base_channels = 16;
  std::vector<int> channel_multipliers{1, 2, 4};
  int blocks_per_resolution = 2;
  int time_embedding_dim = 64;
  int input_resolution = 64;

  int levels() const { return static_cast<int>(channel_multipliers.size()); }
  int decoder_block_count() const { return levels() * (blocks_per_resolution + 1); }
  void validate() const;

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// One decoder block as seen from outside: 1-based index (1 = deepest),
/// resolution level (0 = full resolution), output channels and output side length.
struct DecoderBlockInfo {
  int index = 0;
  int level = 0;
  int channels = 0;
  int resolution = 0;
  bool upsamples = false;
};

/// Architecture walk over the decoder in construction order.
std::vector<DecoderBlockInfo> decoder_blocks(const UNetConfig& config);

template <typename Scalar>
using ActivationTapResult = std::map<int, Tensor3<Scalar>>;

/// Sinusoidal embedding [cos(t f_i), sin(t f_i)], f_i = 10000^(-i / (dim/2)).
template <typename Scalar>
Vector<Scalar> timestep_embedding(int t, int dim) {
  const int half = dim / 2;
  Vector<Scalar> emb = Vector<Scalar>::Zero(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    emb[i] = static_cast<Scalar>(std::cos(t * freq));
    emb[half + i] = static_cast<Scalar>(std::sin(t * freq));
  }
  return emb;
}

namespace detail {

struct ResBlockSpec {
  int in = 0, out = 0;
  GroupNormSpec norm1;
  Conv2dSpec conv1;
  LinearSpec temb_proj;
  GroupNormSpec norm2;
  Conv2dSpec conv2;
  bool has_skip = false;
  Conv2dSpec skip;
};

template <typename Scalar>
struct ResBlockCache {
  GroupNormCache<Scalar> norm1;
  Tensor3<Scalar> act1_in;
  Conv2dCache<Scalar> conv1;
  GroupNormCache<Scalar> norm2;
  Tensor3<Scalar> act2_in;
  Conv2dCache<Scalar> conv2;
  Conv2dCache<Scalar> skip;
};

struct EncoderStage {
  bool downsample = false;
  ResBlockSpec res;
  Conv2dSpec down;
};

struct DecoderStage {
  ResBlockSpec res;
  int skip_channels = 0;
  bool upsample = false;
  Conv2dSpec up;
};

}  // namespace detail

/// Everything the backward pass needs from one forward evaluation.
template <typename Scalar>
struct UNetTape {
  Vector<Scalar> temb_sin, temb_hidden, temb, temb_act;
  Conv2dCache<Scalar> input_conv;
  std::vector<detail::ResBlockCache<Scalar>> encoder_res;
  std::vector<Conv2dCache<Scalar>> encoder_down;
  std::vector<detail::ResBlockCache<Scalar>> middle;
  std::vector<detail::ResBlockCache<Scalar>> decoder_res;
  std::vector<Conv2dCache<Scalar>> decoder_up;
  std::vector<Tensor3<Scalar>> decoder_up_in;
  GroupNormCache<Scalar> out_norm;
  Tensor3<Scalar> out_act_in;
  Conv2dCache<Scalar> out_conv;
};

/// Small ADM-style noise predictor eps_theta(x_t, t): residual blocks with group
/// norm and timestep conditioning, skip-concatenating decoder. Decoder blocks are
/// numbered 1..D from deepest to shallowest; the last block of every level except
/// the top one carries the 2x upsampler, as in ADM's output blocks.
template <typename Scalar>
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    build(rng);
  }

  const UNetConfig& config() const { return config_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  int decoder_block_count() const { return config_.decoder_block_count(); }
  Eigen::Index parameter_count() const { return params_.total_numel(); }

  Tensor3<Scalar> forward(const Tensor3<Scalar>& x, int t) const { return run(x, t, nullptr, nullptr, {}); }

  /// Same output as forward(); additionally records each requested decoder
  /// block's output (after skip concatenation, convolutions and any upsampler).
  Tensor3<Scalar> forward_with_taps(const Tensor3<Scalar>& x, int t, const std::set<int>& blocks,
                                    ActivationTapResult<Scalar>& taps) const {
    for (int b : blocks) {
      if (b < 1 || b > decoder_block_count()) {
        throw ConfigError("decoder block " + std::to_string(b) + " outside valid range [1, " +
                          std::to_string(decoder_block_count()) + "]");
      }
    }
    taps.clear();
    return run(x, t, nullptr, &taps, blocks);
  }

  Tensor3<Scalar> forward_train(const Tensor3<Scalar>& x, int t, UNetTape<Scalar>& tape) const {
    return run(x, t, &tape, nullptr, {});
  }

  /// Accumulates parameter gradients for d(loss)/d(output) = d_out.
  void backward(const UNetTape<Scalar>& tape, const Tensor3<Scalar>& d_out);

  template <typename Other>
  UNet<Other> cast() const {
    UNet<Other> out(config_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i].value = params_[i].value.template cast<Other>();
    return out;
  }

 private:
  void build(Rng& rng);
  detail::ResBlockSpec make_res(const std::string& name, int in, int out, Rng& rng);
  Tensor3<Scalar> res_forward(const detail::ResBlockSpec& s, const Tensor3<Scalar>& x, const Vector<Scalar>& temb_act,
                              detail::ResBlockCache<Scalar>* cache) const;
  Tensor3<Scalar> res_backward(const detail::ResBlockSpec& s, const detail::ResBlockCache<Scalar>& cache,
                               const Tensor3<Scalar>& d_out, const Vector<Scalar>& temb_act,
                               Vector<Scalar>& d_temb_act);
  Tensor3<Scalar> run(const Tensor3<Scalar>& x, int t, UNetTape<Scalar>* tape, ActivationTapResult<Scalar>* taps,
                      const std::set<int>& blocks) const;

  UNetConfig config_;
  ParameterSet<Scalar> params_;
  LinearSpec time1_, time2_;
  Conv2dSpec input_conv_;
  std::vector<detail::EncoderStage> encoder_;
  std::vector<detail::ResBlockSpec> middle_;
  std::vector<detail::DecoderStage> decoder_;
  GroupNormSpec out_norm_;
  Conv2dSpec out_conv_;
};

UNet<float> build_unet(const UNetConfig& config, std::uint64_t seed);

/// FNV-1a over the little-endian f32 parameter payload.
std::uint64_t parameter_checksum(const ParameterSet<float>& params);

void save_checkpoint(const UNet<float>& model, const NoiseSchedule& schedule, const std::filesystem::path& path);
std::pair<UNet<float>, NoiseSchedule> load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

template <typename Scalar>
detail::ResBlockSpec UNet<Scalar>::make_res(const std::string& name, int in, int out, Rng& rng) {
  detail::ResBlockSpec s;
  s.in = in;
  s.out = out;
  s.norm1 = make_group_norm(params_, name + ".norm1", in);
  s.conv1 = make_conv(params_, name + ".conv1", in, out, 3, 1, rng);
  s.temb_proj = make_linear(params_, name + ".temb_proj", config_.time_embedding_dim, out, rng);
  s.norm2 = make_group_norm(params_, name + ".norm2", out);
  s.conv2 = make_conv(params_, name + ".conv2", out, out, 3, 1, rng);
  s.has_skip = in != out;
  if (s.has_skip) s.skip = make_conv(params_, name + ".skip", in, out, 1, 1, rng);
  return s;
}

template <typename Scalar>
void UNet<Scalar>::build(Rng& rng) {
  const int temb = config_.time_embedding_dim;
  const int base = config_.base_channels;
  const int levels = config_.levels();
  const int bpr = config_.blocks_per_resolution;

  time1_ = make_linear(params_, "time_embed.0", temb, temb, rng);
  time2_ = make_linear(params_, "time_embed.2", temb, temb, rng);

  int ch = base * config_.channel_multipliers[0];
  input_conv_ = make_conv(params_, "input_conv", 3, ch, 3, 1, rng);
  std::vector<int> skip_channels{ch};
  for (int level = 0; level < levels; ++level) {
    const int out = base * config_.channel_multipliers[level];
    for (int i = 0; i < bpr; ++i) {
      detail::EncoderStage stage;
      stage.res = make_res("encoder." + std::to_string(encoder_.size()), ch, out, rng);
      ch = out;
      encoder_.push_back(stage);
      skip_channels.push_back(ch);
    }
    if (level != levels - 1) {
      detail::EncoderStage stage;
      stage.downsample = true;
      stage.down = make_conv(params_, "encoder." + std::to_string(encoder_.size()) + ".down", ch, ch, 3, 2, rng);
      encoder_.push_back(stage);
      skip_channels.push_back(ch);
    }
  }
  middle_.push_back(make_res("middle.0", ch, ch, rng));
  middle_.push_back(make_res("middle.1", ch, ch, rng));
  for (int level = levels - 1; level >= 0; --level) {
    const int out = base * config_.channel_multipliers[level];
    for (int i = 0; i <= bpr; ++i) {
      detail::DecoderStage stage;
      stage.skip_channels = skip_channels.back();
      skip_channels.pop_back();
      const std::string name = "decoder." + std::to_string(decoder_.size() + 1);
      stage.res = make_res(name, ch + stage.skip_channels, out, rng);
      ch = out;
      if (level > 0 && i == bpr) {
        stage.upsample = true;
        stage.up = make_conv(params_, name + ".upsample", ch, ch, 3, 1, rng);
      }
      decoder_.push_back(stage);
    }
  }
  out_norm_ = make_group_norm(params_, "out.norm", ch);
  out_conv_ = make_conv(params_, "out.conv", ch, 3, 3, 1, rng);
}

template <typename Scalar>
Tensor3<Scalar> UNet<Scalar>::res_forward(const detail::ResBlockSpec& s, const Tensor3<Scalar>& x,
                                          const Vector<Scalar>& temb_act, detail::ResBlockCache<Scalar>* cache) const {
  Tensor3<Scalar> n1 = group_norm_forward(params_, s.norm1, x, cache ? &cache->norm1 : nullptr);
  Tensor3<Scalar> h = conv2d_forward(params_, s.conv1, silu(n1), cache ? &cache->conv1 : nullptr);
  h.data.colwise() += linear_forward(params_, s.temb_proj, temb_act);
  Tensor3<Scalar> n2 = group_norm_forward(params_, s.norm2, h, cache ? &cache->norm2 : nullptr);
  Tensor3<Scalar> out = conv2d_forward(params_, s.conv2, silu(n2), cache ? &cache->conv2 : nullptr);
  if (s.has_skip) {
    out.data += conv2d_forward(params_, s.skip, x, cache ? &cache->skip : nullptr).data;
  } else {
    out.data += x.data;
  }
  if (cache) {
    cache->act1_in = std::move(n1);
    cache->act2_in = std::move(n2);
  }
  return out;
}

template <typename Scalar>
Tensor3<Scalar> UNet<Scalar>::res_backward(const detail::ResBlockSpec& s, const detail::ResBlockCache<Scalar>& cache,
                                           const Tensor3<Scalar>& d_out, const Vector<Scalar>& temb_act,
                                           Vector<Scalar>& d_temb_act) {
  Tensor3<Scalar> d = conv2d_backward(params_, s.conv2, cache.conv2, d_out);
  d = silu_backward(cache.act2_in, d);
  d = group_norm_backward(params_, s.norm2, cache.norm2, d);
  const Vector<Scalar> d_e = d.data.rowwise().sum();
  d_temb_act += linear_backward(params_, s.temb_proj, temb_act, d_e);
  d = conv2d_backward(params_, s.conv1, cache.conv1, d);
  d = silu_backward(cache.act1_in, d);
  Tensor3<Scalar> dx = group_norm_backward(params_, s.norm1, cache.norm1, d);
  if (s.has_skip) {
    dx.data += conv2d_backward(params_, s.skip, cache.skip, d_out).data;
  } else {
    dx.data += d_out.data;
  }
  return dx;
}

template <typename Scalar>
Tensor3<Scalar> UNet<Scalar>::run(const Tensor3<Scalar>& x, int t, UNetTape<Scalar>* tape,
                                  ActivationTapResult<Scalar>* taps, const std::set<int>& blocks) const {
  const int res = config_.input_resolution;
  if (x.channels != 3 || x.height != res || x.width != res) {
    throw DimensionError("unet input must be " + shape_string(3, res, res) + ", got " + shape_string(x));
  }
  Vector<Scalar> temb_sin = timestep_embedding<Scalar>(t, config_.time_embedding_dim);
  Vector<Scalar> temb_hidden = linear_forward(params_, time1_, temb_sin);
  Vector<Scalar> temb = linear_forward(params_, time2_, silu(temb_hidden));
  Vector<Scalar> temb_act = silu(temb);

  if (tape) {
    tape->encoder_res.assign(encoder_.size(), {});
    tape->encoder_down.assign(encoder_.size(), {});
    tape->middle.assign(middle_.size(), {});
    tape->decoder_res.assign(decoder_.size(), {});
    tape->decoder_up.assign(decoder_.size(), {});
    tape->decoder_up_in.assign(decoder_.size(), {});
  }

  Tensor3<Scalar> h = conv2d_forward(params_, input_conv_, x, tape ? &tape->input_conv : nullptr);
  std::vector<Tensor3<Scalar>> skips{h};
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const auto& stage = encoder_[i];
    if (stage.downsample) {
      h = conv2d_forward(params_, stage.down, h, tape ? &tape->encoder_down[i] : nullptr);
    } else {
      h = res_forward(stage.res, h, temb_act, tape ? &tape->encoder_res[i] : nullptr);
    }
    skips.push_back(h);
  }
  for (std::size_t i = 0; i < middle_.size(); ++i) {
    h = res_forward(middle_[i], h, temb_act, tape ? &tape->middle[i] : nullptr);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const auto& stage = decoder_[i];
    h = res_forward(stage.res, concat_channels(h, skips.back()), temb_act, tape ? &tape->decoder_res[i] : nullptr);
    skips.pop_back();
    if (stage.upsample) {
      Tensor3<Scalar> up = upsample_nearest2(h);
      h = conv2d_forward(params_, stage.up, up, tape ? &tape->decoder_up[i] : nullptr);
    }
    const int block = static_cast<int>(i) + 1;
    if (taps && blocks.count(block)) (*taps)[block] = h;
  }
  Tensor3<Scalar> n = group_norm_forward(params_, out_norm_, h, tape ? &tape->out_norm : nullptr);
  Tensor3<Scalar> out = conv2d_forward(params_, out_conv_, silu(n), tape ? &tape->out_conv : nullptr);
  if (tape) {
    tape->temb_sin = std::move(temb_sin);
    tape->temb_hidden = std::move(temb_hidden);
    tape->temb = std::move(temb);
    tape->temb_act = std::move(temb_act);
    tape->out_act_in = std::move(n);
  }
  return out;
}

template <typename Scalar>
void UNet<Scalar>::backward(const UNetTape<Scalar>& tape, const Tensor3<Scalar>& d_out) {
  Vector<Scalar> d_temb_act = Vector<Scalar>::Zero(config_.time_embedding_dim);
  Tensor3<Scalar> d = conv2d_backward(params_, out_conv_, tape.out_conv, d_out);
  d = silu_backward(tape.out_act_in, d);
  d = group_norm_backward(params_, out_norm_, tape.out_norm, d);

  // d_skips[j] is the gradient flowing into skip tensor j (0 = input conv output).
  std::vector<Tensor3<Scalar>> d_skips(encoder_.size() + 1);
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    const auto& stage = decoder_[i];
    if (stage.upsample) {
      d = conv2d_backward(params_, stage.up, tape.decoder_up[i], d);
      d = upsample_nearest2_backward(d);
    }
    Tensor3<Scalar> d_cat = res_backward(stage.res, tape.decoder_res[i], d, tape.temb_act, d_temb_act);
    const int h_channels = stage.res.in - stage.skip_channels;
    d = slice_channels(d_cat, 0, h_channels);
    d_skips[encoder_.size() - i] = slice_channels(d_cat, h_channels, stage.skip_channels);
  }
  for (std::size_t i = middle_.size(); i-- > 0;) {
    d = res_backward(middle_[i], tape.middle[i], d, tape.temb_act, d_temb_act);
  }
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    d.data += d_skips[i + 1].data;
    const auto& stage = encoder_[i];
    if (stage.downsample) {
      d = conv2d_backward(params_, stage.down, tape.encoder_down[i], d);
    } else {
      d = res_backward(stage.res, tape.encoder_res[i], d, tape.temb_act, d_temb_act);
    }
  }
  d.data += d_skips[0].data;
  conv2d_backward(params_, input_conv_, tape.input_conv, d);

  Vector<Scalar> d_temb = silu_backward(tape.temb, d_temb_act);
  Vector<Scalar> d_hidden_act = linear_backward(params_, time2_, silu(tape.temb_hidden), d_temb);
  Vector<Scalar> d_hidden = silu_backward(tape.temb_hidden, d_hidden_act);
  linear_backward(params_, time1_, tape.temb_sin, d_hidden);
}

}  // namespace dseg
