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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dseg/features.hpp"
#include "dseg/layers.hpp"

namespace dseg {

struct MLPConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims{128, 32};
  int class_count = 0;
  double learning_rate = 1e-3;
  int batch_size = 64;
  double epochs = 4.0;
  std::uint64_t seed = 0;
  bool class_weighting = false;

  void validate() const;
  friend bool operator==(const MLPConfig&, const MLPConfig&) = default;
};

/// Hidden widths (128, 32) below 30 classes, (256, 128) otherwise; Adam at
/// 1e-3, batch 64, 4 epochs.
MLPConfig default_mlp_config(int input_dim, int class_count);

/// Pixel classifier: Linear -> ReLU -> BatchNorm, twice, then a Linear head.
/// Inputs are column-per-sample matrices [input_dim, batch].
template <typename Scalar>
class Mlp {
 public:
  struct Cache {
    Matrix<Scalar> x, z1, n1_hat, n1, z2, n2_hat, n2;
    Vector<Scalar> rstd1, rstd2;
  };

  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  Mlp() = default;
  Mlp(const MLPConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const int h1 = config.hidden_dims[0], h2 = config.hidden_dims[1];
    l1_ = make_linear(params_, "fc1", config.input_dim, h1, rng);
    bn1_ = make_bn("bn1", h1);
    l2_ = make_linear(params_, "fc2", h1, h2, rng);
    bn2_ = make_bn("bn2", h2);
    l3_ = make_linear(params_, "fc3", h2, config.class_count, rng);
  }

  const MLPConfig& config() const { return config_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }

  /// Running-statistics buffers live in the parameter set but never receive gradients.
  static bool is_buffer(const std::string& name) { return name.find("running_") != std::string::npos; }

  /// training = true uses batch statistics (and updates the running ones when update_running is set).
  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool training, Cache* cache = nullptr, bool update_running = true);
  void backward(const Cache& cache, const Matrix<Scalar>& d_logits);

  /// Evaluation-mode argmax per column (lowest class index on exact ties).
  std::vector<int> predict(const Matrix<Scalar>& x) const;

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(config_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i].value = params_[i].value.template cast<Other>();
    return out;
  }

 private:
  struct BnSpec {
    int channels = 0;
    int gamma = -1, beta = -1, running_mean = -1, running_var = -1;
  };

  BnSpec make_bn(const std::string& name, int channels) {
    BnSpec s{channels};
    s.gamma = params_.add(name + ".gamma", {channels});
    s.beta = params_.add(name + ".beta", {channels});
    s.running_mean = params_.add(name + ".running_mean", {channels});
    s.running_var = params_.add(name + ".running_var", {channels});
    params_[s.gamma].value.setOnes();
    params_[s.running_var].value.setOnes();
    return s;
  }

  Matrix<Scalar> dense(const LinearSpec& s, const Matrix<Scalar>& x) const {
    Matrix<Scalar> y = params_.matrix(s.weight, s.out, s.in) * x;
    y.colwise() += params_[s.bias].value;
    return y;
  }

  Matrix<Scalar> dense_backward(const LinearSpec& s, const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
    params_.grad_matrix(s.weight, s.out, s.in).noalias() += dy * x.transpose();
    params_[s.bias].grad += dy.rowwise().sum();
    return params_.matrix(s.weight, s.out, s.in).transpose() * dy;
  }

  Matrix<Scalar> bn_forward(const BnSpec& s, const Matrix<Scalar>& x, bool training, Matrix<Scalar>* x_hat,
                            Vector<Scalar>* rstd_out, bool update_running);
  Matrix<Scalar> bn_backward(const BnSpec& s, const Matrix<Scalar>& x_hat, const Vector<Scalar>& rstd,
                             const Matrix<Scalar>& dy);

  MLPConfig config_;
  ParameterSet<Scalar> params_;
  LinearSpec l1_, l2_, l3_;
  BnSpec bn1_, bn2_;
};

/// Pixels gathered from feature volumes: one column per pixel, plus labels.
struct PixelSamples {
  Matrix<float> features;
  std::vector<int> labels;

  Eigen::Index size() const { return features.cols(); }
};

PixelSamples gather_pixels(std::span<const PixelFeatureVolume> volumes, std::span<const Mask> masks);
/// Column-per-pixel view of one volume.
Matrix<float> pixel_matrix(const PixelFeatureVolume& volume);

/// Mean softmax cross-entropy; d_logits receives d(loss)/d(logits).
template <typename Scalar>
double cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels, const std::vector<double>* class_weights,
                     Matrix<Scalar>* d_logits);

/// Cross-entropy training with Adam; the sample order of every epoch is
/// shuffled from the seed. Deterministic in (samples, config, seed).
Mlp<float> train_member(const PixelSamples& samples, const MLPConfig& config, std::uint64_t seed);

struct EnsembleModel {
  std::vector<Mlp<float>> members;
  MLPConfig config;
  std::vector<std::uint64_t> member_seeds;

  int size() const { return static_cast<int>(members.size()); }
};

/// member i uses seed master_seed + i.
std::vector<std::uint64_t> ensemble_member_seeds(std::uint64_t master_seed, int count);

EnsembleModel train_ensemble(const PixelSamples& samples, const MLPConfig& config, int count,
                             std::uint64_t master_seed, int workers = 1);
EnsembleModel train_ensemble_with_seeds(const PixelSamples& samples, const MLPConfig& config,
                                        std::vector<std::uint64_t> seeds, int workers = 1);

/// Per-pixel mode of the member votes; ties go to the smallest class index.
std::vector<int> majority_vote(std::span<const std::vector<int>> member_votes, int class_count);

/// Members' argmax per column, [member][pixel].
std::vector<std::vector<int>> member_votes(const EnsembleModel& ensemble, const Matrix<float>& pixels);

Mask predict_mask(const EnsembleModel& ensemble, const PixelFeatureVolume& volume);

void save_ensemble(const EnsembleModel& ensemble, const std::filesystem::path& path);
/// When expected_input_dim is given, a mismatch against the stored config is a LoadError.
EnsembleModel load_ensemble(const std::filesystem::path& path, std::optional<int> expected_input_dim = std::nullopt);

}  // namespace dseg
