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
#include <functional>
#include <span>
#include <vector>

#include "dseg/features.hpp"
#include "dseg/metrics.hpp"
#include "dseg/mlp.hpp"
#include "dseg/synth_data.hpp"

namespace dseg {

/// Maps an image to per-pixel features. draw_index tells repeated extractions
/// apart (only the resampled noise policy uses it).
using Featurizer = std::function<PixelFeatureVolume(const Image&, std::uint64_t draw_index)>;

Featurizer ddpm_featurizer(const UNet<float>& model, const NoiseSchedule& schedule, FeatureExtractionConfig config);
Featurizer rgb_featurizer();

/// Test images use draw indices from here on so they never share noise with training images.
inline constexpr std::uint64_t kTestDrawOffset = std::uint64_t{1} << 32;

struct SegmentationOptions {
  int ensemble_size = 10;
  /// Empty selects the default widths for the class count.
  std::vector<int> hidden_dims;
  double learning_rate = 1e-3;
  int batch_size = 64;
  double epochs = 4.0;
  bool class_weighting = false;
  int workers = 1;

  void validate() const;
};

MLPConfig resolve_mlp_config(const SegmentationOptions& options, int input_dim, int class_count);

/// Train on precomputed feature volumes.
EnsembleModel fit_ensemble_on_volumes(std::span<const PixelFeatureVolume> volumes, std::span<const Mask> masks,
                                      int class_count, const SegmentationOptions& options, std::uint64_t seed);
/// Pooled-confusion report over precomputed volumes.
MetricsReport evaluate_on_volumes(const EnsembleModel& ensemble, std::span<const PixelFeatureVolume> volumes,
                                  std::span<const Mask> masks);

/// Featurize the labeled images and train the ensemble with master seed `seed`.
EnsembleModel fit_ensemble(const Featurizer& featurizer, std::span<const LabeledImage> train,
                           const SegmentationOptions& options, std::uint64_t seed);

/// Segment every test image and pool the confusions.
MetricsReport evaluate_ensemble(const EnsembleModel& ensemble, const Featurizer& featurizer,
                                std::span<const LabeledImage> test, int workers = 1);

struct SegmentationRun {
  EnsembleModel ensemble;
  MetricsReport report;
};

SegmentationRun run_segmentation(const Featurizer& featurizer, std::span<const LabeledImage> train,
                                 std::span<const LabeledImage> test, const SegmentationOptions& options,
                                 std::uint64_t seed);

/// Seeds of one repetition of an experiment: classifier master seed and
/// extraction noise seed, both derived from the repetition seed.
struct RunSeeds {
  std::uint64_t classifier = 0;
  std::uint64_t noise = 0;
};
RunSeeds run_seeds(std::uint64_t seed);

/// n images drawn without replacement by seed, kept in their original order.
/// n equal to the pool size returns the pool unchanged.
std::vector<LabeledImage> select_labeled(std::span<const LabeledImage> pool, int n, std::uint64_t seed);

}  // namespace dseg
