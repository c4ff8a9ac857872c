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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dseg/tensor.hpp"

namespace dseg {

/// An image in [-1, 1] with its exact class mask.
struct LabeledImage {
  Image pixels;
  Mask mask;
  int class_count = 0;

  int height() const { return pixels.height; }
  int width() const { return pixels.width; }

  /// Throws DimensionError / ConfigError when an invariant is broken.
  void validate() const;

  friend bool operator==(const LabeledImage& a, const LabeledImage& b) {
    return a.class_count == b.class_count && a.pixels == b.pixels && a.mask.rows() == b.mask.rows() &&
           a.mask.cols() == b.mask.cols() && (a.mask == b.mask).all();
  }
};

/// Few-shot split: n labeled images, N - n unlabeled ones, and a labeled test set.
struct DatasetSplit {
  std::vector<LabeledImage> labeled_train;
  std::vector<Image> unlabeled;
  std::vector<LabeledImage> test;
  int resolution = 0;
  int class_count = 0;
  std::uint64_t generator_seed = 0;

  void validate() const;
  /// All images the diffusion model may train on (labeled + unlabeled).
  std::vector<Image> all_train_images() const;
};

// Shape classes; index 0 is background.
enum class ShapeKind : int { circle = 1, square, triangle, stripe, diamond, ring, cross };
inline constexpr int kShapeKindCount = 7;

std::vector<std::string> class_names(int class_count);

struct ShapeInstance {
  int class_index = 1;
  double center_x = 0.0;
  double center_y = 0.0;
  double size = 1.0;   // radius-like extent in pixels
  double angle = 0.0;  // radians; used by triangle and stripe
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
};

/// Textured background plus the given shapes painted back to front, no
/// anti-aliasing. Mask pixel = class of the topmost covering shape, else 0.
LabeledImage render_scene(const std::vector<ShapeInstance>& shapes, int resolution, int class_count,
                          std::uint64_t texture_seed);

/// Deterministic in (count, resolution, class_count, seed); image i depends only on (seed, i).
std::vector<LabeledImage> generate_shapes_dataset(int count, int resolution, int class_count, std::uint64_t seed);

/// Generate a full split; images are drawn from one stream in the order labeled, unlabeled, test.
DatasetSplit generate_split(int labeled, int unlabeled, int test, int resolution, int class_count,
                            std::uint64_t seed);

void save_dataset(const DatasetSplit& split, const std::filesystem::path& directory);
DatasetSplit load_dataset(const std::filesystem::path& directory);

enum class CorruptionKind { gaussian_noise, gaussian_blur, brightness, contrast, pixelate };
inline constexpr std::array<CorruptionKind, 5> kAllCorruptions = {
    CorruptionKind::gaussian_noise, CorruptionKind::gaussian_blur, CorruptionKind::brightness,
    CorruptionKind::contrast, CorruptionKind::pixelate};

std::string_view to_string(CorruptionKind kind);
CorruptionKind corruption_from_string(std::string_view name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;  // 1..5
  /// Replaces the table value for this severity (noise std, blur sigma, shift, factor or block size).
  std::optional<double> magnitude_override;

  void validate() const;
};

/// Apply a corruption; the mask is carried over untouched and pixels are re-clamped to [-1, 1].
LabeledImage corrupt(const LabeledImage& image, const CorruptionSpec& spec, std::uint64_t seed);
Image corrupt(const Image& image, const CorruptionSpec& spec, std::uint64_t seed);

}  // namespace dseg
