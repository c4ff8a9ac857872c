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

#include "dseg/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "dseg/corruption_table.hpp"
#include "dseg/png_io.hpp"
#include "dseg/random.hpp"

namespace dseg {
namespace {

constexpr const char* kShapeNames[kShapeKindCount] = {"circle", "square", "triangle", "stripe",
                                                      "diamond", "ring", "cross"};

constexpr double kTextureAmplitude = 0.3;
constexpr double kHueSpread = 0.9;  // hue sectors, out of 6
constexpr double kPixelNoise = 0.3;

void check_generation_args(int resolution, int class_count) {
  if (resolution < 16 || resolution % 8 != 0) {
    throw ConfigError("resolution must be >= 16 and divisible by 8, got " + std::to_string(resolution));
  }
  if (class_count < 3 || class_count > kShapeKindCount + 1) {
    throw ConfigError("class_count must be in [3, " + std::to_string(kShapeKindCount + 1) + "], got " +
                      std::to_string(class_count));
  }
}

// Point (px, py) relative to the shape center, in pixels.
bool covers(const ShapeInstance& s, double px, double py) {
  const double dx = px - s.center_x;
  const double dy = py - s.center_y;
  const double r = s.size;
  const double c = std::cos(s.angle);
  const double sn = std::sin(s.angle);
  const double u = c * dx + sn * dy;  // rotated frame
  const double v = -sn * dx + c * dy;
  switch (static_cast<ShapeKind>(s.class_index)) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::square:
      return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    case ShapeKind::triangle: {
      // Equilateral, circumradius r, apex pointing up in the rotated frame.
      const double h = 1.5 * r;
      const double top = -r;
      const double yv = v - top;
      if (yv < 0.0 || yv > h) return false;
      const double half_width = (yv / h) * (r * std::sqrt(3.0) / 2.0) * 1.0;
      return std::abs(u) <= half_width;
    }
    case ShapeKind::stripe:
      return std::abs(u) <= 1.4 * r && std::abs(v) <= 0.4 * r;
    case ShapeKind::diamond:
      return std::abs(dx) + std::abs(dy) <= 1.1 * r;
    case ShapeKind::ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
    case ShapeKind::cross:
      return (std::abs(dx) <= 0.3 * r && std::abs(dy) <= r) || (std::abs(dy) <= 0.3 * r && std::abs(dx) <= r);
  }
  return false;
}

// Brightness pattern of a class interior, in the shape's rotated frame. Colors come from
// one shared palette, so the pattern is what tells classes apart locally.
double interior_texture(ShapeKind kind, double u, double v) {
  constexpr double kTau = 2.0 * std::numbers::pi;
  switch (kind) {
    case ShapeKind::circle: return std::sin(kTau * std::hypot(u, v) / 5.0);
    case ShapeKind::square: return std::sin(kTau * u / 6.0) * std::sin(kTau * v / 6.0) > 0.0 ? 1.0 : -1.0;
    case ShapeKind::triangle: return std::sin(kTau * (u + v) / 5.0);
    case ShapeKind::stripe: return std::sin(kTau * u / 4.0);
    case ShapeKind::diamond: return std::cos(kTau * u / 5.0) + std::cos(kTau * v / 5.0) > 1.0 ? 1.0 : -0.5;
    case ShapeKind::ring: return std::sin(6.0 * std::atan2(v, u));
    case ShapeKind::cross: return 0.0;
  }
  return 0.0;
}

// Saturated color around the class's own hue, spread far enough that
// neighboring classes overlap.
Eigen::Vector3f random_color(Rng& rng, int class_index, int class_count) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double center = 6.0 * (class_index - 1) / (class_count - 1);
  const double hue = std::fmod(center + kHueSpread * (2.0 * unit(rng) - 1.0) + 12.0, 6.0);
  const double sat = 0.75 + 0.25 * unit(rng);
  const double val = 0.75 + 0.25 * unit(rng);
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double p = val * (1 - sat), q = val * (1 - sat * f), t = val * (1 - sat * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = val, g = t, b = p; break;
    case 1: r = q, g = val, b = p; break;
    case 2: r = p, g = val, b = t; break;
    case 3: r = p, g = q, b = val; break;
    case 4: r = t, g = p, b = val; break;
    default: r = val, g = p, b = q; break;
  }
  return Eigen::Vector3f(static_cast<float>(2 * r - 1), static_cast<float>(2 * g - 1), static_cast<float>(2 * b - 1));
}

Image render_background(int resolution, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gray = -0.6 + 0.8 * unit(rng);
  Eigen::Vector3d tint(0.1 * normal(rng), 0.1 * normal(rng), 0.1 * normal(rng));
  const double freq = (2.0 + 4.0 * unit(rng)) * 2.0 * std::numbers::pi / resolution;
  const double theta = std::numbers::pi * unit(rng);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double amplitude = 0.08 + 0.1 * unit(rng);
  Image img(3, resolution, resolution);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double wave = amplitude * std::sin(freq * (std::cos(theta) * x + std::sin(theta) * y) + phase);
      for (int c = 0; c < 3; ++c) {
        img(c, y, x) = static_cast<float>(gray + tint[c] + wave + 0.03 * normal(rng));
      }
    }
  }
  return img;
}

std::vector<ShapeInstance> random_shapes(int resolution, int class_count, Rng& rng) {
  std::uniform_int_distribution<int> count_dist(1, 4);
  std::uniform_int_distribution<int> class_dist(1, class_count - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int count = count_dist(rng);
  std::vector<ShapeInstance> shapes;
  for (int i = 0; i < count; ++i) {
    ShapeInstance s;
    s.class_index = class_dist(rng);
    s.size = resolution * (0.14 + 0.12 * unit(rng));
    s.angle = static_cast<ShapeKind>(s.class_index) == ShapeKind::stripe ? std::numbers::pi * unit(rng)
                                                                         : 0.5 * (unit(rng) - 0.5);
    s.color = random_color(rng, s.class_index, class_count);
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      const double margin = 0.5 * s.size;
      s.center_x = margin + (resolution - 2 * margin) * unit(rng);
      s.center_y = margin + (resolution - 2 * margin) * unit(rng);
      placed = std::all_of(shapes.begin(), shapes.end(), [&](const ShapeInstance& o) {
        const double d = std::hypot(o.center_x - s.center_x, o.center_y - s.center_y);
        return d >= 0.8 * std::max(o.size, s.size);
      });
    }
    if (placed) shapes.push_back(s);
  }
  return shapes;
}

LabeledImage generate_one(int resolution, int class_count, std::uint64_t image_seed) {
  Rng rng(image_seed);
  auto shapes = random_shapes(resolution, class_count, rng);
  return render_scene(shapes, resolution, class_count, rng());
}

std::string image_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  Raster raster(static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 1);
  for (int y = 0; y < mask.rows(); ++y)
    for (int x = 0; x < mask.cols(); ++x) raster.at(x, y, 0) = static_cast<std::uint8_t>(mask(y, x));
  write_png(path, raster);
}

Image load_image_file(const std::filesystem::path& path, int resolution) {
  Raster raster = read_png(path);
  if (raster.channels != 3 || raster.width != resolution || raster.height != resolution) {
    throw LoadError("dimension mismatch in " + path.string());
  }
  return raster_to_image(raster);
}

Mask load_mask_file(const std::filesystem::path& path, int resolution, int class_count) {
  Raster raster = read_png(path);
  if (raster.channels != 1 || raster.width != resolution || raster.height != resolution) {
    throw LoadError("dimension mismatch in " + path.string());
  }
  Mask mask(resolution, resolution);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const int v = raster.at(x, y, 0);
      if (v >= class_count) {
        throw LoadError("mask value " + std::to_string(v) + " >= class_count " + std::to_string(class_count) +
                        " in " + path.string());
      }
      mask(y, x) = v;
    }
  }
  return mask;
}

double table_value(const CorruptionSpec& spec) {
  if (spec.magnitude_override) return *spec.magnitude_override;
  const auto i = static_cast<std::size_t>(spec.severity - 1);
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: return corruption_table::kNoiseStd[i];
    case CorruptionKind::gaussian_blur: return corruption_table::kBlurSigma[i];
    case CorruptionKind::brightness: return corruption_table::kBrightnessShift[i];
    case CorruptionKind::contrast: return corruption_table::kContrastFactor[i];
    case CorruptionKind::pixelate: return corruption_table::kPixelateBlock[i];
  }
  return 0.0;
}

Image gaussian_blur(const Image& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) k /= total;
  auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  Image tmp(in.channels, in.height, in.width), out(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * in(c, y, clampi(x + i, in.width));
        tmp(c, y, x) = static_cast<float>(acc);
      }
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(c, clampi(y + i, in.height), x);
        out(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

Image pixelate(const Image& in, int block) {
  if (block <= 1) return in;
  Image out(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c)
    for (int by = 0; by < in.height; by += block)
      for (int bx = 0; bx < in.width; bx += block) {
        const int ey = std::min(by + block, in.height), ex = std::min(bx + block, in.width);
        double acc = 0.0;
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) acc += in(c, y, x);
        const auto mean = static_cast<float>(acc / ((ey - by) * (ex - bx)));
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) out(c, y, x) = mean;
      }
  return out;
}

}  // namespace

void LabeledImage::validate() const {
  if (class_count < 1) throw ConfigError("class_count must be positive");
  if (mask.rows() != pixels.height || mask.cols() != pixels.width) {
    throw DimensionError("mask " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         " does not match pixels " + shape_string(pixels));
  }
  if (mask.size() > 0 && (mask.minCoeff() < 0 || mask.maxCoeff() >= class_count)) {
    throw ConfigError("mask entries must lie in [0, class_count)");
  }
  if (!pixels.all_finite() || (pixels.size() > 0 && (pixels.data.minCoeff() < -1.0f || pixels.data.maxCoeff() > 1.0f))) {
    throw ConfigError("pixels must be finite and within [-1, 1]");
  }
}

void DatasetSplit::validate() const {
  if (labeled_train.size() > labeled_train.size() + unlabeled.size()) throw ConfigError("n > N");
  auto check = [&](const Image& img) {
    if (img.channels != 3 || img.height != resolution || img.width != resolution) {
      throw DimensionError("split image " + shape_string(img) + " does not match resolution " +
                           std::to_string(resolution));
    }
  };
  for (const auto& li : labeled_train) {
    check(li.pixels);
    if (li.class_count != class_count) throw ConfigError("labeled image class_count mismatch");
    li.validate();
  }
  for (const auto& img : unlabeled) check(img);
  for (const auto& li : test) {
    check(li.pixels);
    if (li.class_count != class_count) throw ConfigError("test image class_count mismatch");
    li.validate();
  }
}

std::vector<Image> DatasetSplit::all_train_images() const {
  std::vector<Image> out;
  out.reserve(labeled_train.size() + unlabeled.size());
  for (const auto& li : labeled_train) out.push_back(li.pixels);
  out.insert(out.end(), unlabeled.begin(), unlabeled.end());
  return out;
}

std::vector<std::string> class_names(int class_count) {
  std::vector<std::string> names{"background"};
  for (int k = 1; k < class_count && k <= kShapeKindCount; ++k) names.emplace_back(kShapeNames[k - 1]);
  return names;
}

LabeledImage render_scene(const std::vector<ShapeInstance>& shapes, int resolution, int class_count,
                          std::uint64_t texture_seed) {
  check_generation_args(resolution, class_count);
  LabeledImage out;
  out.class_count = class_count;
  out.pixels = render_background(resolution, texture_seed);
  out.mask = Mask::Zero(resolution, resolution);
  Rng shade_rng(derive_seed(texture_seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& s : shapes) {
    if (s.class_index < 1 || s.class_index >= class_count) throw ConfigError("shape class outside [1, K)");
    const auto kind = static_cast<ShapeKind>(s.class_index);
    // Gentle linear shading plus the class pattern.
    const double gx = 0.004 * normal(shade_rng), gy = 0.004 * normal(shade_rng);
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        if (!covers(s, px, py)) continue;
        const double dx = px - s.center_x, dy = py - s.center_y;
        const double u = std::cos(s.angle) * dx + std::sin(s.angle) * dy;
        const double v = -std::sin(s.angle) * dx + std::cos(s.angle) * dy;
        const double shade = gx * dx + gy * dy + kTextureAmplitude * interior_texture(kind, u, v);
        for (int c = 0; c < 3; ++c) out.pixels(c, y, x) = static_cast<float>(s.color[c] + shade);
        out.mask(y, x) = s.class_index;
      }
    }
  }
  // Sensor-like per-pixel noise over the whole frame.
  for (Eigen::Index i = 0; i < out.pixels.data.size(); ++i)
    out.pixels.data.data()[i] += static_cast<float>(kPixelNoise * normal(shade_rng));
  out.pixels.data = out.pixels.data.cwiseMax(-1.0f).cwiseMin(1.0f);
  return out;
}

std::vector<LabeledImage> generate_shapes_dataset(int count, int resolution, int class_count, std::uint64_t seed) {
  if (count <= 0) throw ConfigError("count must be positive");
  check_generation_args(resolution, class_count);
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(generate_one(resolution, class_count, derive_seed(seed, i)));
  return out;
}

DatasetSplit generate_split(int labeled, int unlabeled, int test, int resolution, int class_count, std::uint64_t seed) {
  if (labeled < 0 || unlabeled < 0 || test < 0 || labeled + unlabeled + test == 0) {
    throw ConfigError("split sizes must be non-negative and not all zero");
  }
  auto images = generate_shapes_dataset(labeled + unlabeled + test, resolution, class_count, seed);
  DatasetSplit split;
  split.resolution = resolution;
  split.class_count = class_count;
  split.generator_seed = seed;
  for (int i = 0; i < labeled; ++i) split.labeled_train.push_back(std::move(images[i]));
  for (int i = 0; i < unlabeled; ++i) split.unlabeled.push_back(std::move(images[labeled + i].pixels));
  for (int i = 0; i < test; ++i) split.test.push_back(std::move(images[labeled + unlabeled + i]));
  return split;
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  split.validate();
  fs::create_directories(directory / "images");
  fs::create_directories(directory / "masks");
  nlohmann::json membership = {{"labeled_train", nlohmann::json::array()},
                               {"unlabeled", nlohmann::json::array()},
                               {"test", nlohmann::json::array()}};
  std::size_t next = 0;
  auto put_labeled = [&](const LabeledImage& li, const char* bucket) {
    const auto id = image_id(next++);
    write_png(directory / "images" / (id + ".png"), image_to_raster(li.pixels));
    write_mask_png(directory / "masks" / (id + ".png"), li.mask);
    membership[bucket].push_back(id);
  };
  for (const auto& li : split.labeled_train) put_labeled(li, "labeled_train");
  for (const auto& img : split.unlabeled) {
    const auto id = image_id(next++);
    write_png(directory / "images" / (id + ".png"), image_to_raster(img));
    membership["unlabeled"].push_back(id);
  }
  for (const auto& li : split.test) put_labeled(li, "test");

  nlohmann::json manifest = {{"resolution", split.resolution},
                             {"class_count", split.class_count},
                             {"class_names", class_names(split.class_count)},
                             {"splits", membership},
                             {"generator_seed", split.generator_seed}};
  std::ofstream(directory / "manifest.json") << manifest.dump(2) << '\n';
}

DatasetSplit load_dataset(const std::filesystem::path& directory) {
  const auto manifest_path = directory / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("missing manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  DatasetSplit split;
  try {
    split.resolution = manifest.at("resolution").get<int>();
    split.class_count = manifest.at("class_count").get<int>();
    split.generator_seed = manifest.value("generator_seed", std::uint64_t{0});
    const auto& splits = manifest.at("splits");
    auto labeled = [&](const std::string& id) {
      LabeledImage li;
      li.class_count = split.class_count;
      li.pixels = load_image_file(directory / "images" / (id + ".png"), split.resolution);
      li.mask = load_mask_file(directory / "masks" / (id + ".png"), split.resolution, split.class_count);
      return li;
    };
    for (const auto& id : splits.at("labeled_train")) split.labeled_train.push_back(labeled(id.get<std::string>()));
    for (const auto& id : splits.at("unlabeled")) {
      split.unlabeled.push_back(load_image_file(directory / "images" / (id.get<std::string>() + ".png"), split.resolution));
    }
    for (const auto& id : splits.at("test")) split.test.push_back(labeled(id.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("manifest " + manifest_path.string() + ": " + e.what());
  }
  return split;
}

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::gaussian_blur: return "gaussian_blur";
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::pixelate: return "pixelate";
  }
  return "unknown";
}

CorruptionKind corruption_from_string(std::string_view name) {
  for (auto kind : kAllCorruptions)
    if (to_string(kind) == name) return kind;
  throw ConfigError("unknown corruption kind: " + std::string(name));
}

void CorruptionSpec::validate() const {
  if (severity < 1 || severity > 5) throw ConfigError("severity must be in 1..5, got " + std::to_string(severity));
}

Image corrupt(const Image& image, const CorruptionSpec& spec, std::uint64_t seed) {
  spec.validate();
  const double m = table_value(spec);
  Image out = image;
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise:
      if (m > 0.0) out.data += (m * standard_normal<double>(image.channels, image.height, image.width, seed).data)
                                   .template cast<float>();
      break;
    case CorruptionKind::gaussian_blur:
      out = gaussian_blur(image, m);
      break;
    case CorruptionKind::brightness:
      out.data.array() += static_cast<float>(m);
      break;
    case CorruptionKind::contrast:
      for (int c = 0; c < image.channels; ++c) {
        const float mean = image.data.row(c).mean();
        out.data.row(c) = ((image.data.row(c).array() - mean) * static_cast<float>(m) + mean).matrix();
      }
      break;
    case CorruptionKind::pixelate:
      out = pixelate(image, static_cast<int>(std::lround(m)));
      break;
  }
  out.data = out.data.cwiseMax(-1.0f).cwiseMin(1.0f);
  return out;
}

LabeledImage corrupt(const LabeledImage& image, const CorruptionSpec& spec, std::uint64_t seed) {
  LabeledImage out;
  out.class_count = image.class_count;
  out.mask = image.mask;
  out.pixels = corrupt(image.pixels, spec, seed);
  return out;
}

}  // namespace dseg
