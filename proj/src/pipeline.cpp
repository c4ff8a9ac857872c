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

#include "dseg/pipeline.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <thread>

namespace dseg {

Featurizer ddpm_featurizer(const UNet<float>& model, const NoiseSchedule& schedule, FeatureExtractionConfig config) {
  config.validate(model.decoder_block_count(), schedule.steps());
  return [&model, &schedule, config](const Image& image, std::uint64_t draw_index) {
    return extract_features(model, schedule, image, config, draw_index);
  };
}

Featurizer rgb_featurizer() {
  return [](const Image& image, std::uint64_t) { return rgb_features(image); };
}

void SegmentationOptions::validate() const {
  if (ensemble_size < 1) throw ConfigError("ensemble size must be >= 1");
  if (!hidden_dims.empty() && hidden_dims.size() != 2) throw ConfigError("hidden_dims needs two entries");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

MLPConfig resolve_mlp_config(const SegmentationOptions& options, int input_dim, int class_count) {
  options.validate();
  MLPConfig c = default_mlp_config(input_dim, class_count);
  if (!options.hidden_dims.empty()) c.hidden_dims = options.hidden_dims;
  c.learning_rate = options.learning_rate;
  c.batch_size = options.batch_size;
  c.epochs = options.epochs;
  c.class_weighting = options.class_weighting;
  c.validate();
  return c;
}

EnsembleModel fit_ensemble(const Featurizer& featurizer, std::span<const LabeledImage> train,
                           const SegmentationOptions& options, std::uint64_t seed) {
  if (train.empty()) throw ConfigError("no labeled training images");
  std::vector<PixelFeatureVolume> volumes;
  std::vector<Mask> masks;
  volumes.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    volumes.push_back(featurizer(train[i].pixels, i));
    masks.push_back(train[i].mask);
  }
  return fit_ensemble_on_volumes(volumes, masks, train.front().class_count, options, seed);
}

EnsembleModel fit_ensemble_on_volumes(std::span<const PixelFeatureVolume> volumes, std::span<const Mask> masks,
                                      int class_count, const SegmentationOptions& options, std::uint64_t seed) {
  const PixelSamples samples = gather_pixels(volumes, masks);
  MLPConfig config = resolve_mlp_config(options, static_cast<int>(samples.features.rows()), class_count);
  config.seed = seed;
  return train_ensemble(samples, config, options.ensemble_size, seed, options.workers);
}

MetricsReport evaluate_on_volumes(const EnsembleModel& ensemble, std::span<const PixelFeatureVolume> volumes,
                                  std::span<const Mask> masks) {
  if (volumes.size() != masks.size()) throw DimensionError("evaluate_on_volumes: volume/mask count mismatch");
  if (volumes.empty()) throw ConfigError("no test volumes");
  const int k = ensemble.config.class_count;
  ConfusionMatrix total = ConfusionMatrix::Zero(k, k);
  for (std::size_t i = 0; i < volumes.size(); ++i) total += confusion_matrix(predict_mask(ensemble, volumes[i]), masks[i], k);
  return report_from_confusion(total);
}

MetricsReport evaluate_ensemble(const EnsembleModel& ensemble, const Featurizer& featurizer,
                                std::span<const LabeledImage> test, int workers) {
  if (test.empty()) throw ConfigError("no test images");
  const int k = ensemble.config.class_count;
  std::vector<ConfusionMatrix> parts(test.size());
  auto work = [&](std::size_t i) {
    const Mask pred = predict_mask(ensemble, featurizer(test[i].pixels, kTestDrawOffset + i));
    parts[i] = confusion_matrix(pred, test[i].mask, k);
  };
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(test.size())));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < test.size(); ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(n_workers);
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < test.size(); i += n_workers) work(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  ConfusionMatrix total = ConfusionMatrix::Zero(k, k);
  for (const auto& p : parts) total += p;
  return report_from_confusion(total);
}

SegmentationRun run_segmentation(const Featurizer& featurizer, std::span<const LabeledImage> train,
                                 std::span<const LabeledImage> test, const SegmentationOptions& options,
                                 std::uint64_t seed) {
  SegmentationRun run;
  run.ensemble = fit_ensemble(featurizer, train, options, seed);
  run.report = evaluate_ensemble(run.ensemble, featurizer, test, options.workers);
  return run;
}

RunSeeds run_seeds(std::uint64_t seed) { return {derive_seed(seed, 0xc1a55), derive_seed(seed, 0x0153)}; }

std::vector<LabeledImage> select_labeled(std::span<const LabeledImage> pool, int n, std::uint64_t seed) {
  if (n < 1 || static_cast<std::size_t>(n) > pool.size()) {
    throw ConfigError("label budget " + std::to_string(n) + " outside [1, " + std::to_string(pool.size()) + "]");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (static_cast<std::size_t>(n) < pool.size()) {
    Rng rng(derive_seed(seed, 0x1abe1));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(n);
    std::sort(order.begin(), order.end());
  }
  std::vector<LabeledImage> out;
  for (auto i : order) out.push_back(pool[i]);
  return out;
}

}  // namespace dseg
