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
#include <span>
#include <vector>

#include "dseg/adam.hpp"
#include "dseg/schedule.hpp"
#include "dseg/unet.hpp"

namespace dseg {

/// Any eps_theta(x_t, t).
template <typename Scalar>
using NoisePredictor = std::function<Tensor3<Scalar>(const Tensor3<Scalar>&, int)>;

template <typename Scalar>
NoisePredictor<Scalar> as_predictor(const UNet<Scalar>& model) {
  return [&model](const Tensor3<Scalar>& x, int t) { return model.forward(x, t); };
}

/// The (t, eps) pair drawn for one batch element.
struct TrainingDraw {
  int t = 1;
  Image eps;
};

/// t ~ U{1..T} and eps ~ N(0, I) per batch element, a pure function of seed.
std::vector<TrainingDraw> draw_training_noise(std::size_t batch_size, int channels, int height, int width, int steps,
                                              std::uint64_t seed);

/// Mean squared error between eps and eps_theta(x_t, t) over every element of the batch.
double epsilon_loss(const NoisePredictor<float>& predictor, std::span<const Image> batch,
                    const NoiseSchedule& schedule, std::uint64_t seed);

/// Same loss, plus parameter gradients accumulated into model.parameters().
double epsilon_loss_backward(UNet<float>& model, std::span<const Image> batch, const NoiseSchedule& schedule,
                             std::uint64_t seed);

/// One ancestral step: (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t) + sqrt(beta_t) z,
/// with z = 0 at t = 1.
template <typename Scalar>
Tensor3<Scalar> reverse_step(const NoisePredictor<Scalar>& predictor, const Tensor3<Scalar>& x_t, int t,
                             const NoiseSchedule& schedule, std::uint64_t seed) {
  schedule.require_timestep(t);
  const Tensor3<Scalar> eps_hat = predictor(x_t, t);
  require_same_shape(x_t, eps_hat, "reverse_step");
  const double beta = schedule.beta(t);
  const auto coef = static_cast<Scalar>(beta / std::sqrt(1.0 - schedule.alpha_bar(t)));
  const auto inv_sqrt_alpha = static_cast<Scalar>(1.0 / std::sqrt(schedule.alpha(t)));
  Tensor3<Scalar> out(x_t.channels, x_t.height, x_t.width);
  out.data = inv_sqrt_alpha * (x_t.data - coef * eps_hat.data);
  if (t > 1) {
    const auto sigma = static_cast<Scalar>(std::sqrt(beta));
    out.data += sigma * standard_normal<Scalar>(x_t.channels, x_t.height, x_t.width, seed).data;
  }
  return out;
}

/// Runs reverse_step from t = T down to 1 starting at x_T ~ N(0, I).
template <typename Scalar>
Tensor3<Scalar> sample(const NoisePredictor<Scalar>& predictor, const NoiseSchedule& schedule, int channels,
                       int height, int width, std::uint64_t seed) {
  Tensor3<Scalar> x = standard_normal<Scalar>(channels, height, width, derive_seed(seed, 0));
  for (int t = schedule.steps(); t >= 1; --t) {
    x = reverse_step(predictor, x, t, schedule, derive_seed(seed, static_cast<std::uint64_t>(t)));
    if (!x.all_finite()) throw SamplingFault("non-finite sample at step " + std::to_string(t));
  }
  return x;
}

struct DdpmTrainingOptions {
  int steps = 1000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Owns the model, optimizer and step counter of an unsupervised DDPM run.
/// Batch composition and noise at step s depend only on (seed, s), so a run
/// resumed from a saved state continues exactly like an uninterrupted one.
class DdpmTrainer {
 public:
  DdpmTrainer(UNet<float> model, NoiseSchedule schedule, DdpmTrainingOptions options);

  /// One optimizer step; returns the batch loss. Throws TrainingFault on a
  /// non-finite loss without touching the parameters.
  double step(std::span<const Image> images);

  /// Steps until the configured count; on_step(step, loss) after each one.
  void run(std::span<const Image> images, const std::function<void(int, double)>& on_step = {});

  int completed_steps() const { return step_; }
  const UNet<float>& model() const { return model_; }
  UNet<float>& model() { return model_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const DdpmTrainingOptions& options() const { return options_; }

  /// Optimizer moments and step counter (model weights go to the regular checkpoint).
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  UNet<float> model_;
  NoiseSchedule schedule_;
  DdpmTrainingOptions options_;
  Adam<float> optimizer_;
  int step_ = 0;
};

}  // namespace dseg
