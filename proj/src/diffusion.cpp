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

#include "dseg/diffusion.hpp"

#include <json.hpp>

#include "dseg/container.hpp"

namespace dseg {

std::vector<TrainingDraw> draw_training_noise(std::size_t batch_size, int channels, int height, int width, int steps,
                                              std::uint64_t seed) {
  std::vector<TrainingDraw> draws;
  draws.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    Rng rng(derive_seed(seed, i, 0));
    std::uniform_int_distribution<int> t_dist(1, steps);
    draws.push_back({t_dist(rng), standard_normal<float>(channels, height, width, derive_seed(seed, i, 1))});
  }
  return draws;
}

namespace {

void require_batch(std::span<const Image> batch) {
  if (batch.empty()) throw ConfigError("epsilon loss needs a non-empty batch");
  for (const auto& img : batch) require_same_shape(img, batch.front(), "epsilon loss batch");
}

}  // namespace

double epsilon_loss(const NoisePredictor<float>& predictor, std::span<const Image> batch,
                    const NoiseSchedule& schedule, std::uint64_t seed) {
  require_batch(batch);
  const auto& first = batch.front();
  const auto draws = draw_training_noise(batch.size(), first.channels, first.height, first.width, schedule.steps(), seed);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto noised = add_noise(batch[i], draws[i].t, draws[i].eps, schedule);
    const Image pred = predictor(noised.x_t, noised.t);
    require_same_shape(pred, draws[i].eps, "epsilon loss prediction");
    const double sq = squared_distance(pred, draws[i].eps);
    if (!std::isfinite(sq)) throw TrainingFault("non-finite loss at batch index " + std::to_string(i));
    total += sq;
  }
  return total / (static_cast<double>(batch.size()) * static_cast<double>(first.size()));
}

double epsilon_loss_backward(UNet<float>& model, std::span<const Image> batch, const NoiseSchedule& schedule,
                             std::uint64_t seed) {
  require_batch(batch);
  const auto& first = batch.front();
  const auto draws = draw_training_noise(batch.size(), first.channels, first.height, first.width, schedule.steps(), seed);
  const double count = static_cast<double>(batch.size()) * static_cast<double>(first.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto noised = add_noise(batch[i], draws[i].t, draws[i].eps, schedule);
    UNetTape<float> tape;
    const Image pred = model.forward_train(noised.x_t, noised.t, tape);
    Image diff(pred.channels, pred.height, pred.width);
    diff.data = pred.data - draws[i].eps.data;
    const double sq = diff.data.cast<double>().squaredNorm();
    if (!std::isfinite(sq)) throw TrainingFault("non-finite loss at batch index " + std::to_string(i));
    total += sq;
    diff.data *= static_cast<float>(2.0 / count);
    model.backward(tape, diff);
  }
  return total / count;
}

DdpmTrainer::DdpmTrainer(UNet<float> model, NoiseSchedule schedule, DdpmTrainingOptions options)
    : model_(std::move(model)),
      schedule_(std::move(schedule)),
      options_(options),
      optimizer_(model_.parameters(), AdamOptions{options.learning_rate}) {
  if (options_.batch_size < 1) throw ConfigError("ddpm batch_size must be positive");
  if (options_.steps < 0) throw ConfigError("ddpm steps must be non-negative");
}

double DdpmTrainer::step(std::span<const Image> images) {
  if (images.empty()) throw ConfigError("ddpm training needs images");
  Rng rng(derive_seed(options_.seed, static_cast<std::uint64_t>(step_), 0));
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  std::vector<Image> batch;
  batch.reserve(options_.batch_size);
  for (int i = 0; i < options_.batch_size; ++i) batch.push_back(images[pick(rng)]);

  auto& params = model_.parameters();
  params.zero_grad();
  double loss = 0.0;
  try {
    loss = epsilon_loss_backward(model_, batch, schedule_, derive_seed(options_.seed, static_cast<std::uint64_t>(step_), 1));
  } catch (const TrainingFault& e) {
    throw TrainingFault("step " + std::to_string(step_) + ": " + e.what());
  }
  for (const auto& p : params) {
    if (!p.grad.allFinite()) throw TrainingFault("non-finite gradient in " + p.name + " at step " + std::to_string(step_));
  }
  optimizer_.step(params);
  ++step_;
  return loss;
}

void DdpmTrainer::run(std::span<const Image> images, const std::function<void(int, double)>& on_step) {
  while (step_ < options_.steps) {
    const double loss = step(images);
    if (on_step) on_step(step_, loss);
  }
}

void DdpmTrainer::save_state(const std::filesystem::path& path) const {
  TensorContainer c;
  c.schedule_steps = static_cast<std::uint32_t>(schedule_.steps());
  c.beta_start = schedule_.beta_start();
  c.beta_end = schedule_.beta_end();
  const auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<std::uint32_t>(params[i].numel());
    const auto& m = optimizer_.first_moments()[i];
    const auto& v = optimizer_.second_moments()[i];
    c.tensors.push_back({"adam.m." + params[i].name, {n}, std::vector<float>(m.data(), m.data() + n)});
    c.tensors.push_back({"adam.v." + params[i].name, {n}, std::vector<float>(v.data(), v.data() + n)});
  }
  c.manifest = nlohmann::json{{"step", step_}, {"adam_step", optimizer_.step_count()}, {"seed", options_.seed}}.dump();
  write_container(path, c);
}

void DdpmTrainer::load_state(const std::filesystem::path& path) {
  TensorContainer c = read_container(path);
  auto& params = model_.parameters();
  if (c.tensors.size() != 2 * params.size() || !c.manifest) throw LoadError("training state mismatch: " + path.string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = c.tensors[2 * i];
    const auto& v = c.tensors[2 * i + 1];
    if (m.name != "adam.m." + params[i].name || v.name != "adam.v." + params[i].name ||
        static_cast<Eigen::Index>(m.values.size()) != params[i].numel()) {
      throw LoadError("training state tensor mismatch at " + params[i].name);
    }
    optimizer_.first_moments()[i] = Eigen::Map<const Vector<float>>(m.values.data(), params[i].numel());
    optimizer_.second_moments()[i] = Eigen::Map<const Vector<float>>(v.values.data(), params[i].numel());
  }
  const auto manifest = nlohmann::json::parse(*c.manifest);
  step_ = manifest.at("step").get<int>();
  optimizer_.set_step_count(manifest.at("adam_step").get<long>());
}

}  // namespace dseg
