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

#include <cmath>

#include "dseg/diffusion.hpp"
#include "dseg/synth_data.hpp"

namespace dseg {
namespace {

TEST(Schedule, SingleStepHoldsOneAlphaBar) {
  const auto s = build_schedule(1, 0.3, 0.3);
  ASSERT_EQ(s.steps(), 1);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.7);
}

TEST(Schedule, ConstantBetaIsAPower) {
  const double b = 0.02;
  const auto s = build_schedule(50, b, b);
  for (int t = 1; t <= 50; ++t) EXPECT_NEAR(s.alpha_bar(t) / std::pow(1.0 - b, t), 1.0, 1e-12) << "t=" << t;
}

TEST(Schedule, LinearProductMatchesExtendedPrecisionLoop) {
  const auto s = build_schedule(10, 0.1, 0.2);
  long double product = 1.0L;
  for (int i = 0; i < 10; ++i) product *= 1.0L - (0.1L + (0.2L - 0.1L) * i / 9.0L);
  EXPECT_NEAR(s.alpha_bar(10), static_cast<double>(product), 1e-15);
}

TEST(Schedule, InvariantsHoldExhaustively) {
  const auto s = build_schedule(100, 1e-4, 0.02);
  for (int t = 1; t <= 100; ++t) {
    EXPECT_EQ(s.alpha(t), 1.0 - s.beta(t));
    EXPECT_NEAR(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t), 1e-12 * s.alpha_bar(t));
    if (t > 1) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.alpha_bar(t), 0.0);
  }
  EXPECT_LT(s.alpha_bar(1), 1.0);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(100), 0.02);
}

TEST(Schedule, RejectsInvalidArguments) {
  EXPECT_THROW(build_schedule(0, 0.1, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(10, 0.0, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(10, 0.3, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(10, 0.1, 1.0), ConfigError);
  const auto s = build_schedule(10, 0.1, 0.2);
  EXPECT_THROW(s.alpha_bar(11), ConfigError);
  EXPECT_THROW(s.beta(0), ConfigError);
}

TEST(Schedule, FractionsMapOntoTheStepAxis) {
  const auto s = build_schedule(100, 1e-3, 0.2);
  EXPECT_EQ(s.timestep_from_fraction(0.05), 5);
  EXPECT_EQ(s.timestep_from_fraction(0.15), 15);
  EXPECT_EQ(s.timestep_from_fraction(0.25), 25);
  EXPECT_EQ(s.timestep_from_fraction(0.001), 1);
}

TEST(AddNoise, ZeroNoiseScalesTheSignal) {
  const auto s = build_schedule(100, 1e-4, 0.02);
  const Image x0 = standard_normal<float>(3, 8, 8, 1);
  const auto r = add_noise(x0, 40, Image::Zero(3, 8, 8), s);
  const Eigen::MatrixXf expected = (static_cast<float>(std::sqrt(s.alpha_bar(40))) * x0.data).eval();
  EXPECT_EQ(r.x_t.data, expected);
  EXPECT_EQ(r.t, 40);
}

TEST(AddNoise, ZeroSignalScalesTheNoise) {
  const auto s = build_schedule(100, 1e-4, 0.02);
  const Image eps = standard_normal<float>(3, 8, 8, 2);
  const auto r = add_noise(Image::Zero(3, 8, 8), 70, eps, s);
  const Eigen::MatrixXf expected = (static_cast<float>(std::sqrt(1.0 - s.alpha_bar(70))) * eps.data).eval();
  EXPECT_EQ(r.x_t.data, expected);
  EXPECT_EQ(r.eps, eps);
}

TEST(AddNoise, MatchesScalarLoopOracle) {
  const auto s = build_schedule(100, 1e-4, 0.02);
  const Image x0 = standard_normal<float>(3, 16, 16, 3);
  const Image eps = standard_normal<float>(3, 16, 16, 4);
  const auto r = add_noise(x0, 50, eps, s);
  double ab = 1.0;
  for (int i = 0; i < 50; ++i) ab *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 99.0);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        EXPECT_NEAR(r.x_t(c, y, x), std::sqrt(ab) * x0(c, y, x) + std::sqrt(1.0 - ab) * eps(c, y, x), 1e-6);
}

TEST(AddNoise, IsLinearInSignalAndNoise) {
  const auto s = build_schedule(100, 1e-4, 0.02);
  const Image a = standard_normal<float>(3, 8, 8, 5), b = standard_normal<float>(3, 8, 8, 6);
  const Image e1 = standard_normal<float>(3, 8, 8, 7), e2 = standard_normal<float>(3, 8, 8, 8);
  Image ab(3, 8, 8), e12(3, 8, 8);
  ab.data = a.data + b.data;
  e12.data = e1.data + e2.data;
  const auto sum = add_noise(ab, 30, e12, s);
  const auto r1 = add_noise(a, 30, e1, s), r2 = add_noise(b, 30, e2, s);
  EXPECT_LT((sum.x_t.data - r1.x_t.data - r2.x_t.data).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(AddNoise, MarginalVarianceMatchesOneMinusAlphaBar) {
  const auto s = build_schedule(100, 1e-4, 0.02);
  const Image eps = standard_normal<float>(1, 100, 100, 9);
  const auto r = add_noise(Image::Zero(1, 100, 100), 60, eps, s);
  const double var = r.x_t.data.cast<double>().squaredNorm() / 1e4;
  EXPECT_NEAR(var / (1.0 - s.alpha_bar(60)), 1.0, 0.05);
}

TEST(AddNoise, ShapeMismatchIsADimensionError) {
  const auto s = build_schedule(10, 0.1, 0.2);
  EXPECT_THROW(add_noise(Image::Zero(3, 8, 8), 1, Image::Zero(3, 4, 4), s), DimensionError);
}

TEST(EpsilonLoss, PerfectPredictorGivesZero) {
  const auto s = build_schedule(20, 1e-3, 0.1);
  const std::vector<Image> batch{standard_normal<float>(3, 8, 8, 11)};
  const auto draws = draw_training_noise(1, 3, 8, 8, 20, 42);
  const NoisePredictor<float> oracle = [&](const Image&, int t) {
    EXPECT_EQ(t, draws[0].t);
    return draws[0].eps;
  };
  EXPECT_EQ(epsilon_loss(oracle, batch, s, 42), 0.0);
}

TEST(EpsilonLoss, ZeroPredictorGivesMeanSquaredNoise) {
  const auto s = build_schedule(20, 1e-3, 0.1);
  std::vector<Image> batch(4, Image::Zero(3, 32, 32));  // 12288 elements
  const NoisePredictor<float> zero = [](const Image& x, int) { return Image::Zero(x.channels, x.height, x.width); };
  const double loss = epsilon_loss(zero, batch, s, 3);
  double oracle = 0.0;
  for (const auto& d : draw_training_noise(4, 3, 32, 32, 20, 3)) oracle += d.eps.data.cast<double>().squaredNorm();
  oracle /= 4.0 * 3 * 32 * 32;
  EXPECT_NEAR(loss, oracle, 1e-9);
  EXPECT_NEAR(loss, 1.0, 0.05);
}

TEST(EpsilonLoss, IsDeterministicInTheSeed) {
  const auto s = build_schedule(20, 1e-3, 0.1);
  UNetConfig cfg{8, {1, 2}, 1, 16, 16};
  const auto model = build_unet(cfg, 0);
  const std::vector<Image> batch{standard_normal<float>(3, 16, 16, 1), standard_normal<float>(3, 16, 16, 2)};
  EXPECT_EQ(epsilon_loss(as_predictor(model), batch, s, 5), epsilon_loss(as_predictor(model), batch, s, 5));
}

TEST(EpsilonLoss, NonFiniteLossNamesTheBatchIndex) {
  const auto s = build_schedule(20, 1e-3, 0.1);
  std::vector<Image> batch(3, Image::Zero(3, 4, 4));
  int calls = 0;
  const NoisePredictor<float> bad = [&](const Image& x, int) {
    Image out = Image::Zero(x.channels, x.height, x.width);
    if (calls++ == 2) out.data(0, 0) = std::nanf("");
    return out;
  };
  try {
    epsilon_loss(bad, batch, s, 1);
    FAIL() << "expected a training fault";
  } catch (const TrainingFault& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(EpsilonLoss, DrawsCoverTheStepRange) {
  const auto draws = draw_training_noise(2000, 1, 1, 1, 10, 7);
  std::vector<int> seen(11, 0);
  for (const auto& d : draws) {
    ASSERT_GE(d.t, 1);
    ASSERT_LE(d.t, 10);
    ++seen[d.t];
  }
  for (int t = 1; t <= 10; ++t) EXPECT_GT(seen[t], 100);
}

TEST(ReverseStep, LastStepIsTheDeterministicMean) {
  const auto s = build_schedule(10, 0.1, 0.2);
  const Image x = standard_normal<float>(3, 4, 4, 1);
  const NoisePredictor<float> p = [](const Image& in, int) { return Image::Constant(in.channels, in.height, in.width, 0.5f); };
  EXPECT_EQ(reverse_step(p, x, 1, s, 1), reverse_step(p, x, 1, s, 2));
  EXPECT_NE(reverse_step(p, x, 2, s, 1), reverse_step(p, x, 2, s, 2));
}

TEST(ReverseStep, VanishingBetaWithZeroPredictionIsIdentity) {
  const auto s = build_schedule(2, 1e-12, 1e-12);
  const Image x = standard_normal<float>(3, 4, 4, 1);
  const NoisePredictor<float> zero = [](const Image& in, int) { return Image::Zero(in.channels, in.height, in.width); };
  EXPECT_LT((reverse_step(zero, x, 1, s, 0).data - x.data).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ReverseStep, ScalarMeanMatchesClosedForm) {
  const auto s = build_schedule(4, 0.05, 0.35);
  const int t = 1;  // z = 0, so the output is the mean
  Tensor3<double> x(1, 1, 1);
  x(0, 0, 0) = 0.8;
  const NoisePredictor<double> p = [](const Tensor3<double>&, int) { return Tensor3<double>::Constant(1, 1, 1, -0.3); };
  const double beta = 0.05, alpha = 0.95, alpha_bar = 0.95;
  const double expected = (0.8 - beta / std::sqrt(1.0 - alpha_bar) * -0.3) / std::sqrt(alpha);
  EXPECT_NEAR(reverse_step(p, x, t, s, 0)(0, 0, 0), expected, 1e-14);

  // Interior step: subtract the noise term with the same seed.
  const int t3 = 3;
  const double b3 = s.beta(3), a3 = s.alpha(3), ab3 = s.alpha_bar(3);
  const double z = standard_normal<double>(1, 1, 1, 77)(0, 0, 0);
  const double expected3 = (0.8 - b3 / std::sqrt(1.0 - ab3) * -0.3) / std::sqrt(a3) + std::sqrt(b3) * z;
  EXPECT_NEAR(reverse_step(p, x, t3, s, 77)(0, 0, 0), expected3, 1e-14);
}

TEST(Sample, SingleStepScheduleCallsThePredictorOnce) {
  const auto s = build_schedule(1, 0.1, 0.1);
  int calls = 0;
  const NoisePredictor<float> p = [&](const Image& in, int t) {
    ++calls;
    EXPECT_EQ(t, 1);
    return Image::Zero(in.channels, in.height, in.width);
  };
  sample(p, s, 3, 4, 4, 9);
  EXPECT_EQ(calls, 1);
}

TEST(Sample, IsDeterministicInTheSeed) {
  const auto s = build_schedule(5, 0.01, 0.1);
  const auto model = build_unet(UNetConfig{8, {1, 2}, 1, 16, 16}, 3);
  EXPECT_EQ(sample(as_predictor(model), s, 3, 16, 16, 4), sample(as_predictor(model), s, 3, 16, 16, 4));
}

TEST(Sample, NonFiniteStateRaisesWithTheStep) {
  const auto s = build_schedule(5, 0.01, 0.1);
  const NoisePredictor<float> p = [](const Image& in, int t) {
    return Image::Constant(in.channels, in.height, in.width, t == 3 ? std::numeric_limits<float>::infinity() : 0.f);
  };
  try {
    sample(p, s, 3, 4, 4, 1);
    FAIL() << "expected a sampling fault";
  } catch (const SamplingFault& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Trainer, FiftyStepsReduceTheLoss) {
  const auto data = generate_shapes_dataset(16, 16, 3, 5);
  std::vector<Image> images;
  for (const auto& d : data) images.push_back(d.pixels);
  DdpmTrainer trainer(build_unet(UNetConfig{8, {1, 2}, 1, 16, 16}, 0), build_schedule(50, 1e-3, 0.2),
                      DdpmTrainingOptions{50, 8, 2e-3, 1});
  std::vector<double> losses;
  trainer.run(images, [&](int, double loss) { losses.push_back(loss); });
  ASSERT_EQ(losses.size(), 50u);
  double tail = 0.0;
  for (int i = 40; i < 50; ++i) tail += losses[i] / 10.0;
  EXPECT_LT(tail, losses.front());
}

TEST(Trainer, ResumeReproducesTheUninterruptedRun) {
  const auto data = generate_shapes_dataset(8, 16, 3, 6);
  std::vector<Image> images;
  for (const auto& d : data) images.push_back(d.pixels);
  const auto cfg = UNetConfig{8, {1, 2}, 1, 16, 16};
  const auto schedule = build_schedule(20, 1e-3, 0.2);
  const DdpmTrainingOptions options{6, 4, 1e-3, 2};

  DdpmTrainer full(build_unet(cfg, 0), schedule, options);
  std::vector<double> reference;
  full.run(images, [&](int, double l) { reference.push_back(l); });

  const auto dir = std::filesystem::temp_directory_path() / "dseg_resume_test";
  std::filesystem::create_directories(dir);
  DdpmTrainer first(build_unet(cfg, 0), schedule, options);
  for (int i = 0; i < 3; ++i) first.step(images);
  save_checkpoint(first.model(), schedule, dir / "ckpt.dseg");
  first.save_state(dir / "state.dseg");

  auto [model, loaded_schedule] = load_checkpoint(dir / "ckpt.dseg");
  DdpmTrainer resumed(std::move(model), loaded_schedule, options);
  resumed.load_state(dir / "state.dseg");
  EXPECT_EQ(resumed.completed_steps(), 3);
  for (int i = 3; i < 6; ++i) EXPECT_EQ(resumed.step(images), reference[i]) << "step " << i;
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace dseg
