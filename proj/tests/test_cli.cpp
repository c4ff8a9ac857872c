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

#include <json.hpp>

#include "../tools/cli.hpp"
#include "dseg/container.hpp"
#include "dseg/png_io.hpp"
#include "dseg/run_config.hpp"
#include "test_util.hpp"

namespace dseg {
namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dseg");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

// A run small enough to go through every command in seconds.
std::vector<std::string> tiny_run(const std::filesystem::path& out) {
  return {"--set",
          "output_dir=" + out.string(),
          "run_name=smoke",
          "dataset.resolution=16",
          "dataset.class_count=3",
          "dataset.labeled=4",
          "dataset.unlabeled=4",
          "dataset.test=2",
          "schedule.steps=20",
          "unet.base_channels=4",
          "unet.channel_multipliers=[1,2]",
          "unet.blocks_per_resolution=1",
          "unet.time_embedding_dim=8",
          "ddpm.steps=4",
          "ddpm.batch_size=2",
          "ddpm.checkpoint_every=2",
          "ddpm.sample_every=4",
          "ddpm.sample_count=2",
          "classifier.ensemble_size=2",
          "classifier.hidden_dims=[8,8]",
          "experiment.seeds=[0]",
          "experiment.probe_timestep_fractions=[0.1,0.9]",
          "experiment.label_budgets=[2,4]",
          "experiment.corruptions=[\"contrast\"]",
          "experiment.severities=[1,5]",
          "experiment.kmeans_images=2",
          "experiment.kmeans_k=2"};
}

std::vector<std::string> with(std::vector<std::string> base, std::initializer_list<std::string> tail) {
  base.insert(base.end(), tail);
  return base;
}

TEST(Cli, UnknownFlagIsAUsageError) {
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run_cli({"--bogus", "show-config"}), 2);
  EXPECT_EQ(run_cli({}), 2);
  ::testing::internal::GetCapturedStderr();
}

TEST(Cli, HelpListsEverySubcommand) {
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(run_cli({"--help"}), 0);
  const std::string text = ::testing::internal::GetCapturedStdout();
  for (const char* cmd : {"gen-data", "train-ddpm", "extract", "train-seg", "segment", "evaluate", "probe", "kmeans",
                          "ablate-noise", "sweep-labels", "robustness"})
    EXPECT_NE(text.find(cmd), std::string::npos) << cmd;
}

TEST(Cli, BadConfigValueIsAConfigError) {
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run_cli({"--set", "extraction.timestep_fractions=[1.5]", "show-config"}), 2);
  EXPECT_EQ(run_cli({"--set", "no_such_field=1", "show-config"}), 2);
  ::testing::internal::GetCapturedStderr();
}

TEST(Cli, OverridesReachTheResolvedConfig) {
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(run_cli({"--set", "ddpm.steps=7", "run_name=abc", "show-config"}), 0);
  const auto j = nlohmann::json::parse(::testing::internal::GetCapturedStdout());
  EXPECT_EQ(j.at("ddpm").at("steps"), 7);
  EXPECT_EQ(j.at("run_name"), "abc");
}

TEST(Cli, ProfileDocumentLayersDefaultsThenProfile) {
  const auto dir = test::scratch_dir("cli_profile");
  le::write_file_atomic(dir / "p.json", R"({"defaults": {"ddpm": {"steps": 11}, "run_name": "base"},
                                            "quick": {"ddpm": {"batch_size": 3}}})");
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(run_cli({"-c", (dir / "p.json").string(), "-p", "quick", "show-config"}), 0);
  const auto j = nlohmann::json::parse(::testing::internal::GetCapturedStdout());
  EXPECT_EQ(j.at("ddpm").at("steps"), 11);
  EXPECT_EQ(j.at("ddpm").at("batch_size"), 3);
  EXPECT_EQ(j.at("run_name"), "base");
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run_cli({"-c", (dir / "p.json").string(), "-p", "slow", "show-config"}), 2);
  EXPECT_EQ(run_cli({"-p", "quick", "show-config"}), 2);
  ::testing::internal::GetCapturedStderr();
}

TEST(Cli, ShippedProfilesResolve) {
  const std::filesystem::path file = DSEG_SOURCE_DIR "/configs/dseg.json";
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(run_cli({"-c", file.string(), "show-config"}), 0);
  EXPECT_EQ(run_cli({"-c", file.string(), "-p", "smoke", "show-config"}), 0);
  ::testing::internal::GetCapturedStdout();
}

TEST(Cli, MissingInputsAreRuntimeFaults) {
  const auto out = test::scratch_dir("cli_missing");
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run_cli(with(tiny_run(out), {"train-ddpm"})), 1);
  ::testing::internal::GetCapturedStderr();
}

TEST(Cli, SmokeRunProducesEveryArtifact) {
  const auto out = test::scratch_dir("cli_smoke");
  const auto base = tiny_run(out);
  const auto run = out / "smoke";
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  for (const char* cmd : {"gen-data", "train-ddpm", "extract", "train-seg", "evaluate"})
    ASSERT_EQ(run_cli(with(base, {cmd})), 0) << cmd;

  EXPECT_TRUE(std::filesystem::exists(run / "data" / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(run / "ddpm.dseg"));
  EXPECT_TRUE(std::filesystem::exists(run / "loss.csv"));
  const auto sample = run / "samples" / "step_000004.png";
  ASSERT_TRUE(std::filesystem::exists(sample));
  EXPECT_GT(read_png(sample).width, 0);
  EXPECT_TRUE(std::filesystem::exists(run / "features" / "labeled" / "000000.ddpf"));
  EXPECT_TRUE(std::filesystem::exists(run / "ensemble.dseg"));
  std::ifstream rf(run / "eval" / "report.json");
  const auto report = nlohmann::json::parse(rf);
  const double miou = report.at("mean_iou").get<double>();
  EXPECT_GE(miou, 0.0);
  EXPECT_LE(miou, 1.0);
  EXPECT_TRUE(std::filesystem::exists(run / "eval" / "per_class_iou.csv"));

  // Resuming past the end continues from the saved optimizer state.
  EXPECT_EQ(run_cli(with(base, {"--set", "ddpm.steps=6", "train-ddpm", "--resume"})), 0);

  const auto image = (run / "data" / "images" / "000009.png").string();
  EXPECT_EQ(run_cli(with(base, {"segment", image})), 0);
  EXPECT_TRUE(std::filesystem::exists(run / "segment" / "000009_mask.png"));
  EXPECT_TRUE(std::filesystem::exists(run / "segment" / "000009_panel.png"));

  for (const char* cmd : {"probe", "kmeans", "ablate-noise", "sweep-labels", "robustness"})
    EXPECT_EQ(run_cli(with(base, {cmd})), 0) << cmd;
  ::testing::internal::GetCapturedStdout();
  ::testing::internal::GetCapturedStderr();

  std::ifstream pf(run / "run.json");
  const auto prov = nlohmann::json::parse(pf);
  EXPECT_TRUE(prov.contains("config_hash"));
  EXPECT_TRUE(prov.at("commands").contains("train-ddpm"));
  EXPECT_TRUE(prov.at("commands").contains("evaluate"));
  EXPECT_TRUE(std::filesystem::exists(run / "ablate_noise" / "noise_ablation.csv"));
  EXPECT_TRUE(std::filesystem::exists(run / "kmeans" / "clusters.png"));
  EXPECT_TRUE(std::filesystem::exists(run / "probe" / "area_split.json"));
}

TEST(Cli, RepeatedCommandsRewriteIdenticalBytes) {
  const auto out = test::scratch_dir("cli_idem");
  const auto base = tiny_run(out);
  const auto run = out / "smoke";
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  for (const char* cmd : {"gen-data", "train-ddpm", "extract", "train-seg", "evaluate"}) ASSERT_EQ(run_cli(with(base, {cmd})), 0);
  const auto first_ckpt = le::read_file(run / "ddpm.dseg");
  const auto first_report = le::read_file(run / "eval" / "report.json");
  const auto first_features = le::read_file(run / "features" / "labeled" / "000001.ddpf");
  for (const char* cmd : {"train-ddpm", "extract", "train-seg", "evaluate"}) ASSERT_EQ(run_cli(with(base, {cmd})), 0);
  ::testing::internal::GetCapturedStdout();
  ::testing::internal::GetCapturedStderr();
  EXPECT_EQ(le::read_file(run / "ddpm.dseg"), first_ckpt);
  EXPECT_EQ(le::read_file(run / "eval" / "report.json"), first_report);
  EXPECT_EQ(le::read_file(run / "features" / "labeled" / "000001.ddpf"), first_features);
}

TEST(Cli, ResumedTrainingMatchesUninterruptedTraining) {
  const auto out_a = test::scratch_dir("cli_resume_a");
  const auto out_b = test::scratch_dir("cli_resume_b");
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  ASSERT_EQ(run_cli(with(tiny_run(out_a), {"--set", "ddpm.steps=6", "gen-data"})), 0);
  ASSERT_EQ(run_cli(with(tiny_run(out_a), {"--set", "ddpm.steps=6", "train-ddpm"})), 0);
  ASSERT_EQ(run_cli(with(tiny_run(out_b), {"gen-data"})), 0);
  ASSERT_EQ(run_cli(with(tiny_run(out_b), {"train-ddpm"})), 0);
  ASSERT_EQ(run_cli(with(tiny_run(out_b), {"--set", "ddpm.steps=6", "train-ddpm", "--resume"})), 0);
  ::testing::internal::GetCapturedStdout();
  ::testing::internal::GetCapturedStderr();
  EXPECT_EQ(le::read_file(out_a / "smoke" / "ddpm.dseg"), le::read_file(out_b / "smoke" / "ddpm.dseg"));
  EXPECT_EQ(le::read_file(out_a / "smoke" / "loss.csv"), le::read_file(out_b / "smoke" / "loss.csv"));
}

}  // namespace
}  // namespace dseg
