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
#include <string>
#include <vector>

#include "dseg/features.hpp"
#include "dseg/pipeline.hpp"
#include "dseg/synth_data.hpp"
#include "dseg/unet.hpp"

namespace dseg {

struct DatasetSection {
  /// Empty: <run dir>/data.
  std::string path;
  int resolution = 64;
  int class_count = 5;
  int labeled = 20;
  int unlabeled = 500;
  int test = 30;
  std::uint64_t seed = 1;
};

struct ScheduleSection {
  int steps = 100;
  double beta_start = 1e-3;
  double beta_end = 0.2;
};

struct DdpmSection {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  int checkpoint_every = 250;
  int sample_every = 1000;
  int sample_count = 4;
};

struct ExtractionSection {
  /// Empty selects default_feature_blocks.
  std::vector<int> blocks;
  std::vector<double> timestep_fractions{0.05, 0.15, 0.25};
  NoisePolicy noise_policy = NoisePolicy::fixed_shared;
  std::uint64_t noise_seed = 0;
  /// "ddpm" or "rgb" (raw pixel baseline).
  std::string source = "ddpm";
};

struct ClassifierSection {
  SegmentationOptions options;
  std::uint64_t seed = 0;
};

struct ExperimentSection {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// Empty: every decoder block.
  std::vector<int> probe_blocks;
  std::vector<double> probe_timestep_fractions{0.05, 0.15, 0.25, 0.4, 0.6, 0.8, 0.95};
  double area_quantile = 0.5;
  int kmeans_k = 5;
  int kmeans_block = 0;  // 0: deepest block of the default set
  double kmeans_timestep_fraction = 0.15;
  int kmeans_images = 6;
  std::uint64_t kmeans_seed = 0;
  double noise_gap = 0.05;
  std::vector<int> label_budgets{5, 10, 20};
  double budget_slack = 0.02;
  std::vector<std::string> corruptions{"gaussian_noise", "gaussian_blur", "brightness", "contrast", "pixelate"};
  std::vector<int> severities{1, 3, 5};
};

/// Resolved configuration of one run. Every field has a default; a JSON file
/// and dotted-path overrides are layered on top.
struct RunConfig {
  std::string run_name = "default";
  std::string output_dir = "runs";
  int workers = 1;
  DatasetSection dataset;
  ScheduleSection schedule;
  UNetConfig unet;
  DdpmSection ddpm;
  ExtractionSection extraction;
  ClassifierSection classifier;
  ExperimentSection experiment;

  /// Canonical JSON of every field.
  std::string to_json() const;
  void validate() const;

  std::filesystem::path run_dir() const;
  std::filesystem::path dataset_dir() const;
  std::filesystem::path checkpoint_path() const;
  NoiseSchedule build_schedule() const;
  FeatureExtractionConfig feature_config() const;
};

/// The defaults as a JSON document.
std::string default_config_json();

/// Built-in defaults, then the file (when given), then each "a.b.c=value"
/// override (value parsed as JSON, else taken as a string). A file with a
/// top-level "defaults" object is a profile document: "defaults" applies
/// first, then the section named by `profile`. DSEG_OUT, when set, replaces
/// output_dir. Unknown keys are configuration errors.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          const std::string& profile = "");

/// FNV-1a of the canonical JSON.
std::uint64_t config_hash(const RunConfig& config);

}  // namespace dseg
