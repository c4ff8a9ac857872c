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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dseg/pipeline.hpp"

namespace dseg {

/// (decoder block, timestep)
using ProbeCell = std::pair<int, int>;

struct ProbeOptions {
  /// Probe classifier; a single MLP per cell by default.
  SegmentationOptions classifier = single_member();
  std::uint64_t noise_seed = 0;
  /// Cell (b, t) trains with classifier seed derive_seed(seed, b, t).
  std::uint64_t seed = 0;

  static SegmentationOptions single_member() {
    SegmentationOptions o;
    o.ensemble_size = 1;
    return o;
  }
};

struct ProbeResult {
  std::vector<int> blocks;
  std::vector<int> timesteps;
  std::map<ProbeCell, double> grid;
  std::map<ProbeCell, MetricsReport> reports;
  std::map<ProbeCell, std::string> failures;
  int train_size = 0;
  int test_size = 0;
  ProbeOptions options;

  std::optional<double> at(int block, int timestep) const;
};

/// One probe per (block, timestep) trained on that cell's features alone
/// (fixed shared noise). A failing cell is recorded with its reason.
ProbeResult run_probe_grid(const UNet<float>& model, const NoiseSchedule& schedule, std::span<const LabeledImage> train,
                           std::span<const LabeledImage> test, std::vector<int> blocks, std::vector<int> timesteps,
                           const ProbeOptions& options = {});

struct ClassAreaSplit {
  std::vector<int> small_classes;
  std::vector<int> large_classes;
  /// Mean pixel count per class over the images containing it (0 if never present).
  std::vector<double> mean_area;
};

/// Non-background classes ranked by mean area (ties by index); the first
/// clamp(round(quantile * n), 1, n - 1) are small, the rest large.
ClassAreaSplit split_classes_by_area(std::span<const LabeledImage> dataset, double quantile);

/// Grid of mIoU restricted to a class subset, computed from a probe run's reports.
ProbeResult restrict_probe(const ProbeResult& full, std::span<const int> classes);

struct StratifiedProbe {
  ProbeResult full;
  ProbeResult small;
  ProbeResult large;
  ClassAreaSplit split;
};

StratifiedProbe run_area_stratified_probe(const UNet<float>& model, const NoiseSchedule& schedule,
                                          std::span<const LabeledImage> train, std::span<const LabeledImage> test,
                                          std::vector<int> blocks, std::vector<int> timesteps, double quantile = 0.5,
                                          const ProbeOptions& options = {});

/// Reverse-process progress (T - t) at which a block's curve first reaches
/// half of its maximum, walking from t = T down to t = 1.
std::optional<int> half_max_progress(const ProbeResult& result, int block, int schedule_steps);

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-4;
};

struct KMeansResult {
  Matrix<double> centroids;  // [dims, k]
  std::vector<int> labels;
  int iterations = 0;
  double inertia = 0.0;
};

/// Lloyd iterations from a k-means++ start. Points are columns. Converges when
/// the total squared centroid shift is at most tolerance times the mean
/// per-dimension variance. Deterministic in the seed.
KMeansResult kmeans(const Matrix<float>& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

struct ClusterMasks {
  std::vector<Mask> masks;
  KMeansResult clustering;
};

/// Pool the (block, timestep) features of all images, cluster, and split the
/// labels back into per-image masks.
ClusterMasks kmeans_cluster_masks(const UNet<float>& model, const NoiseSchedule& schedule,
                                  std::span<const Image> images, int block, int timestep, int k, std::uint64_t seed,
                                  std::uint64_t noise_seed = 0, const KMeansOptions& options = {});

/// Rows of [image | clusters] panels stacked vertically.
void write_cluster_panels(const std::filesystem::path& path, std::span<const Image> images,
                          std::span<const Mask> masks);

/// Shared inputs of the repeated-pipeline experiments.
struct ExperimentSetup {
  const UNet<float>* model = nullptr;
  const NoiseSchedule* schedule = nullptr;
  std::span<const LabeledImage> train;
  std::span<const LabeledImage> test;
  /// noise_seed is replaced per repetition.
  FeatureExtractionConfig extraction;
  SegmentationOptions classifier;
};

struct TableRow {
  std::string label;
  std::vector<double> values;  // one per seed
  MeanStd summary;
};

struct NoiseAblation {
  std::vector<TableRow> rows;  // one per policy
  double max_gap = 0.0;
  double allowed_gap = 0.05;
  bool pass = false;
};

NoiseAblation run_noise_ablation(const ExperimentSetup& setup, std::span<const NoisePolicy> policies,
                                 std::span<const std::uint64_t> seeds, double allowed_gap = 0.05);

struct LabelBudgetSweep {
  std::vector<int> budgets;
  std::vector<TableRow> rows;  // one per budget
  double slack = 0.02;
  bool monotone = false;
};

/// Budget n trains on select_labeled(train, n, seed).
LabelBudgetSweep run_label_budget_sweep(const ExperimentSetup& setup, std::span<const int> budgets,
                                        std::span<const std::uint64_t> seeds, double slack = 0.02);

struct RobustnessCell {
  CorruptionKind kind;
  int severity = 0;
  std::vector<double> values;  // one per seed
  MeanStd summary;
};

struct Robustness {
  std::vector<int> severities;
  std::vector<CorruptionKind> kinds;
  std::vector<double> clean;             // one per seed
  std::vector<RobustnessCell> cells;     // kind-major
  std::vector<double> bucket_means;      // one per severity, mean over kinds and seeds
  bool monotone = false;
};

/// Classifiers trained on clean features; test images corrupted then
/// featurized. Severity 0 is the identity corruption.
Robustness run_robustness(const ExperimentSetup& setup, std::span<const CorruptionKind> kinds,
                          std::span<const int> severities, std::span<const std::uint64_t> seeds);

/// JSON + CSV + heatmap for a probe grid; line plot of every block over t.
void write_probe_outputs(const ProbeResult& result, const std::filesystem::path& directory, const std::string& stem);
void write_ablation_outputs(const NoiseAblation& table, const std::filesystem::path& directory);
void write_sweep_outputs(const LabelBudgetSweep& table, const std::filesystem::path& directory);
void write_robustness_outputs(const Robustness& table, const std::filesystem::path& directory);

}  // namespace dseg
