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

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "dseg/analysis.hpp"
#include "test_util.hpp"

namespace dseg {
namespace {

class SmallPipeline : public ::testing::Test {
 protected:
  UNet<float> model = build_unet(UNetConfig{4, {1, 2}, 1, 8, 16}, 2);
  NoiseSchedule schedule = build_schedule(20, 1e-3, 0.2);
  DatasetSplit split = generate_split(4, 0, 3, 16, 3, 5);

  static SegmentationOptions fast_classifier(int members = 1) {
    SegmentationOptions o;
    o.ensemble_size = members;
    o.hidden_dims = {8, 8};
    return o;
  }
  ExperimentSetup setup(int members = 1) const {
    return {&model, &schedule, split.labeled_train, split.test, {{1, 3}, {2, 8}, NoisePolicy::fixed_shared, 0},
            fast_classifier(members)};
  }
};

TEST_F(SmallPipeline, OneCellGridEqualsManualComposition) {
  ProbeOptions options;
  options.classifier = fast_classifier();
  options.noise_seed = 4;
  options.seed = 9;
  const auto grid = run_probe_grid(model, schedule, split.labeled_train, split.test, {2}, {6}, options);
  ASSERT_TRUE(grid.at(2, 6).has_value());

  const FeatureExtractionConfig cfg{{2}, {6}, NoisePolicy::fixed_shared, 4};
  std::vector<PixelFeatureVolume> train, test;
  std::vector<Mask> train_masks, test_masks;
  for (std::size_t i = 0; i < split.labeled_train.size(); ++i) {
    train.push_back(extract_features(model, schedule, split.labeled_train[i].pixels, cfg, i));
    train_masks.push_back(split.labeled_train[i].mask);
  }
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    test.push_back(extract_features(model, schedule, split.test[i].pixels, cfg, kTestDrawOffset + i));
    test_masks.push_back(split.test[i].mask);
  }
  const auto ens = fit_ensemble_on_volumes(train, train_masks, 3, options.classifier, derive_seed(9, 2, 6));
  EXPECT_EQ(*grid.at(2, 6), evaluate_on_volumes(ens, test, test_masks).mean_iou);
  EXPECT_EQ(grid.train_size, 4);
  EXPECT_EQ(grid.test_size, 3);
}

TEST_F(SmallPipeline, SubGridEqualsCellsOfTheFullGrid) {
  ProbeOptions options;
  options.classifier = fast_classifier();
  const auto full = run_probe_grid(model, schedule, split.labeled_train, split.test, {1, 2, 4}, {3, 15}, options);
  const auto sub = run_probe_grid(model, schedule, split.labeled_train, split.test, {4}, {15}, options);
  EXPECT_EQ(full.grid.size(), 6u);
  EXPECT_EQ(*sub.at(4, 15), *full.at(4, 15));
  for (const auto& [cell, v] : full.grid) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST_F(SmallPipeline, InvalidCellIsRecordedNotThrown) {
  ProbeOptions options;
  options.classifier = fast_classifier();
  const auto grid = run_probe_grid(model, schedule, split.labeled_train, split.test, {1, 7}, {3}, options);
  EXPECT_TRUE(grid.at(1, 3).has_value());
  EXPECT_FALSE(grid.at(7, 3).has_value());
  ASSERT_EQ(grid.failures.count({7, 3}), 1u);
  EXPECT_NE(grid.failures.at({7, 3}).find("outside"), std::string::npos);
}

TEST(ProbeFixtures, OneHotFeaturesOnIdenticalSetsScorePerfectly) {
  const auto data = generate_shapes_dataset(3, 16, 4, 8);
  std::vector<PixelFeatureVolume> volumes;
  std::vector<Mask> masks;
  for (const auto& li : data) {
    PixelFeatureVolume v;
    v.features = Tensor3<float>(4, 16, 16);
    for (Eigen::Index p = 0; p < li.mask.size(); ++p) v.features.data(li.mask.data()[p], p) = 1.0f;
    volumes.push_back(std::move(v));
    masks.push_back(li.mask);
  }
  SegmentationOptions o;
  o.ensemble_size = 1;
  o.epochs = 20;
  const auto ens = fit_ensemble_on_volumes(volumes, masks, 4, o, 1);
  const auto report = evaluate_on_volumes(ens, volumes, masks);
  EXPECT_EQ(report.mean_iou, 1.0);

  // Restricting a perfect grid to either area stratum stays perfect.
  ProbeResult perfect;
  perfect.blocks = {1};
  perfect.timesteps = {1};
  perfect.grid[{1, 1}] = report.mean_iou;
  perfect.reports[{1, 1}] = report;
  const auto split = split_classes_by_area(data, 0.5);
  EXPECT_EQ(*restrict_probe(perfect, split.small_classes).at(1, 1), 1.0);
  EXPECT_EQ(*restrict_probe(perfect, split.large_classes).at(1, 1), 1.0);
}

TEST_F(SmallPipeline, StratifiedProbeRestrictsTheFullGrid) {
  ProbeOptions options;
  options.classifier = fast_classifier();
  const auto s = run_area_stratified_probe(model, schedule, split.labeled_train, split.test, {2}, {4}, 0.5, options);
  const auto plain = run_probe_grid(model, schedule, split.labeled_train, split.test, {2}, {4}, options);
  EXPECT_EQ(*s.full.at(2, 4), *plain.at(2, 4));
  const auto& report = plain.reports.at({2, 4});
  EXPECT_EQ(s.small.at(2, 4), subset_mean_iou(report, s.split.small_classes));
  EXPECT_EQ(s.large.at(2, 4), subset_mean_iou(report, s.split.large_classes));
}

LabeledImage blank_with(std::vector<std::pair<int, int>> class_pixels, int k) {
  LabeledImage li;
  li.class_count = k;
  li.pixels = Image(3, 40, 40);
  li.mask = Mask::Zero(40, 40);
  int p = 0;
  for (auto [c, n] : class_pixels)
    for (int i = 0; i < n; ++i, ++p) li.mask.data()[p] = c;
  return li;
}

TEST(AreaSplit, TwoClassesSplitBySize) {
  const std::vector<LabeledImage> data{blank_with({{1, 10}, {2, 1000}}, 3)};
  const auto s = split_classes_by_area(data, 0.5);
  EXPECT_EQ(s.small_classes, (std::vector<int>{1}));
  EXPECT_EQ(s.large_classes, (std::vector<int>{2}));
}

TEST(AreaSplit, EqualAreasBreakTiesByIndex) {
  const std::vector<LabeledImage> data{blank_with({{1, 50}, {2, 50}, {3, 50}, {4, 50}, {5, 50}}, 6)};
  const auto s = split_classes_by_area(data, 0.5);
  EXPECT_LE(std::abs(static_cast<int>(s.small_classes.size()) - static_cast<int>(s.large_classes.size())), 1);
  EXPECT_EQ(s.small_classes.front(), 1);
  EXPECT_EQ(s.large_classes.back(), 5);
  EXPECT_LT(s.small_classes.back(), s.large_classes.front());
}

TEST(AreaSplit, MeanAreasMatchPixelCounts) {
  const auto data = generate_shapes_dataset(40, 32, 5, 3);
  const auto s = split_classes_by_area(data, 0.5);
  for (int c = 0; c < 5; ++c) {
    double total = 0.0;
    int images = 0;
    for (const auto& li : data) {
      int count = 0;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) count += li.mask(y, x) == c;
      if (count > 0) {
        total += count;
        ++images;
      }
    }
    EXPECT_DOUBLE_EQ(s.mean_area[c], images ? total / images : 0.0) << "class " << c;
  }
  for (int a : s.small_classes)
    for (int b : s.large_classes) EXPECT_LE(s.mean_area[a], s.mean_area[b]);
  std::vector<int> all = s.small_classes;
  all.insert(all.end(), s.large_classes.begin(), s.large_classes.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<int>{1, 2, 3, 4}));
}

TEST(AreaSplit, FewerThanTwoClassesIsAnError) {
  const std::vector<LabeledImage> data{blank_with({{1, 10}}, 3)};
  EXPECT_THROW(split_classes_by_area(data, 0.5), ConfigError);
  EXPECT_THROW(split_classes_by_area(data, 1.0), ConfigError);
}

TEST(HalfMax, WalksFromNoisiestStep) {
  ProbeResult r;
  r.timesteps = {10, 50, 90};
  r.grid[{1, 10}] = 0.8;
  r.grid[{1, 50}] = 0.5;
  r.grid[{1, 90}] = 0.1;
  EXPECT_EQ(half_max_progress(r, 1, 100), 50);
  r.grid[{1, 50}] = 0.3;
  EXPECT_EQ(half_max_progress(r, 1, 100), 90);
  EXPECT_FALSE(half_max_progress(r, 2, 100).has_value());
}

Matrix<float> two_blobs(int per, Rng& rng, std::vector<int>* truth) {
  std::normal_distribution<float> n(0.0f, 0.3f);
  Matrix<float> pts(3, 2 * per);
  for (int i = 0; i < 2 * per; ++i) {
    const int b = i < per ? 0 : 1;
    for (int d = 0; d < 3; ++d) pts(d, i) = n(rng) + (b ? 10.0f : -10.0f);
    truth->push_back(b);
  }
  return pts;
}

TEST(KMeans, SingleClusterLabelsEverythingZero) {
  Rng rng(1);
  std::vector<int> truth;
  const auto r = kmeans(two_blobs(20, rng, &truth), 1, 3);
  for (int l : r.labels) EXPECT_EQ(l, 0);
}

TEST(KMeans, RecoversBlobMembershipUpToPermutation) {
  Rng rng(2);
  std::vector<int> truth;
  const auto pts = two_blobs(50, rng, &truth);
  const auto r = kmeans(pts, 2, 7);
  const int flip = r.labels[0] == truth[0] ? 0 : 1;
  for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_EQ(r.labels[i] ^ flip, truth[i]) << i;
  EXPECT_LE(r.iterations, 300);
}

TEST(KMeans, DeterministicAndValidated) {
  Rng rng(3);
  std::vector<int> truth;
  const auto pts = two_blobs(30, rng, &truth);
  EXPECT_EQ(kmeans(pts, 3, 5).labels, kmeans(pts, 3, 5).labels);
  EXPECT_THROW(kmeans(pts, 61, 5), ConfigError);
  EXPECT_THROW(kmeans(pts, 0, 5), ConfigError);
}

TEST_F(SmallPipeline, ClusterMasksCoverEveryImage) {
  std::vector<Image> images{split.labeled_train[0].pixels, split.labeled_train[1].pixels};
  const auto a = kmeans_cluster_masks(model, schedule, images, 2, 5, 3, 11);
  const auto b = kmeans_cluster_masks(model, schedule, images, 2, 5, 3, 11);
  ASSERT_EQ(a.masks.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE((a.masks[i] == b.masks[i]).all());
    EXPECT_GE(a.masks[i].minCoeff(), 0);
    EXPECT_LT(a.masks[i].maxCoeff(), 3);
  }
  const auto one = kmeans_cluster_masks(model, schedule, images, 2, 5, 1, 11);
  EXPECT_EQ(one.masks[0].maxCoeff(), 0);
  EXPECT_THROW(kmeans_cluster_masks(model, schedule, images, 2, 5, 513, 11), ConfigError);
  const auto dir = test::scratch_dir("kmeans");
  write_cluster_panels(dir / "panel.png", images, a.masks);
  EXPECT_TRUE(std::filesystem::exists(dir / "panel.png"));
}

TEST_F(SmallPipeline, AblationSingleRunReducesToOnePipeline) {
  const auto s = setup();
  const std::vector<NoisePolicy> one{NoisePolicy::fixed_shared};
  const std::vector<std::uint64_t> seeds{3};
  const auto table = run_noise_ablation(s, one, seeds);
  ASSERT_EQ(table.rows.size(), 1u);
  const auto rs = run_seeds(3);
  FeatureExtractionConfig cfg = s.extraction;
  cfg.noise_seed = rs.noise;
  const double direct =
      run_segmentation(ddpm_featurizer(model, schedule, cfg), s.train, s.test, s.classifier, rs.classifier).report.mean_iou;
  EXPECT_EQ(table.rows[0].values[0], direct);
  EXPECT_EQ(table.max_gap, 0.0);
  EXPECT_TRUE(table.pass);
  EXPECT_EQ(run_noise_ablation(s, one, seeds).rows[0].values, table.rows[0].values);
}

TEST_F(SmallPipeline, AblationFlagsTheGap) {
  const std::vector<NoisePolicy> all{NoisePolicy::fixed_shared, NoisePolicy::per_timestep_shared,
                                     NoisePolicy::resampled};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto table = run_noise_ablation(setup(), all, seeds, 0.05);
  ASSERT_EQ(table.rows.size(), 3u);
  double lo = 1.0, hi = 0.0;
  for (const auto& r : table.rows) {
    EXPECT_EQ(r.values.size(), 2u);
    lo = std::min(lo, r.summary.mean);
    hi = std::max(hi, r.summary.mean);
  }
  EXPECT_DOUBLE_EQ(table.max_gap, hi - lo);
  EXPECT_EQ(table.pass, hi - lo <= 0.05);
}

TEST_F(SmallPipeline, FullBudgetReproducesTheMainRun) {
  const auto s = setup();
  const std::vector<int> budgets{4};
  const std::vector<std::uint64_t> seeds{6};
  const auto sweep = run_label_budget_sweep(s, budgets, seeds);
  const std::vector<NoisePolicy> one{NoisePolicy::fixed_shared};
  EXPECT_EQ(sweep.rows[0].values, run_noise_ablation(s, one, seeds).rows[0].values);
  EXPECT_TRUE(sweep.monotone);
}

TEST(SelectLabeled, SubsetIsOrderedAndSeeded) {
  const auto pool = generate_shapes_dataset(6, 16, 3, 1);
  const auto a = select_labeled(pool, 3, 4);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(select_labeled(pool, 3, 4), a);
  std::vector<std::size_t> idx;
  for (const auto& li : a)
    idx.push_back(static_cast<std::size_t>(std::find(pool.begin(), pool.end(), li) - pool.begin()));
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(select_labeled(pool, 6, 4), pool);
  EXPECT_THROW(select_labeled(pool, 7, 4), ConfigError);
  EXPECT_THROW(select_labeled(pool, 0, 4), ConfigError);
}

TEST_F(SmallPipeline, RobustnessIdentityAndAccounting) {
  const std::vector<CorruptionKind> kinds{CorruptionKind::gaussian_noise, CorruptionKind::contrast};
  const std::vector<int> severities{0, 1, 5};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto r = run_robustness(setup(), kinds, severities, seeds);
  ASSERT_EQ(r.cells.size(), kinds.size() * severities.size());
  ASSERT_EQ(r.clean.size(), seeds.size());
  for (const auto& cell : r.cells) {
    EXPECT_EQ(cell.values.size(), seeds.size());
    if (cell.severity == 0) EXPECT_EQ(cell.values, r.clean);
  }
  ASSERT_EQ(r.bucket_means.size(), severities.size());
  for (std::size_t j = 0; j < severities.size(); ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < kinds.size(); ++k) sum += r.cells[k * severities.size() + j].summary.mean;
    EXPECT_DOUBLE_EQ(r.bucket_means[j], sum / 2);
  }
  bool monotone = true;
  for (std::size_t j = 1; j < severities.size(); ++j) monotone &= r.bucket_means[j] <= r.bucket_means[j - 1];
  EXPECT_EQ(r.monotone, monotone);
}

TEST_F(SmallPipeline, OutputsAreWritten) {
  const auto dir = test::scratch_dir("analysis_out");
  ProbeOptions options;
  options.classifier = fast_classifier();
  const auto grid = run_probe_grid(model, schedule, split.labeled_train, split.test, {1, 2}, {3, 9}, options);
  write_probe_outputs(grid, dir, "probe");
  for (const char* f : {"probe.json", "probe.csv", "probe_heatmap.png", "probe_curves.png"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const std::vector<NoisePolicy> one{NoisePolicy::fixed_shared};
  const std::vector<std::uint64_t> seeds{1};
  write_ablation_outputs(run_noise_ablation(setup(), one, seeds), dir);
  for (const char* f : {"noise_ablation.json", "noise_ablation.csv", "noise_ablation.png"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}

}  // namespace
}  // namespace dseg
