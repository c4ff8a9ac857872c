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
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dseg/metrics.hpp"
#include "dseg/random.hpp"
#include "metric_oracle.hpp"
#include "test_util.hpp"

namespace dseg {
namespace {

Mask random_mask(int h, int w, int k, Rng& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  Mask m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Mask mask_of(std::initializer_list<std::initializer_list<int>> rows) {
  Mask m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int y = 0;
  for (const auto& r : rows) {
    int x = 0;
    for (int v : r) m(y, x++) = v;
    ++y;
  }
  return m;
}

TEST(Confusion, PerfectPredictionIsDiagonal) {
  Rng rng(1);
  const auto m = random_mask(6, 7, 3, rng);
  const auto c = confusion_matrix(m, m, 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(c(i, i), (m == i).count());
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(c(i, j), 0);
  }
  EXPECT_EQ(c.sum(), 42);
}

TEST(Confusion, MatchesCountingLoop) {
  Rng rng(2);
  const auto pred = random_mask(8, 8, 4, rng), gt = random_mask(8, 8, 4, rng);
  const auto c = confusion_matrix(pred, gt, 4);
  std::int64_t oracle[4][4] = {};
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ++oracle[gt(y, x)][pred(y, x)];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(c(i, j), oracle[i][j]);
  EXPECT_EQ(c.sum(), 64);
  // Rows count ground truth, columns count predictions.
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(c.row(i).sum(), (gt == i).count());
    EXPECT_EQ(c.col(i).sum(), (pred == i).count());
  }
}

TEST(Confusion, OutOfRangeLabelNamesThePixel) {
  auto gt = mask_of({{0, 1}, {1, 1}});
  auto pred = gt;
  pred(1, 0) = 5;
  try {
    confusion_matrix(pred, gt, 2);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("(1, 0)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(confusion_matrix(mask_of({{0, 1}}), gt, 2), DimensionError);
}

TEST(MeanIou, IdentityIsOne) {
  Rng rng(3);
  const auto m = random_mask(5, 5, 4, rng);
  const auto r = mean_iou(m, m, 4);
  EXPECT_EQ(r.mean_iou, 1.0);
  EXPECT_EQ(r.pixel_accuracy, 1.0);
}

TEST(MeanIou, HandWorkedTwoByTwo) {
  const auto r = mean_iou(mask_of({{0, 0}, {1, 1}}), mask_of({{0, 1}, {1, 1}}), 2);
  EXPECT_DOUBLE_EQ(*r.per_class_iou[0], 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(*r.per_class_iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mean_iou, 7.0 / 12.0);
  EXPECT_DOUBLE_EQ(r.pixel_accuracy, 0.75);
}

TEST(MeanIou, TotalMissIsZero) {
  const auto r = mean_iou(Mask::Zero(3, 3), Mask::Ones(3, 3), 2);
  EXPECT_EQ(*r.per_class_iou[0], 0.0);
  EXPECT_EQ(*r.per_class_iou[1], 0.0);
  EXPECT_EQ(r.mean_iou, 0.0);
}

TEST(MeanIou, ClassesAbsentFromBothAreSkipped) {
  const auto r = mean_iou(mask_of({{0, 2}}), mask_of({{0, 2}}), 4);
  EXPECT_FALSE(r.per_class_iou[1].has_value());
  EXPECT_FALSE(r.per_class_iou[3].has_value());
  EXPECT_EQ(r.mean_iou, 1.0);
}

TEST(MeanIou, EmptyMaskIsAnError) { EXPECT_THROW(mean_iou(Mask(0, 0), Mask(0, 0), 2), ConfigError); }

TEST(MeanIou, MatchesSetOracleOnRandomPairs) {
  Rng rng(4);
  std::uniform_int_distribution<int> side(1, 16), classes(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = side(rng), w = side(rng), k = classes(rng);
    const auto pred = random_mask(h, w, k, rng), gt = random_mask(h, w, k, rng);
    const auto r = mean_iou(pred, gt, k);
    const auto [oracle, per_class] = test::set_miou(pred, gt, k);
    ASSERT_EQ(r.mean_iou, oracle) << "trial " << trial;
    ASSERT_EQ(r.per_class_iou, per_class) << "trial " << trial;
  }
}

TEST(MeanIou, SymmetricPerClass) {
  Rng rng(5);
  const auto a = random_mask(9, 9, 5, rng), b = random_mask(9, 9, 5, rng);
  EXPECT_EQ(mean_iou(a, b, 5).per_class_iou, mean_iou(b, a, 5).per_class_iou);
}

TEST(MeanIou, PermutationEquivariant) {
  Rng rng(6);
  const int k = 5;
  const auto pred = random_mask(10, 10, k, rng), gt = random_mask(10, 10, k, rng);
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Mask pp = pred.unaryExpr([&](int v) { return perm[v]; });
  const Mask gp = gt.unaryExpr([&](int v) { return perm[v]; });
  const auto base = mean_iou(pred, gt, k), moved = mean_iou(pp, gp, k);
  EXPECT_DOUBLE_EQ(moved.mean_iou, base.mean_iou);
  for (int c = 0; c < k; ++c) EXPECT_EQ(moved.per_class_iou[perm[c]], base.per_class_iou[c]);
}

TEST(MeanIou, ValuesStayInUnitRange) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const auto r = mean_iou(random_mask(4, 4, 3, rng), random_mask(4, 4, 3, rng), 3);
    EXPECT_GE(r.mean_iou, 0.0);
    EXPECT_LE(r.mean_iou, 1.0);
  }
}

TEST(Subset, RestrictsTheMean) {
  const auto r = mean_iou(mask_of({{0, 0}, {1, 1}}), mask_of({{0, 1}, {1, 1}}), 3);
  const std::vector<int> only1{1}, only2{2}, both{0, 1};
  EXPECT_DOUBLE_EQ(*subset_mean_iou(r, only1), 2.0 / 3.0);
  EXPECT_FALSE(subset_mean_iou(r, only2).has_value());
  EXPECT_DOUBLE_EQ(*subset_mean_iou(r, both), 7.0 / 12.0);
}

TEST(Aggregate, SingleReportIsIdentity) {
  const auto r = mean_iou(mask_of({{0, 0}, {1, 1}}), mask_of({{0, 1}, {1, 1}}), 2);
  const std::vector<MetricsReport> one{r};
  for (auto mode : {Aggregation::pool_confusions, Aggregation::average_miou}) {
    const auto a = aggregate_reports(one, mode);
    EXPECT_EQ(a.mean_iou, r.mean_iou);
    EXPECT_EQ(a.per_class_iou, r.per_class_iou);
    EXPECT_EQ(a.confusion, r.confusion);
  }
  EXPECT_EQ(*aggregate_reports(one, Aggregation::average_miou).mean_iou_std, 0.0);
}

TEST(Aggregate, IdenticalReportsHaveZeroStd) {
  const auto r = mean_iou(mask_of({{0, 0}, {1, 1}}), mask_of({{0, 1}, {1, 1}}), 2);
  const std::vector<MetricsReport> two{r, r};
  const auto a = aggregate_reports(two, Aggregation::average_miou);
  EXPECT_EQ(*a.mean_iou_std, 0.0);
  EXPECT_DOUBLE_EQ(a.mean_iou, r.mean_iou);
  EXPECT_EQ(a.run_count, 2);
}

TEST(Aggregate, PoolingRecomputesFromTheSummedMatrix) {
  ConfusionMatrix a(2, 2), b(2, 2);
  a << 3, 1, 0, 4;
  b << 1, 0, 2, 2;
  const std::vector<MetricsReport> reports{report_from_confusion(a), report_from_confusion(b)};
  const auto pooled = aggregate_reports(reports, Aggregation::pool_confusions);
  // Summed matrix [[4,1],[2,6]]: IoU0 = 4/7, IoU1 = 6/9.
  EXPECT_DOUBLE_EQ(*pooled.per_class_iou[0], 4.0 / 7.0);
  EXPECT_DOUBLE_EQ(*pooled.per_class_iou[1], 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(pooled.mean_iou, (4.0 / 7.0 + 6.0 / 9.0) / 2);
  EXPECT_DOUBLE_EQ(pooled.pixel_accuracy, 10.0 / 13.0);
}

TEST(Aggregate, AverageReportsSampleStd) {
  ConfusionMatrix a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 0, 1, 1, 0;
  const std::vector<MetricsReport> reports{report_from_confusion(a), report_from_confusion(b)};
  const auto avg = aggregate_reports(reports, Aggregation::average_miou);
  EXPECT_DOUBLE_EQ(avg.mean_iou, 0.5);
  EXPECT_DOUBLE_EQ(*avg.mean_iou_std, std::sqrt(0.5));
}

TEST(Aggregate, MixedClassCountsAreRejected) {
  const std::vector<MetricsReport> mixed{mean_iou(Mask::Zero(2, 2), Mask::Zero(2, 2), 2),
                                         mean_iou(Mask::Zero(2, 2), Mask::Zero(2, 2), 3)};
  EXPECT_THROW(aggregate_reports(mixed, Aggregation::pool_confusions), ConfigError);
  EXPECT_THROW(aggregate_reports(std::vector<MetricsReport>{}, Aggregation::average_miou), ConfigError);
}

TEST(MeanStdTest, SampleStatistics) {
  const std::vector<double> v{1.0, 2.0, 4.0};
  const auto s = mean_std(v);
  EXPECT_DOUBLE_EQ(s.mean, 7.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                     (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2.0));
  EXPECT_EQ(mean_std(std::vector<double>{3.0}).std, 0.0);
}

TEST(Export, JsonAndCsvCarryTheReport) {
  const auto dir = test::scratch_dir("metrics_export");
  const auto r = mean_iou(mask_of({{0, 2}}), mask_of({{0, 0}}), 3);
  const std::vector<std::string> names{"background", "circle", "square"};
  write_report_json(r, dir / "r.json", names);
  write_per_class_csv(r, dir / "r.csv", names);
  std::ifstream jf(dir / "r.json");
  const auto j = nlohmann::json::parse(jf);
  EXPECT_DOUBLE_EQ(j.at("mean_iou").get<double>(), r.mean_iou);
  EXPECT_EQ(j.at("class_count").get<int>(), 3);
  std::ifstream cf(dir / "r.csv");
  std::stringstream csv;
  csv << cf.rdbuf();
  EXPECT_EQ(csv.str(), "class,name,iou\n0,background,0.5\n1,circle,\n2,square,0\n");
}

}  // namespace
}  // namespace dseg
