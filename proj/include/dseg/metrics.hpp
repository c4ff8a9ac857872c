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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dseg/tensor.hpp"

namespace dseg {

/// Row = ground-truth class, column = predicted class.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MetricsReport {
  int class_count = 0;
  /// Empty for classes absent from both prediction and ground truth.
  std::vector<std::optional<double>> per_class_iou;
  double mean_iou = 0.0;
  ConfusionMatrix confusion;
  double pixel_accuracy = 0.0;
  /// Sample standard deviation of mIoU across runs (average mode only).
  std::optional<double> mean_iou_std;
  int run_count = 1;
};

ConfusionMatrix confusion_matrix(const Mask& pred, const Mask& gt, int class_count);

/// Per-class IoU, mIoU over classes present in either mask, pixel accuracy.
MetricsReport report_from_confusion(const ConfusionMatrix& confusion);

MetricsReport mean_iou(const Mask& pred, const Mask& gt, int class_count);

/// mIoU restricted to a subset of classes (absent classes still skipped).
/// Empty when none of the subset is present.
std::optional<double> subset_mean_iou(const MetricsReport& report, std::span<const int> classes);

enum class Aggregation { pool_confusions, average_miou };

/// pool_confusions sums the matrices and recomputes. average_miou reports the
/// mean and sample standard deviation of the runs' mIoU, per-class IoU
/// averaged over runs where defined, and the summed confusion.
MetricsReport aggregate_reports(std::span<const MetricsReport> reports, Aggregation mode);

/// Sample mean and (n-1) standard deviation; std is 0 for a single value.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

std::string report_json(const MetricsReport& report, std::span<const std::string> class_names = {});
void write_report_json(const MetricsReport& report, const std::filesystem::path& path,
                       std::span<const std::string> class_names = {});
/// "class,name,iou" rows; undefined IoU is written as an empty field.
void write_per_class_csv(const MetricsReport& report, const std::filesystem::path& path,
                         std::span<const std::string> class_names = {});

}  // namespace dseg
