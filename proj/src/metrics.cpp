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

#include "dseg/metrics.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "dseg/container.hpp"

namespace dseg {

ConfusionMatrix confusion_matrix(const Mask& pred, const Mask& gt, int class_count) {
  if (class_count < 1) throw ConfigError("class_count must be >= 1");
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw DimensionError("confusion_matrix: prediction " + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + " vs ground truth " + std::to_string(gt.rows()) + "x" +
                         std::to_string(gt.cols()));
  }
  ConfusionMatrix m = ConfusionMatrix::Zero(class_count, class_count);
  for (Eigen::Index y = 0; y < gt.rows(); ++y) {
    for (Eigen::Index x = 0; x < gt.cols(); ++x) {
      const int g = gt(y, x), p = pred(y, x);
      if (g < 0 || g >= class_count || p < 0 || p >= class_count) {
        throw ConfigError("label out of range [0, " + std::to_string(class_count) + ") at pixel (" +
                          std::to_string(y) + ", " + std::to_string(x) + "): gt=" + std::to_string(g) +
                          " pred=" + std::to_string(p));
      }
      ++m(g, p);
    }
  }
  return m;
}

MetricsReport report_from_confusion(const ConfusionMatrix& confusion) {
  if (confusion.rows() != confusion.cols() || confusion.rows() < 1) {
    throw DimensionError("confusion matrix must be square and non-empty");
  }
  const int k = static_cast<int>(confusion.rows());
  const std::int64_t total = confusion.sum();
  if (total <= 0) throw ConfigError("metrics over an empty mask");
  MetricsReport r;
  r.class_count = k;
  r.confusion = confusion;
  r.per_class_iou.resize(k);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const std::int64_t inter = confusion(c, c);
    const std::int64_t uni = confusion.row(c).sum() + confusion.col(c).sum() - inter;
    if (uni == 0) continue;
    const double iou = static_cast<double>(inter) / static_cast<double>(uni);
    r.per_class_iou[c] = iou;
    sum += iou;
    ++present;
  }
  r.mean_iou = sum / present;
  r.pixel_accuracy = static_cast<double>(confusion.trace()) / static_cast<double>(total);
  return r;
}

MetricsReport mean_iou(const Mask& pred, const Mask& gt, int class_count) {
  if (gt.size() == 0) throw ConfigError("mean_iou: empty mask");
  return report_from_confusion(confusion_matrix(pred, gt, class_count));
}

std::optional<double> subset_mean_iou(const MetricsReport& report, std::span<const int> classes) {
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    if (c < 0 || c >= report.class_count) throw ConfigError("class index " + std::to_string(c) + " out of range");
    if (const auto& iou = report.per_class_iou[c]) {
      sum += *iou;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw ConfigError("mean_std of no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return {mean, std};
}

MetricsReport aggregate_reports(std::span<const MetricsReport> reports, Aggregation mode) {
  if (reports.empty()) throw ConfigError("aggregate_reports: no reports");
  const int k = reports.front().class_count;
  ConfusionMatrix pooled = ConfusionMatrix::Zero(k, k);
  for (const auto& r : reports) {
    if (r.class_count != k) {
      throw ConfigError("aggregate_reports: mixed class counts " + std::to_string(k) + " and " +
                        std::to_string(r.class_count));
    }
    pooled += r.confusion;
  }
  if (mode == Aggregation::pool_confusions) return report_from_confusion(pooled);

  MetricsReport out;
  out.class_count = k;
  out.confusion = pooled;
  out.per_class_iou.resize(k);
  out.run_count = static_cast<int>(reports.size());
  std::vector<double> mious;
  double acc = 0.0;
  for (const auto& r : reports) {
    mious.push_back(r.mean_iou);
    acc += r.pixel_accuracy;
  }
  for (int c = 0; c < k; ++c) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      if (r.per_class_iou[c]) {
        sum += *r.per_class_iou[c];
        ++n;
      }
    }
    if (n > 0) out.per_class_iou[c] = sum / n;
  }
  const auto ms = mean_std(mious);
  out.mean_iou = ms.mean;
  out.mean_iou_std = ms.std;
  out.pixel_accuracy = acc / static_cast<double>(reports.size());
  return out;
}

namespace {

std::string class_label(std::span<const std::string> names, int c) {
  return static_cast<std::size_t>(c) < names.size() ? names[c] : "class_" + std::to_string(c);
}

}  // namespace

std::string report_json(const MetricsReport& report, std::span<const std::string> class_names) {
  nlohmann::json per_class = nlohmann::json::array();
  for (int c = 0; c < report.class_count; ++c) {
    const auto& iou = report.per_class_iou[c];
    per_class.push_back({{"class", c},
                         {"name", class_label(class_names, c)},
                         {"iou", iou ? nlohmann::json(*iou) : nlohmann::json(nullptr)}});
  }
  nlohmann::json confusion = nlohmann::json::array();
  for (int r = 0; r < report.confusion.rows(); ++r) {
    std::vector<std::int64_t> row(report.confusion.row(r).begin(), report.confusion.row(r).end());
    confusion.push_back(row);
  }
  nlohmann::json j{{"class_count", report.class_count},
                   {"mean_iou", report.mean_iou},
                   {"pixel_accuracy", report.pixel_accuracy},
                   {"run_count", report.run_count},
                   {"per_class_iou", per_class},
                   {"confusion", confusion}};
  if (report.mean_iou_std) j["mean_iou_std"] = *report.mean_iou_std;
  return j.dump(2) + "\n";
}

void write_report_json(const MetricsReport& report, const std::filesystem::path& path,
                       std::span<const std::string> class_names) {
  le::write_file_atomic(path, report_json(report, class_names));
}

void write_per_class_csv(const MetricsReport& report, const std::filesystem::path& path,
                         std::span<const std::string> class_names) {
  std::ostringstream out;
  out.precision(17);
  out << "class,name,iou\n";
  for (int c = 0; c < report.class_count; ++c) {
    out << c << ',' << class_label(class_names, c) << ',';
    if (report.per_class_iou[c]) out << *report.per_class_iou[c];
    out << '\n';
  }
  le::write_file_atomic(path, out.str());
}

}  // namespace dseg
