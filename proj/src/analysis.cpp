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

#include "dseg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dseg/container.hpp"
#include "dseg/plot.hpp"

namespace dseg {

std::optional<double> ProbeResult::at(int block, int timestep) const {
  const auto it = grid.find({block, timestep});
  if (it == grid.end()) return std::nullopt;
  return it->second;
}

namespace {

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

PixelFeatureVolume block_slice(const PixelFeatureVolume& volume, const ChannelSpan& span) {
  PixelFeatureVolume out;
  out.features = slice_channels(volume.features, span.offset, span.count);
  out.provenance = volume.provenance;
  out.provenance.blocks = {span.block};
  out.provenance.timesteps = {span.timestep};
  out.channel_layout = {{span.timestep, span.block, 0, span.count}};
  return out;
}

std::vector<Mask> masks_of(std::span<const LabeledImage> images) {
  std::vector<Mask> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(im.mask);
  return out;
}

}  // namespace

ProbeResult run_probe_grid(const UNet<float>& model, const NoiseSchedule& schedule, std::span<const LabeledImage> train,
                           std::span<const LabeledImage> test, std::vector<int> blocks, std::vector<int> timesteps,
                           const ProbeOptions& options) {
  if (train.empty() || test.empty()) throw ConfigError("probe grid needs train and test images");
  ProbeResult result;
  result.blocks = sorted_unique(std::move(blocks));
  result.timesteps = sorted_unique(std::move(timesteps));
  result.train_size = static_cast<int>(train.size());
  result.test_size = static_cast<int>(test.size());
  result.options = options;
  const int k = train.front().class_count;
  const int depth = model.decoder_block_count();

  std::vector<int> valid_blocks;
  for (int b : result.blocks) {
    if (b >= 1 && b <= depth) {
      valid_blocks.push_back(b);
    } else {
      for (int t : result.timesteps)
        result.failures[{b, t}] = "block outside [1, " + std::to_string(depth) + "]";
    }
  }
  if (valid_blocks.empty()) return result;

  const auto train_masks = masks_of(train);
  const auto test_masks = masks_of(test);
  for (int t : result.timesteps) {
    const FeatureExtractionConfig config{valid_blocks, {t}, NoisePolicy::fixed_shared, options.noise_seed};
    std::vector<PixelFeatureVolume> train_vols, test_vols;
    try {
      for (std::size_t i = 0; i < train.size(); ++i)
        train_vols.push_back(extract_features(model, schedule, train[i].pixels, config, i));
      for (std::size_t i = 0; i < test.size(); ++i)
        test_vols.push_back(extract_features(model, schedule, test[i].pixels, config, kTestDrawOffset + i));
    } catch (const std::exception& e) {
      for (int b : valid_blocks) result.failures[{b, t}] = e.what();
      continue;
    }
    for (std::size_t span = 0; span < valid_blocks.size(); ++span) {
      const int b = valid_blocks[span];
      try {
        std::vector<PixelFeatureVolume> cell_train, cell_test;
        for (const auto& v : train_vols) cell_train.push_back(block_slice(v, v.channel_layout[span]));
        for (const auto& v : test_vols) cell_test.push_back(block_slice(v, v.channel_layout[span]));
        const auto ensemble = fit_ensemble_on_volumes(cell_train, train_masks, k, options.classifier,
                                                      derive_seed(options.seed, static_cast<std::uint64_t>(b),
                                                                  static_cast<std::uint64_t>(t)));
        auto report = evaluate_on_volumes(ensemble, cell_test, test_masks);
        result.grid[{b, t}] = report.mean_iou;
        result.reports[{b, t}] = std::move(report);
      } catch (const std::exception& e) {
        result.failures[{b, t}] = e.what();
      }
    }
  }
  return result;
}

ClassAreaSplit split_classes_by_area(std::span<const LabeledImage> dataset, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("quantile must lie in (0, 1)");
  if (dataset.empty()) throw ConfigError("split_classes_by_area: empty dataset");
  const int k = dataset.front().class_count;
  std::vector<double> total(k, 0.0);
  std::vector<int> images_with(k, 0);
  for (const auto& im : dataset) {
    std::vector<std::int64_t> counts(k, 0);
    for (Eigen::Index p = 0; p < im.mask.size(); ++p) ++counts[im.mask.data()[p]];
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      total[c] += static_cast<double>(counts[c]);
      ++images_with[c];
    }
  }
  ClassAreaSplit split;
  split.mean_area.assign(k, 0.0);
  std::vector<int> ranked;
  for (int c = 0; c < k; ++c) {
    if (images_with[c] == 0) continue;
    split.mean_area[c] = total[c] / images_with[c];
    if (c != 0) ranked.push_back(c);
  }
  if (ranked.size() < 2) throw ConfigError("need at least two non-background classes present to split by area");
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](int a, int b) { return split.mean_area[a] < split.mean_area[b]; });
  const int n = static_cast<int>(ranked.size());
  const int n_small = std::clamp(static_cast<int>(std::lround(quantile * n)), 1, n - 1);
  split.small_classes.assign(ranked.begin(), ranked.begin() + n_small);
  split.large_classes.assign(ranked.begin() + n_small, ranked.end());
  std::sort(split.small_classes.begin(), split.small_classes.end());
  std::sort(split.large_classes.begin(), split.large_classes.end());
  return split;
}

ProbeResult restrict_probe(const ProbeResult& full, std::span<const int> classes) {
  ProbeResult out = full;
  out.grid.clear();
  for (const auto& [cell, report] : full.reports) {
    if (const auto v = subset_mean_iou(report, classes)) {
      out.grid[cell] = *v;
    } else {
      out.failures[cell] = "no class of the subset is present";
    }
  }
  return out;
}

StratifiedProbe run_area_stratified_probe(const UNet<float>& model, const NoiseSchedule& schedule,
                                          std::span<const LabeledImage> train, std::span<const LabeledImage> test,
                                          std::vector<int> blocks, std::vector<int> timesteps, double quantile,
                                          const ProbeOptions& options) {
  StratifiedProbe out;
  out.split = split_classes_by_area(train, quantile);
  out.full = run_probe_grid(model, schedule, train, test, std::move(blocks), std::move(timesteps), options);
  out.small = restrict_probe(out.full, out.split.small_classes);
  out.large = restrict_probe(out.full, out.split.large_classes);
  return out;
}

std::optional<int> half_max_progress(const ProbeResult& result, int block, int schedule_steps) {
  double best = -1.0;
  for (int t : result.timesteps)
    if (const auto v = result.at(block, t)) best = std::max(best, *v);
  if (best < 0.0) return std::nullopt;
  for (auto it = result.timesteps.rbegin(); it != result.timesteps.rend(); ++it) {
    if (const auto v = result.at(block, *it); v && *v >= 0.5 * best) return schedule_steps - *it;
  }
  return std::nullopt;
}

KMeansResult kmeans(const Matrix<float>& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (k > n) throw ConfigError("k = " + std::to_string(k) + " exceeds the number of points " + std::to_string(n));
  const Matrix<double> x = points.cast<double>();
  const Vector<double> x_sq = x.colwise().squaredNorm().transpose();
  const double tol = options.tolerance * ((x.colwise() - x.rowwise().mean()).rowwise().squaredNorm() / n).mean();

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  KMeansResult r;
  r.centroids.resize(x.rows(), k);
  // k-means++ seeding.
  r.centroids.col(0) = x.col(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Vector<double> closest = (x.colwise() - r.centroids.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += closest[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    r.centroids.col(c) = x.col(pick);
    closest = closest.cwiseMin((x.colwise() - r.centroids.col(c)).colwise().squaredNorm().transpose());
  }

  r.labels.assign(static_cast<std::size_t>(n), 0);
  Vector<double> dist(n);
  auto assign = [&] {
    const Matrix<double> d = (-2.0 * r.centroids.transpose() * x).colwise() +
                             r.centroids.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      const double v = d.col(i).minCoeff(&best);  // first minimum: smallest index on ties
      r.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
      dist[i] = std::max(0.0, v + x_sq[i]);
    }
  };

  for (r.iterations = 1; r.iterations <= options.max_iterations; ++r.iterations) {
    assign();
    Matrix<double> next = Matrix<double>::Zero(x.rows(), k);
    std::vector<Eigen::Index> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.col(r.labels[i]) += x.col(i);
      ++counts[r.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        next.col(c) /= static_cast<double>(counts[c]);
      } else {
        // Re-seed an empty cluster at the point farthest from its centroid.
        Eigen::Index far;
        dist.maxCoeff(&far);
        next.col(c) = x.col(far);
        dist[far] = 0.0;
      }
    }
    const double shift = (next - r.centroids).squaredNorm();
    r.centroids = std::move(next);
    if (shift <= tol) break;
  }
  r.iterations = std::min(r.iterations, options.max_iterations);
  assign();
  r.inertia = dist.sum();
  return r;
}

ClusterMasks kmeans_cluster_masks(const UNet<float>& model, const NoiseSchedule& schedule,
                                  std::span<const Image> images, int block, int timestep, int k, std::uint64_t seed,
                                  std::uint64_t noise_seed, const KMeansOptions& options) {
  if (images.empty()) throw ConfigError("kmeans_cluster_masks: no images");
  const FeatureExtractionConfig config{{block}, {timestep}, NoisePolicy::fixed_shared, noise_seed};
  std::vector<PixelFeatureVolume> volumes;
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    volumes.push_back(extract_features(model, schedule, images[i], config, i));
    total += volumes.back().features.pixels();
  }
  Matrix<float> points(volumes.front().channel_count(), total);
  Eigen::Index col = 0;
  for (const auto& v : volumes) {
    points.middleCols(col, v.features.pixels()) = v.features.data;
    col += v.features.pixels();
  }
  ClusterMasks out;
  out.clustering = kmeans(points, k, seed, options);
  col = 0;
  for (const auto& v : volumes) {
    Mask m(v.features.height, v.features.width);
    std::copy_n(out.clustering.labels.begin() + col, v.features.pixels(), m.data());
    col += v.features.pixels();
    out.masks.push_back(std::move(m));
  }
  return out;
}

void write_cluster_panels(const std::filesystem::path& path, std::span<const Image> images,
                          std::span<const Mask> masks) {
  if (images.size() != masks.size() || images.empty()) throw DimensionError("cluster panels need one mask per image");
  std::vector<Raster> rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    // Shift by one so cluster 0 is not drawn black.
    const Mask shifted = masks[i] + 1;
    rows.push_back(hstack({image_to_raster(images[i]), colorize_mask(shifted)}));
  }
  Raster out(rows.front().width, static_cast<int>(rows.size()) * (rows.front().height + 2) - 2, 3);
  std::fill(out.pixels.begin(), out.pixels.end(), std::uint8_t{255});
  int y0 = 0;
  for (const auto& r : rows) {
    if (r.width != out.width) throw DimensionError("cluster panels need images of equal size");
    std::copy(r.pixels.begin(), r.pixels.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(y0) * out.width * 3);
    y0 += r.height + 2;
  }
  write_png(path, out);
}

namespace {

TableRow make_row(std::string label, std::vector<double> values) {
  TableRow row{std::move(label), std::move(values), {}};
  row.summary = mean_std(row.values);
  return row;
}

double pipeline_miou(const ExperimentSetup& setup, std::span<const LabeledImage> train, NoisePolicy policy,
                     std::uint64_t seed) {
  const RunSeeds rs = run_seeds(seed);
  FeatureExtractionConfig config = setup.extraction;
  config.noise_policy = policy;
  config.noise_seed = rs.noise;
  const auto featurizer = ddpm_featurizer(*setup.model, *setup.schedule, config);
  return run_segmentation(featurizer, train, setup.test, setup.classifier, rs.classifier).report.mean_iou;
}

void require_setup(const ExperimentSetup& setup) {
  if (!setup.model || !setup.schedule) throw ConfigError("experiment needs a model and a schedule");
  if (setup.train.empty() || setup.test.empty()) throw ConfigError("experiment needs train and test images");
}

}  // namespace

NoiseAblation run_noise_ablation(const ExperimentSetup& setup, std::span<const NoisePolicy> policies,
                                 std::span<const std::uint64_t> seeds, double allowed_gap) {
  require_setup(setup);
  if (policies.empty() || seeds.empty()) throw ConfigError("noise ablation needs policies and seeds");
  NoiseAblation out;
  out.allowed_gap = allowed_gap;
  for (auto policy : policies) {
    std::vector<double> values;
    for (auto s : seeds) values.push_back(pipeline_miou(setup, setup.train, policy, s));
    out.rows.push_back(make_row(std::string(to_string(policy)), std::move(values)));
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : out.rows) {
    lo = std::min(lo, r.summary.mean);
    hi = std::max(hi, r.summary.mean);
  }
  out.max_gap = hi - lo;
  out.pass = out.max_gap <= allowed_gap;
  return out;
}

LabelBudgetSweep run_label_budget_sweep(const ExperimentSetup& setup, std::span<const int> budgets,
                                        std::span<const std::uint64_t> seeds, double slack) {
  require_setup(setup);
  if (budgets.empty() || seeds.empty()) throw ConfigError("label sweep needs budgets and seeds");
  LabelBudgetSweep out;
  out.slack = slack;
  out.budgets.assign(budgets.begin(), budgets.end());
  for (int n : budgets) {
    std::vector<double> values;
    for (auto s : seeds) {
      const auto subset = select_labeled(setup.train, n, s);
      values.push_back(pipeline_miou(setup, subset, setup.extraction.noise_policy, s));
    }
    out.rows.push_back(make_row("n=" + std::to_string(n), std::move(values)));
  }
  out.monotone = true;
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].summary.mean < out.rows[i - 1].summary.mean - slack) out.monotone = false;
  return out;
}

Robustness run_robustness(const ExperimentSetup& setup, std::span<const CorruptionKind> kinds,
                          std::span<const int> severities, std::span<const std::uint64_t> seeds) {
  require_setup(setup);
  if (kinds.empty() || severities.empty() || seeds.empty()) throw ConfigError("robustness needs kinds, severities and seeds");
  for (int s : severities)
    if (s < 0 || s > 5) throw ConfigError("severity must lie in [0, 5]");
  Robustness out;
  out.kinds.assign(kinds.begin(), kinds.end());
  out.severities.assign(severities.begin(), severities.end());
  for (auto kind : kinds)
    for (int sev : severities) out.cells.push_back({kind, sev, {}, {}});

  for (auto seed : seeds) {
    const RunSeeds rs = run_seeds(seed);
    FeatureExtractionConfig config = setup.extraction;
    config.noise_seed = rs.noise;
    const auto featurizer = ddpm_featurizer(*setup.model, *setup.schedule, config);
    const auto ensemble = fit_ensemble(featurizer, setup.train, setup.classifier, rs.classifier);
    out.clean.push_back(evaluate_ensemble(ensemble, featurizer, setup.test, setup.classifier.workers).mean_iou);
    for (auto& cell : out.cells) {
      std::vector<LabeledImage> corrupted(setup.test.begin(), setup.test.end());
      if (cell.severity > 0) {
        const auto kind_index = static_cast<std::uint64_t>(cell.kind);
        for (std::size_t i = 0; i < corrupted.size(); ++i) {
          corrupted[i] = corrupt(corrupted[i], CorruptionSpec{cell.kind, cell.severity, std::nullopt},
                                 derive_seed(derive_seed(rs.noise, kind_index, static_cast<std::uint64_t>(cell.severity)), i));
        }
      }
      cell.values.push_back(evaluate_ensemble(ensemble, featurizer, corrupted, setup.classifier.workers).mean_iou);
    }
  }
  for (auto& cell : out.cells) cell.summary = mean_std(cell.values);
  out.monotone = true;
  for (std::size_t j = 0; j < out.severities.size(); ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < out.kinds.size(); ++k) sum += out.cells[k * out.severities.size() + j].summary.mean;
    out.bucket_means.push_back(sum / static_cast<double>(out.kinds.size()));
    if (j > 0 && out.bucket_means[j] > out.bucket_means[j - 1]) out.monotone = false;
  }
  return out;
}

namespace {

std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

nlohmann::json row_json(const TableRow& r) {
  return {{"label", r.label}, {"values", r.values}, {"mean", r.summary.mean}, {"std", r.summary.std}};
}

std::string rows_csv(const std::vector<TableRow>& rows, const std::string& first_column) {
  std::string out = first_column + ",mean,std,values\n";
  for (const auto& r : rows) {
    out += r.label + "," + csv_number(r.summary.mean) + "," + csv_number(r.summary.std) + ",";
    for (std::size_t i = 0; i < r.values.size(); ++i) out += (i ? ";" : "") + csv_number(r.values[i]);
    out += "\n";
  }
  return out;
}

}  // namespace

void write_probe_outputs(const ProbeResult& result, const std::filesystem::path& directory, const std::string& stem) {
  std::filesystem::create_directories(directory);
  nlohmann::json cells = nlohmann::json::array();
  std::string csv = "block,timestep,miou,failure\n";
  std::vector<std::vector<std::optional<double>>> heat;
  for (int b : result.blocks) {
    heat.emplace_back();
    for (int t : result.timesteps) {
      const auto v = result.at(b, t);
      heat.back().push_back(v);
      const auto f = result.failures.find({b, t});
      const std::string failure = f == result.failures.end() ? "" : f->second;
      cells.push_back({{"block", b},
                       {"timestep", t},
                       {"miou", v ? nlohmann::json(*v) : nlohmann::json(nullptr)},
                       {"failure", failure}});
      std::string quoted = failure;
      std::replace(quoted.begin(), quoted.end(), ',', ';');
      csv += std::to_string(b) + "," + std::to_string(t) + "," + (v ? csv_number(*v) : "") + "," + quoted + "\n";
    }
  }
  const nlohmann::json j{{"blocks", result.blocks},
                         {"timesteps", result.timesteps},
                         {"train_size", result.train_size},
                         {"test_size", result.test_size},
                         {"noise_seed", result.options.noise_seed},
                         {"seed", result.options.seed},
                         {"probe_ensemble_size", result.options.classifier.ensemble_size},
                         {"cells", cells}};
  le::write_file_atomic(directory / (stem + ".json"), j.dump(2) + "\n");
  le::write_file_atomic(directory / (stem + ".csv"), csv);
  write_heatmap(directory / (stem + "_heatmap.png"), heat, result.blocks, result.timesteps);
  std::vector<Series> series;
  for (int b : result.blocks) {
    Series s{"block " + std::to_string(b), {}, {}};
    for (int t : result.timesteps)
      if (const auto v = result.at(b, t)) {
        s.x.push_back(t);
        s.y.push_back(*v);
      }
    series.push_back(std::move(s));
  }
  write_line_plot(directory / (stem + "_curves.png"), series);
}

void write_ablation_outputs(const NoiseAblation& table, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  nlohmann::json rows = nlohmann::json::array();
  std::vector<double> means, stds;
  for (const auto& r : table.rows) {
    rows.push_back(row_json(r));
    means.push_back(r.summary.mean);
    stds.push_back(r.summary.std);
  }
  const nlohmann::json j{{"rows", rows}, {"max_gap", table.max_gap}, {"allowed_gap", table.allowed_gap},
                         {"pass", table.pass}};
  le::write_file_atomic(directory / "noise_ablation.json", j.dump(2) + "\n");
  le::write_file_atomic(directory / "noise_ablation.csv", rows_csv(table.rows, "policy"));
  write_bar_chart(directory / "noise_ablation.png", means, stds);
}

void write_sweep_outputs(const LabelBudgetSweep& table, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  nlohmann::json rows = nlohmann::json::array();
  Series s{"mean miou", {}, {}};
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    auto r = row_json(table.rows[i]);
    r["budget"] = table.budgets[i];
    rows.push_back(r);
    s.x.push_back(table.budgets[i]);
    s.y.push_back(table.rows[i].summary.mean);
  }
  const nlohmann::json j{{"rows", rows}, {"slack", table.slack}, {"monotone", table.monotone}};
  le::write_file_atomic(directory / "label_budget.json", j.dump(2) + "\n");
  le::write_file_atomic(directory / "label_budget.csv", rows_csv(table.rows, "budget"));
  write_line_plot(directory / "label_budget.png", {s});
}

void write_robustness_outputs(const Robustness& table, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  nlohmann::json cells = nlohmann::json::array();
  std::string csv = "kind,severity,mean,std,values\n";
  std::vector<Series> series;
  for (std::size_t k = 0; k < table.kinds.size(); ++k) {
    Series s{std::string(to_string(table.kinds[k])), {}, {}};
    for (std::size_t j = 0; j < table.severities.size(); ++j) {
      const auto& c = table.cells[k * table.severities.size() + j];
      cells.push_back({{"kind", to_string(c.kind)},
                       {"severity", c.severity},
                       {"values", c.values},
                       {"mean", c.summary.mean},
                       {"std", c.summary.std}});
      csv += std::string(to_string(c.kind)) + "," + std::to_string(c.severity) + "," + csv_number(c.summary.mean) +
             "," + csv_number(c.summary.std) + ",";
      for (std::size_t i = 0; i < c.values.size(); ++i) csv += (i ? ";" : "") + csv_number(c.values[i]);
      csv += "\n";
      s.x.push_back(c.severity);
      s.y.push_back(c.summary.mean);
    }
    series.push_back(std::move(s));
  }
  Series mean{"mean over kinds", {}, table.bucket_means};
  for (int sev : table.severities) mean.x.push_back(sev);
  series.push_back(std::move(mean));
  const nlohmann::json j{{"severities", table.severities},
                         {"clean", table.clean},
                         {"cells", cells},
                         {"bucket_means", table.bucket_means},
                         {"monotone", table.monotone}};
  le::write_file_atomic(directory / "robustness.json", j.dump(2) + "\n");
  le::write_file_atomic(directory / "robustness.csv", csv);
  write_line_plot(directory / "robustness.png", series);
}

}  // namespace dseg
