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

#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dseg/analysis.hpp"
#include "dseg/container.hpp"
#include "dseg/diffusion.hpp"
#include "dseg/plot.hpp"
#include "dseg/run_config.hpp"

namespace dseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::optional<fs::path> config_file;
  std::vector<std::string> overrides;
  std::string profile;
  int workers = 0;
  bool resume = false;
  std::vector<std::string> images;
};

RunConfig resolve(const Options& opt) {
  auto overrides = opt.overrides;
  if (opt.workers > 0) overrides.push_back("workers=" + std::to_string(opt.workers));
  return load_run_config(opt.config_file, overrides, opt.profile);
}

std::string file_checksum(const fs::path& path) {
  const std::string bytes = le::read_file(path);
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

// Provenance record shared by every command of a run; each command replaces its own entry.
void record_run(const RunConfig& config, const std::string& command, json entry) {
  const fs::path path = config.run_dir() / "run.json";
  json doc = json::object();
  if (fs::exists(path)) {
    try {
      doc = json::parse(le::read_file(path));
    } catch (const json::exception&) {
      doc = json::object();
    }
  }
  doc["config_hash"] = hex64(config_hash(config));
  doc["config"] = json::parse(config.to_json());
  doc["seeds"] = {{"dataset", config.dataset.seed},
                  {"unet_init", config.ddpm.init_seed},
                  {"ddpm", config.ddpm.seed},
                  {"extraction_noise", config.extraction.noise_seed},
                  {"classifier", config.classifier.seed},
                  {"experiments", config.experiment.seeds}};
  doc["commands"][command] = std::move(entry);
  fs::create_directories(config.run_dir());
  le::write_file_atomic(path, doc.dump(2) + "\n");
}

DatasetSplit load_split(const RunConfig& config) {
  DatasetSplit split = load_dataset(config.dataset_dir());
  if (split.resolution != config.dataset.resolution || split.class_count != config.dataset.class_count) {
    throw ConfigError("dataset at " + config.dataset_dir().string() + " has resolution " +
                      std::to_string(split.resolution) + " and K=" + std::to_string(split.class_count) +
                      ", config expects " + std::to_string(config.dataset.resolution) + " and " +
                      std::to_string(config.dataset.class_count));
  }
  return split;
}

std::pair<UNet<float>, NoiseSchedule> load_model(const RunConfig& config) {
  auto [model, schedule] = load_checkpoint(config.checkpoint_path());
  if (!(model.config() == config.unet)) throw ConfigError("checkpoint UNet config differs from the run config");
  if (!(schedule == config.build_schedule())) throw ConfigError("checkpoint schedule differs from the run config");
  return {std::move(model), std::move(schedule)};
}

Featurizer make_featurizer(const RunConfig& config, const UNet<float>& model, const NoiseSchedule& schedule) {
  if (config.extraction.source == "rgb") return rgb_featurizer();
  return ddpm_featurizer(model, schedule, config.feature_config());
}

std::string id_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

void print(const std::string& line) { std::cout << line << std::endl; }

// ---------------------------------------------------------------------------

void cmd_gen_data(const RunConfig& config) {
  const auto& d = config.dataset;
  const auto split = generate_split(d.labeled, d.unlabeled, d.test, d.resolution, d.class_count, d.seed);
  save_dataset(split, config.dataset_dir());
  print("wrote dataset to " + config.dataset_dir().string());
  record_run(config, "gen-data", {{"dataset_dir", config.dataset_dir().string()},
                                  {"manifest_checksum", file_checksum(config.dataset_dir() / "manifest.json")}});
}

void write_sample_grid(const UNet<float>& model, const NoiseSchedule& schedule, int count, int resolution,
                       std::uint64_t seed, const fs::path& path) {
  if (count <= 0) return;
  std::vector<Raster> panels;
  const auto predictor = as_predictor(model);
  for (int i = 0; i < count; ++i) {
    panels.push_back(image_to_raster(sample(predictor, schedule, 3, resolution, resolution,
                                            derive_seed(seed, static_cast<std::uint64_t>(i)))));
  }
  fs::create_directories(path.parent_path());
  write_png(path, hstack(panels));
}

void cmd_train_ddpm(const RunConfig& config, bool resume) {
  const DatasetSplit split = load_split(config);
  const auto images = split.all_train_images();
  const NoiseSchedule schedule = config.build_schedule();
  const fs::path dir = config.run_dir();
  const fs::path state_path = dir / "ddpm_state.dseg";
  const fs::path loss_path = dir / "loss.csv";
  fs::create_directories(dir);

  const DdpmTrainingOptions options{config.ddpm.steps, config.ddpm.batch_size, config.ddpm.learning_rate,
                                    config.ddpm.seed};
  std::optional<DdpmTrainer> trainer;
  std::vector<std::string> loss_rows;
  if (resume && fs::exists(config.checkpoint_path()) && fs::exists(state_path)) {
    auto [model, stored] = load_model(config);
    trainer.emplace(std::move(model), stored, options);
    trainer->load_state(state_path);
    if (fs::exists(loss_path)) {
      std::istringstream in(le::read_file(loss_path));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (std::stoi(line.substr(0, line.find(','))) <= trainer->completed_steps()) loss_rows.push_back(line);
      }
    }
    print("resumed at step " + std::to_string(trainer->completed_steps()));
  } else {
    trainer.emplace(build_unet(config.unet, config.ddpm.init_seed), schedule, options);
  }

  auto flush = [&] {
    save_checkpoint(trainer->model(), schedule, config.checkpoint_path());
    trainer->save_state(state_path);
    std::string csv = "step,loss\n";
    for (const auto& r : loss_rows) csv += r + "\n";
    le::write_file_atomic(loss_path, csv);
  };

  while (trainer->completed_steps() < config.ddpm.steps) {
    const double loss = trainer->step(images);  // TrainingFault leaves the last checkpoint in place
    const int step = trainer->completed_steps();
    std::ostringstream row;
    row.precision(9);
    row << step << ',' << loss;
    loss_rows.push_back(row.str());
    if (step % config.ddpm.checkpoint_every == 0 || step == config.ddpm.steps) flush();
    if (step % config.ddpm.sample_every == 0 || step == config.ddpm.steps) {
      write_sample_grid(trainer->model(), schedule, config.ddpm.sample_count, config.dataset.resolution,
                        derive_seed(config.ddpm.seed, 0x5a, static_cast<std::uint64_t>(step)),
                        dir / "samples" / ("step_" + id_name(static_cast<std::size_t>(step)) + ".png"));
    }
    if (step % 50 == 0) print("step " + std::to_string(step) + " loss " + row.str().substr(row.str().find(',') + 1));
  }
  if (!fs::exists(config.checkpoint_path())) flush();
  print("checkpoint " + config.checkpoint_path().string());
  record_run(config, "train-ddpm", {{"checkpoint", config.checkpoint_path().string()},
                                    {"checkpoint_checksum", file_checksum(config.checkpoint_path())},
                                    {"parameter_checksum", hex64(parameter_checksum(trainer->model().parameters()))},
                                    {"steps", trainer->completed_steps()}});
}

void cmd_extract(const RunConfig& config) {
  const DatasetSplit split = load_split(config);
  const fs::path dir = config.run_dir() / "features" / "labeled";
  fs::create_directories(dir);
  json checksums = json::object();
  std::optional<std::pair<UNet<float>, NoiseSchedule>> loaded;
  if (config.extraction.source == "ddpm") loaded.emplace(load_model(config));
  const auto featurizer = loaded ? make_featurizer(config, loaded->first, loaded->second) : rgb_featurizer();
  for (std::size_t i = 0; i < split.labeled_train.size(); ++i) {
    const fs::path path = dir / (id_name(i) + ".ddpf");
    save_features(featurizer(split.labeled_train[i].pixels, i), path);
    checksums[path.filename().string()] = file_checksum(path);
  }
  print("wrote " + std::to_string(split.labeled_train.size()) + " feature files to " + dir.string());
  json entry{{"features_dir", dir.string()}, {"feature_checksums", checksums}};
  if (loaded) entry["checkpoint_checksum"] = file_checksum(config.checkpoint_path());
  record_run(config, "extract", entry);
}

void cmd_train_seg(const RunConfig& config) {
  const DatasetSplit split = load_split(config);
  const fs::path dir = config.run_dir() / "features" / "labeled";
  std::vector<PixelFeatureVolume> volumes;
  std::vector<Mask> masks;
  for (std::size_t i = 0; i < split.labeled_train.size(); ++i) {
    volumes.push_back(load_features(dir / (id_name(i) + ".ddpf")));
    masks.push_back(split.labeled_train[i].mask);
  }
  const auto ensemble =
      fit_ensemble_on_volumes(volumes, masks, split.class_count, config.classifier.options, config.classifier.seed);
  const fs::path path = config.run_dir() / "ensemble.dseg";
  save_ensemble(ensemble, path);
  print("ensemble of " + std::to_string(ensemble.size()) + " written to " + path.string());
  record_run(config, "train-seg", {{"ensemble", path.string()}, {"ensemble_checksum", file_checksum(path)},
                                   {"member_seeds", ensemble.member_seeds}});
}

struct Segmenter {
  std::optional<std::pair<UNet<float>, NoiseSchedule>> model;
  Featurizer featurizer;
  EnsembleModel ensemble;

  explicit Segmenter(const RunConfig& config) {
    if (config.extraction.source == "ddpm") model.emplace(load_model(config));
    featurizer = model ? make_featurizer(config, model->first, model->second) : rgb_featurizer();
    const int dim = model ? static_cast<int>(feature_layout(config.unet, config.feature_config()).back().offset +
                                             feature_layout(config.unet, config.feature_config()).back().count)
                          : 3;
    ensemble = load_ensemble(config.run_dir() / "ensemble.dseg", dim);
  }
};

void cmd_evaluate(const RunConfig& config) {
  const DatasetSplit split = load_split(config);
  Segmenter seg(config);
  const MetricsReport report = evaluate_ensemble(seg.ensemble, seg.featurizer, split.test, config.workers);
  const fs::path dir = config.run_dir() / "eval";
  fs::create_directories(dir);
  const auto names = class_names(split.class_count);
  write_report_json(report, dir / "report.json", names);
  write_per_class_csv(report, dir / "per_class_iou.csv", names);
  std::ostringstream line;
  line << "test mIoU " << report.mean_iou << " pixel accuracy " << report.pixel_accuracy;
  print(line.str());
  record_run(config, "evaluate", {{"report", (dir / "report.json").string()},
                                  {"report_checksum", file_checksum(dir / "report.json")},
                                  {"mean_iou", report.mean_iou}});
}

void cmd_segment(const RunConfig& config, const std::vector<std::string>& images) {
  if (images.empty()) throw ConfigError("segment needs at least one image path");
  Segmenter seg(config);
  const fs::path dir = config.run_dir() / "segment";
  fs::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image image = raster_to_image(read_png(images[i]));
    if (image.height != config.dataset.resolution || image.width != config.dataset.resolution) {
      throw ConfigError(images[i] + " is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                        ", the model expects " + std::to_string(config.dataset.resolution));
    }
    const Mask mask = predict_mask(seg.ensemble, seg.featurizer(image, kTestDrawOffset + i));
    const std::string stem = fs::path(images[i]).stem().string();
    Raster gray(static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 1);
    for (Eigen::Index p = 0; p < mask.size(); ++p) gray.pixels[p] = static_cast<std::uint8_t>(mask.data()[p]);
    write_png(dir / (stem + "_mask.png"), gray);
    write_png(dir / (stem + "_panel.png"), hstack({image_to_raster(image), overlay_mask(image, mask), colorize_mask(mask)}));
    print("segmented " + images[i]);
  }
  record_run(config, "segment", {{"images", images}, {"output_dir", dir.string()}});
}

std::vector<int> fraction_timesteps(const NoiseSchedule& schedule, const std::vector<double>& fractions) {
  std::vector<int> out;
  for (double f : fractions) out.push_back(schedule.timestep_from_fraction(f));
  return out;
}

void cmd_probe(const RunConfig& config) {
  const DatasetSplit split = load_split(config);
  const auto [model, schedule] = load_model(config);
  std::vector<int> blocks = config.experiment.probe_blocks;
  if (blocks.empty())
    for (int b = 1; b <= model.decoder_block_count(); ++b) blocks.push_back(b);
  ProbeOptions options;
  options.classifier = config.classifier.options;
  options.classifier.ensemble_size = 1;
  options.noise_seed = config.extraction.noise_seed;
  options.seed = config.classifier.seed;
  const auto result =
      run_area_stratified_probe(model, schedule, split.labeled_train, split.test, blocks,
                                fraction_timesteps(schedule, config.experiment.probe_timestep_fractions),
                                config.experiment.area_quantile, options);
  const fs::path dir = config.run_dir() / "probe";
  write_probe_outputs(result.full, dir, "probe_grid");
  write_probe_outputs(result.small, dir, "probe_small_classes");
  write_probe_outputs(result.large, dir, "probe_large_classes");
  le::write_file_atomic(dir / "area_split.json", json{{"small_classes", result.split.small_classes},
                                                      {"large_classes", result.split.large_classes},
                                                      {"mean_area", result.split.mean_area},
                                                      {"quantile", config.experiment.area_quantile}}
                                                         .dump(2) +
                                                     "\n");
  print("probe grid with " + std::to_string(result.full.grid.size()) + " cells written to " + dir.string());
  record_run(config, "probe", {{"output_dir", dir.string()}, {"failures", result.full.failures.size()}});
}

void cmd_kmeans(const RunConfig& config) {
  const DatasetSplit split = load_split(config);
  const auto [model, schedule] = load_model(config);
  const int count = std::min<int>(config.experiment.kmeans_images, static_cast<int>(split.test.size()));
  std::vector<Image> images;
  for (int i = 0; i < count; ++i) images.push_back(split.test[i].pixels);
  const int block = config.experiment.kmeans_block > 0 ? config.experiment.kmeans_block
                                                       : config.feature_config().blocks.front();
  const int t = schedule.timestep_from_fraction(config.experiment.kmeans_timestep_fraction);
  const auto clusters = kmeans_cluster_masks(model, schedule, images, block, t, config.experiment.kmeans_k,
                                             config.experiment.kmeans_seed, config.extraction.noise_seed);
  const fs::path dir = config.run_dir() / "kmeans";
  fs::create_directories(dir / "masks");
  for (std::size_t i = 0; i < clusters.masks.size(); ++i) {
    const Mask& m = clusters.masks[i];
    Raster gray(static_cast<int>(m.cols()), static_cast<int>(m.rows()), 1);
    for (Eigen::Index p = 0; p < m.size(); ++p) gray.pixels[p] = static_cast<std::uint8_t>(m.data()[p]);
    write_png(dir / "masks" / (id_name(i) + ".png"), gray);
  }
  write_cluster_panels(dir / "clusters.png", images, clusters.masks);
  le::write_file_atomic(dir / "kmeans.json", json{{"block", block},
                                                  {"timestep", t},
                                                  {"k", config.experiment.kmeans_k},
                                                  {"iterations", clusters.clustering.iterations},
                                                  {"inertia", clusters.clustering.inertia}}
                                                     .dump(2) +
                                                 "\n");
  print("k-means masks written to " + dir.string());
  record_run(config, "kmeans", {{"output_dir", dir.string()}});
}

struct Experiment {
  DatasetSplit split;
  UNet<float> model;
  NoiseSchedule schedule;
  ExperimentSetup setup;

  explicit Experiment(const RunConfig& config) : split(load_split(config)) {
    std::tie(model, schedule) = load_model(config);
    setup.model = &model;
    setup.schedule = &schedule;
    setup.train = split.labeled_train;
    setup.test = split.test;
    setup.extraction = config.feature_config();
    setup.classifier = config.classifier.options;
  }
};

void cmd_ablate_noise(const RunConfig& config) {
  const Experiment e(config);
  const std::vector<NoisePolicy> policies{NoisePolicy::fixed_shared, NoisePolicy::per_timestep_shared,
                                          NoisePolicy::resampled};
  const auto table = run_noise_ablation(e.setup, policies, config.experiment.seeds, config.experiment.noise_gap);
  write_ablation_outputs(table, config.run_dir() / "ablate_noise");
  for (const auto& r : table.rows) {
    std::ostringstream line;
    line << r.label << " " << r.summary.mean << " +- " << r.summary.std;
    print(line.str());
  }
  print(std::string("gap check ") + (table.pass ? "PASS" : "FAIL"));
  record_run(config, "ablate-noise", {{"pass", table.pass}, {"max_gap", table.max_gap}});
}

void cmd_sweep_labels(const RunConfig& config) {
  const Experiment e(config);
  const auto table = run_label_budget_sweep(e.setup, config.experiment.label_budgets, config.experiment.seeds,
                                            config.experiment.budget_slack);
  write_sweep_outputs(table, config.run_dir() / "sweep_labels");
  for (const auto& r : table.rows) {
    std::ostringstream line;
    line << r.label << " " << r.summary.mean << " +- " << r.summary.std;
    print(line.str());
  }
  print(std::string("monotone ") + (table.monotone ? "PASS" : "FAIL"));
  record_run(config, "sweep-labels", {{"monotone", table.monotone}});
}

void cmd_robustness(const RunConfig& config) {
  const Experiment e(config);
  std::vector<CorruptionKind> kinds;
  for (const auto& name : config.experiment.corruptions) kinds.push_back(corruption_from_string(name));
  const auto table = run_robustness(e.setup, kinds, config.experiment.severities, config.experiment.seeds);
  write_robustness_outputs(table, config.run_dir() / "robustness");
  for (std::size_t j = 0; j < table.severities.size(); ++j) {
    std::ostringstream line;
    line << "severity " << table.severities[j] << " mean mIoU " << table.bucket_means[j];
    print(line.str());
  }
  print(std::string("monotone ") + (table.monotone ? "PASS" : "FAIL"));
  record_run(config, "robustness", {{"monotone", table.monotone}, {"bucket_means", table.bucket_means}});
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"dseg: diffusion-feature few-shot segmentation lab"};
  app.require_subcommand(1);
  Options opt;
  std::string config_file;
  app.add_option("-c,--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("-p,--profile", opt.profile, "Profile of a config file to apply over its defaults");
  app.add_option("--set", opt.overrides, "Override a config field, e.g. --set ddpm.steps=500")->take_all();
  app.add_option("--workers", opt.workers, "Parallel workers for independent work items")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Generate and save the synthetic shapes dataset");
  auto* train = app.add_subcommand("train-ddpm", "Train the diffusion model on labeled + unlabeled images");
  train->add_flag("--resume", opt.resume, "Continue from the run's checkpoint and optimizer state");
  auto* extract = app.add_subcommand("extract", "Extract and save features for the labeled split");
  auto* train_seg = app.add_subcommand("train-seg", "Train the MLP ensemble from saved features");
  auto* segment = app.add_subcommand("segment", "Predict masks and overlays for PNG images");
  segment->add_option("images", opt.images, "Input PNG files")->required()->check(CLI::ExistingFile);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate the ensemble on the test split");
  auto* probe = app.add_subcommand("probe", "Per (block, timestep) probe grid, also split by class area");
  auto* kmeans_cmd = app.add_subcommand("kmeans", "k-means cluster masks of one block and timestep");
  auto* ablate = app.add_subcommand("ablate-noise", "Compare the three noise policies");
  auto* sweep = app.add_subcommand("sweep-labels", "mIoU against the number of labeled images");
  auto* robust = app.add_subcommand("robustness", "mIoU under corrupted test images");
  auto* show = app.add_subcommand("show-config", "Print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (!config_file.empty()) opt.config_file = config_file;

  try {
    const RunConfig config = resolve(opt);
    if (gen->parsed()) cmd_gen_data(config);
    else if (train->parsed()) cmd_train_ddpm(config, opt.resume);
    else if (extract->parsed()) cmd_extract(config);
    else if (train_seg->parsed()) cmd_train_seg(config);
    else if (segment->parsed()) cmd_segment(config, opt.images);
    else if (evaluate->parsed()) cmd_evaluate(config);
    else if (probe->parsed()) cmd_probe(config);
    else if (kmeans_cmd->parsed()) cmd_kmeans(config);
    else if (ablate->parsed()) cmd_ablate_noise(config);
    else if (sweep->parsed()) cmd_sweep_labels(config);
    else if (robust->parsed()) cmd_robustness(config);
    else if (show->parsed()) std::cout << config.to_json();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dseg::cli
