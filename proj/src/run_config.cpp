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

#include "dseg/run_config.hpp"

#include <cstdlib>

#include <json.hpp>

#include "dseg/container.hpp"

namespace dseg {

using nlohmann::json;

namespace {

json as_json(const RunConfig& c) {
  const auto& d = c.dataset;
  const auto& s = c.schedule;
  const auto& u = c.unet;
  const auto& t = c.ddpm;
  const auto& x = c.extraction;
  const auto& o = c.classifier.options;
  const auto& e = c.experiment;
  return {
      {"run_name", c.run_name},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
      {"dataset",
       {{"path", d.path}, {"resolution", d.resolution}, {"class_count", d.class_count}, {"labeled", d.labeled},
        {"unlabeled", d.unlabeled}, {"test", d.test}, {"seed", d.seed}}},
      {"schedule", {{"steps", s.steps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}}},
      {"unet",
       {{"base_channels", u.base_channels}, {"channel_multipliers", u.channel_multipliers},
        {"blocks_per_resolution", u.blocks_per_resolution}, {"time_embedding_dim", u.time_embedding_dim}}},
      {"ddpm",
       {{"steps", t.steps}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate}, {"seed", t.seed},
        {"init_seed", t.init_seed}, {"checkpoint_every", t.checkpoint_every}, {"sample_every", t.sample_every},
        {"sample_count", t.sample_count}}},
      {"extraction",
       {{"blocks", x.blocks}, {"timestep_fractions", x.timestep_fractions},
        {"noise_policy", std::string(to_string(x.noise_policy))}, {"noise_seed", x.noise_seed}, {"source", x.source}}},
      {"classifier",
       {{"ensemble_size", o.ensemble_size}, {"hidden_dims", o.hidden_dims}, {"learning_rate", o.learning_rate},
        {"batch_size", o.batch_size}, {"epochs", o.epochs}, {"class_weighting", o.class_weighting},
        {"seed", c.classifier.seed}}},
      {"experiment",
       {{"seeds", e.seeds}, {"probe_blocks", e.probe_blocks}, {"probe_timestep_fractions", e.probe_timestep_fractions},
        {"area_quantile", e.area_quantile}, {"kmeans_k", e.kmeans_k}, {"kmeans_block", e.kmeans_block},
        {"kmeans_timestep_fraction", e.kmeans_timestep_fraction}, {"kmeans_images", e.kmeans_images},
        {"kmeans_seed", e.kmeans_seed}, {"noise_gap", e.noise_gap}, {"label_budgets", e.label_budgets},
        {"budget_slack", e.budget_slack}, {"corruptions", e.corruptions}, {"severities", e.severities}}},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  j.at("run_name").get_to(c.run_name);
  j.at("output_dir").get_to(c.output_dir);
  j.at("workers").get_to(c.workers);
  const auto& d = j.at("dataset");
  d.at("path").get_to(c.dataset.path);
  d.at("resolution").get_to(c.dataset.resolution);
  d.at("class_count").get_to(c.dataset.class_count);
  d.at("labeled").get_to(c.dataset.labeled);
  d.at("unlabeled").get_to(c.dataset.unlabeled);
  d.at("test").get_to(c.dataset.test);
  d.at("seed").get_to(c.dataset.seed);
  const auto& s = j.at("schedule");
  s.at("steps").get_to(c.schedule.steps);
  s.at("beta_start").get_to(c.schedule.beta_start);
  s.at("beta_end").get_to(c.schedule.beta_end);
  const auto& u = j.at("unet");
  u.at("base_channels").get_to(c.unet.base_channels);
  u.at("channel_multipliers").get_to(c.unet.channel_multipliers);
  u.at("blocks_per_resolution").get_to(c.unet.blocks_per_resolution);
  u.at("time_embedding_dim").get_to(c.unet.time_embedding_dim);
  c.unet.input_resolution = c.dataset.resolution;
  const auto& t = j.at("ddpm");
  t.at("steps").get_to(c.ddpm.steps);
  t.at("batch_size").get_to(c.ddpm.batch_size);
  t.at("learning_rate").get_to(c.ddpm.learning_rate);
  t.at("seed").get_to(c.ddpm.seed);
  t.at("init_seed").get_to(c.ddpm.init_seed);
  t.at("checkpoint_every").get_to(c.ddpm.checkpoint_every);
  t.at("sample_every").get_to(c.ddpm.sample_every);
  t.at("sample_count").get_to(c.ddpm.sample_count);
  const auto& x = j.at("extraction");
  x.at("blocks").get_to(c.extraction.blocks);
  x.at("timestep_fractions").get_to(c.extraction.timestep_fractions);
  c.extraction.noise_policy = noise_policy_from_string(x.at("noise_policy").get<std::string>());
  x.at("noise_seed").get_to(c.extraction.noise_seed);
  x.at("source").get_to(c.extraction.source);
  const auto& o = j.at("classifier");
  o.at("ensemble_size").get_to(c.classifier.options.ensemble_size);
  o.at("hidden_dims").get_to(c.classifier.options.hidden_dims);
  o.at("learning_rate").get_to(c.classifier.options.learning_rate);
  o.at("batch_size").get_to(c.classifier.options.batch_size);
  o.at("epochs").get_to(c.classifier.options.epochs);
  o.at("class_weighting").get_to(c.classifier.options.class_weighting);
  o.at("seed").get_to(c.classifier.seed);
  c.classifier.options.workers = c.workers;
  const auto& e = j.at("experiment");
  e.at("seeds").get_to(c.experiment.seeds);
  e.at("probe_blocks").get_to(c.experiment.probe_blocks);
  e.at("probe_timestep_fractions").get_to(c.experiment.probe_timestep_fractions);
  e.at("area_quantile").get_to(c.experiment.area_quantile);
  e.at("kmeans_k").get_to(c.experiment.kmeans_k);
  e.at("kmeans_block").get_to(c.experiment.kmeans_block);
  e.at("kmeans_timestep_fraction").get_to(c.experiment.kmeans_timestep_fraction);
  e.at("kmeans_images").get_to(c.experiment.kmeans_images);
  e.at("kmeans_seed").get_to(c.experiment.kmeans_seed);
  e.at("noise_gap").get_to(c.experiment.noise_gap);
  e.at("label_budgets").get_to(c.experiment.label_budgets);
  e.at("budget_slack").get_to(c.experiment.budget_slack);
  e.at("corruptions").get_to(c.experiment.corruptions);
  e.at("severities").get_to(c.experiment.severities);
  return c;
}

void reject_unknown_keys(const json& defaults, const json& given, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key: " + path);
    if (value.is_object()) {
      if (!defaults.at(key).is_object()) throw ConfigError("config key " + path + " is not a section");
      reject_unknown_keys(defaults.at(key), value, path);
    }
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key: " + path);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("cannot override a whole section: " + path);
  *node = std::move(value);
}

}  // namespace

std::string RunConfig::to_json() const { return as_json(*this).dump(2) + "\n"; }

void RunConfig::validate() const {
  if (run_name.empty() || run_name.find('/') != std::string::npos) throw ConfigError("run_name must be a plain name");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!dataset.path.empty() && !std::filesystem::exists(dataset.path)) {
    throw ConfigError("dataset.path does not exist: " + dataset.path);
  }
  if (dataset.labeled < 1 || dataset.unlabeled < 0 || dataset.test < 1) throw ConfigError("dataset split sizes invalid");
  unet.validate();
  if (ddpm.steps < 0 || ddpm.batch_size < 1 || !(ddpm.learning_rate > 0.0)) throw ConfigError("ddpm section invalid");
  if (ddpm.checkpoint_every < 1 || ddpm.sample_every < 1 || ddpm.sample_count < 0) {
    throw ConfigError("ddpm checkpoint/sample cadence must be positive");
  }
  auto check_fractions = [](const std::vector<double>& f, const char* what) {
    if (f.empty()) throw ConfigError(std::string(what) + " must be non-empty");
    for (double v : f)
      if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(what) + " must lie in (0, 1)");
  };
  check_fractions(extraction.timestep_fractions, "extraction.timestep_fractions");
  check_fractions(experiment.probe_timestep_fractions, "experiment.probe_timestep_fractions");
  check_fractions({experiment.kmeans_timestep_fraction}, "experiment.kmeans_timestep_fraction");
  if (extraction.source != "ddpm" && extraction.source != "rgb") throw ConfigError("extraction.source must be ddpm or rgb");
  classifier.options.validate();
  (void)build_schedule();
  (void)feature_config();
  if (experiment.seeds.empty()) throw ConfigError("experiment.seeds must be non-empty");
  for (const auto& name : experiment.corruptions) (void)corruption_from_string(name);
  for (int n : experiment.label_budgets)
    if (n < 1 || n > dataset.labeled) throw ConfigError("label budgets must lie in [1, dataset.labeled]");
}

std::filesystem::path RunConfig::run_dir() const { return std::filesystem::path(output_dir) / run_name; }

std::filesystem::path RunConfig::dataset_dir() const {
  return dataset.path.empty() ? run_dir() / "data" : std::filesystem::path(dataset.path);
}

std::filesystem::path RunConfig::checkpoint_path() const { return run_dir() / "ddpm.dseg"; }

NoiseSchedule RunConfig::build_schedule() const {
  return dseg::build_schedule(schedule.steps, schedule.beta_start, schedule.beta_end);
}

FeatureExtractionConfig RunConfig::feature_config() const {
  const NoiseSchedule s = build_schedule();
  FeatureExtractionConfig f;
  f.blocks = extraction.blocks.empty() ? default_feature_blocks(unet.decoder_block_count()) : extraction.blocks;
  for (double frac : extraction.timestep_fractions) f.timesteps.push_back(s.timestep_from_fraction(frac));
  std::sort(f.timesteps.begin(), f.timesteps.end());
  f.timesteps.erase(std::unique(f.timesteps.begin(), f.timesteps.end()), f.timesteps.end());
  f.noise_policy = extraction.noise_policy;
  f.noise_seed = extraction.noise_seed;
  f.validate(unet.decoder_block_count(), s.steps());
  return f;
}

std::string default_config_json() { return RunConfig{}.to_json(); }

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          const std::string& profile) {
  const json defaults = as_json(RunConfig{});
  json doc = defaults;
  if (file) {
    json given;
    try {
      given = json::parse(le::read_file(*file));
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + file->string() + " is not valid JSON: " + e.what());
    } catch (const LoadError& e) {
      throw ConfigError(e.what());
    }
    if (!given.is_object()) throw ConfigError("config " + file->string() + " must be a JSON object");
    auto apply = [&](const json& section) {
      if (!section.is_object()) throw ConfigError("config profile in " + file->string() + " must be a JSON object");
      reject_unknown_keys(defaults, section, "");
      doc.merge_patch(section);
    };
    if (given.contains("defaults")) {
      // Profile document: "defaults" first, then the named profile on top.
      apply(given.at("defaults"));
      if (!profile.empty() && profile != "defaults") {
        if (!given.contains(profile)) throw ConfigError("profile '" + profile + "' not found in " + file->string());
        apply(given.at(profile));
      }
    } else {
      if (!profile.empty()) throw ConfigError("config " + file->string() + " has no profiles");
      apply(given);
    }
  } else if (!profile.empty()) {
    throw ConfigError("--profile needs a config file");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (const char* out = std::getenv("DSEG_OUT"); out && *out) doc["output_dir"] = out;
  RunConfig config;
  try {
    config = from_json(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  config.validate();
  return config;
}

std::uint64_t config_hash(const RunConfig& config) {
  const std::string text = config.to_json();
  return fnv1a64(text.data(), text.size());
}

}  // namespace dseg
