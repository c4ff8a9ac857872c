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

#include "dseg/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "dseg/adam.hpp"
#include "dseg/container.hpp"

namespace dseg {

void MLPConfig::validate() const {
  if (input_dim < 1) throw ConfigError("mlp input_dim must be >= 1");
  if (hidden_dims.size() != 2) throw ConfigError("mlp needs exactly two hidden layers");
  if (hidden_dims[0] < 1 || hidden_dims[1] < 1) throw ConfigError("mlp hidden widths must be positive");
  if (class_count < 2) throw ConfigError("mlp needs at least 2 classes");
  if (!(learning_rate > 0.0)) throw ConfigError("mlp learning_rate must be > 0");
  if (batch_size < 2) throw ConfigError("mlp batch_size must be >= 2");
  if (!(epochs > 0.0)) throw ConfigError("mlp epochs must be > 0");
}

MLPConfig default_mlp_config(int input_dim, int class_count) {
  MLPConfig c;
  c.input_dim = input_dim;
  c.class_count = class_count;
  c.hidden_dims = class_count < 30 ? std::vector<int>{128, 32} : std::vector<int>{256, 128};
  c.learning_rate = 1e-3;
  c.batch_size = 64;
  c.epochs = 4.0;
  return c;
}

template <typename Scalar>
Matrix<Scalar> Mlp<Scalar>::bn_forward(const BnSpec& s, const Matrix<Scalar>& x, bool training, Matrix<Scalar>* x_hat,
                                       Vector<Scalar>* rstd_out, bool update_running) {
  Vector<Scalar> mean, var;
  if (training) {
    const auto n = static_cast<Scalar>(x.cols());
    mean = x.rowwise().mean();
    var = (x.colwise() - mean).array().square().rowwise().sum().matrix() / n;
    if (update_running) {
      const auto m = static_cast<Scalar>(kMomentum);
      const Scalar unbias = x.cols() > 1 ? n / (n - Scalar(1)) : Scalar(1);
      params_[s.running_mean].value = (Scalar(1) - m) * params_[s.running_mean].value + m * mean;
      params_[s.running_var].value = (Scalar(1) - m) * params_[s.running_var].value + m * unbias * var;
    }
  } else {
    mean = params_[s.running_mean].value;
    var = params_[s.running_var].value;
  }
  const Vector<Scalar> rstd = (var.array() + static_cast<Scalar>(kEps)).rsqrt().matrix();
  Matrix<Scalar> hat = (x.colwise() - mean).array().colwise() * rstd.array();
  Matrix<Scalar> y = (hat.array().colwise() * params_[s.gamma].value.array()).colwise() + params_[s.beta].value.array();
  if (x_hat) *x_hat = std::move(hat);
  if (rstd_out) *rstd_out = rstd;
  return y;
}

template <typename Scalar>
Matrix<Scalar> Mlp<Scalar>::bn_backward(const BnSpec& s, const Matrix<Scalar>& x_hat, const Vector<Scalar>& rstd,
                                        const Matrix<Scalar>& dy) {
  params_[s.gamma].grad += (dy.array() * x_hat.array()).rowwise().sum().matrix();
  params_[s.beta].grad += dy.rowwise().sum();
  const Matrix<Scalar> d_hat = dy.array().colwise() * params_[s.gamma].value.array();
  const auto n = static_cast<Scalar>(dy.cols());
  const Vector<Scalar> sum_d = d_hat.rowwise().sum();
  const Vector<Scalar> sum_dx = (d_hat.array() * x_hat.array()).rowwise().sum().matrix();
  Matrix<Scalar> dx = (n * d_hat.array()).colwise() - sum_d.array();
  dx.array() -= x_hat.array().colwise() * sum_dx.array();
  dx.array().colwise() *= rstd.array() / n;
  return dx;
}

template <typename Scalar>
Matrix<Scalar> Mlp<Scalar>::forward(const Matrix<Scalar>& x, bool training, Cache* cache, bool update_running) {
  if (x.rows() != config_.input_dim) {
    throw DimensionError("mlp expects input_dim " + std::to_string(config_.input_dim) + ", got " +
                         std::to_string(x.rows()));
  }
  Matrix<Scalar> z1 = dense(l1_, x);
  Matrix<Scalar> n1_hat, n2_hat;
  Vector<Scalar> rstd1, rstd2;
  Matrix<Scalar> n1 = bn_forward(bn1_, z1.cwiseMax(Scalar(0)), training, &n1_hat, &rstd1, update_running);
  Matrix<Scalar> z2 = dense(l2_, n1);
  Matrix<Scalar> n2 = bn_forward(bn2_, z2.cwiseMax(Scalar(0)), training, &n2_hat, &rstd2, update_running);
  Matrix<Scalar> logits = dense(l3_, n2);
  if (cache) {
    cache->x = x;
    cache->z1 = std::move(z1);
    cache->n1_hat = std::move(n1_hat);
    cache->n1 = std::move(n1);
    cache->z2 = std::move(z2);
    cache->n2_hat = std::move(n2_hat);
    cache->n2 = std::move(n2);
    cache->rstd1 = std::move(rstd1);
    cache->rstd2 = std::move(rstd2);
  }
  return logits;
}

template <typename Scalar>
void Mlp<Scalar>::backward(const Cache& c, const Matrix<Scalar>& d_logits) {
  Matrix<Scalar> d = dense_backward(l3_, c.n2, d_logits);
  d = bn_backward(bn2_, c.n2_hat, c.rstd2, d);
  d = (c.z2.array() > Scalar(0)).select(d, Scalar(0));
  d = dense_backward(l2_, c.n1, d);
  d = bn_backward(bn1_, c.n1_hat, c.rstd1, d);
  d = (c.z1.array() > Scalar(0)).select(d, Scalar(0));
  // Gradient w.r.t. the input is not needed.
  params_.grad_matrix(l1_.weight, l1_.out, l1_.in).noalias() += d * c.x.transpose();
  params_[l1_.bias].grad += d.rowwise().sum();
}

template <typename Scalar>
std::vector<int> Mlp<Scalar>::predict(const Matrix<Scalar>& x) const {
  const Matrix<Scalar> logits = const_cast<Mlp*>(this)->forward(x, false, nullptr, false);
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index best;
    logits.col(j).maxCoeff(&best);
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

template class Mlp<float>;
template class Mlp<double>;

template <typename Scalar>
double cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels, const std::vector<double>* class_weights,
                     Matrix<Scalar>* d_logits) {
  const Eigen::Index n = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw DimensionError("cross_entropy: label count mismatch");
  double total = 0.0, weight_sum = 0.0;
  if (d_logits) d_logits->resize(logits.rows(), n);
  std::vector<double> w(n, 1.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (class_weights) w[j] = (*class_weights)[labels[j]];
    weight_sum += w[j];
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto col = logits.col(j).template cast<double>();
    const double mx = col.maxCoeff();
    const Eigen::VectorXd e = (col.array() - mx).exp();
    const double z = e.sum();
    total += w[j] * (std::log(z) + mx - col[labels[j]]);
    if (d_logits) {
      Eigen::VectorXd g = e / z;
      g[labels[j]] -= 1.0;
      d_logits->col(j) = (g * (w[j] / weight_sum)).template cast<Scalar>();
    }
  }
  return total / weight_sum;
}

template double cross_entropy<float>(const Matrix<float>&, std::span<const int>, const std::vector<double>*,
                                     Matrix<float>*);
template double cross_entropy<double>(const Matrix<double>&, std::span<const int>, const std::vector<double>*,
                                      Matrix<double>*);

Matrix<float> pixel_matrix(const PixelFeatureVolume& volume) { return volume.features.data; }

PixelSamples gather_pixels(std::span<const PixelFeatureVolume> volumes, std::span<const Mask> masks) {
  if (volumes.size() != masks.size()) throw DimensionError("gather_pixels: volume/mask count mismatch");
  if (volumes.empty()) throw ConfigError("gather_pixels: no volumes");
  const int c = volumes.front().channel_count();
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    const auto& f = volumes[i].features;
    if (f.channels != c) throw DimensionError("gather_pixels: channel count differs at volume " + std::to_string(i));
    if (masks[i].rows() != f.height || masks[i].cols() != f.width) {
      throw DimensionError("gather_pixels: mask shape differs at volume " + std::to_string(i));
    }
    total += f.pixels();
  }
  PixelSamples s;
  s.features.resize(c, total);
  s.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    const auto& f = volumes[i].features;
    s.features.middleCols(col, f.pixels()) = f.data;
    col += f.pixels();
    for (Eigen::Index p = 0; p < masks[i].size(); ++p) s.labels.push_back(masks[i].data()[p]);
  }
  return s;
}

Mlp<float> train_member(const PixelSamples& samples, const MLPConfig& config, std::uint64_t seed) {
  config.validate();
  if (samples.features.rows() != config.input_dim) {
    throw DimensionError("train_member: features have " + std::to_string(samples.features.rows()) +
                         " rows, config expects " + std::to_string(config.input_dim));
  }
  if (static_cast<Eigen::Index>(samples.labels.size()) != samples.size()) {
    throw DimensionError("train_member: label count differs from feature rows");
  }
  for (int y : samples.labels)
    if (y < 0 || y >= config.class_count) throw ConfigError("train_member: label outside [0, K)");
  if (samples.size() < 2) throw ConfigError("train_member: need at least two samples");

  std::optional<std::vector<double>> weights;
  if (config.class_weighting) {
    std::vector<double> counts(config.class_count, 0.0);
    for (int y : samples.labels) counts[y] += 1.0;
    weights.emplace(config.class_count, 0.0);
    const double n = static_cast<double>(samples.labels.size());
    for (int k = 0; k < config.class_count; ++k) (*weights)[k] = counts[k] > 0 ? n / (config.class_count * counts[k]) : 0.0;
  }

  Mlp<float> model(config, seed);
  Adam<float> adam(model.parameters(), AdamOptions{config.learning_rate});
  const auto n = static_cast<std::size_t>(samples.size());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches_per_epoch = (n + batch - 1) / batch;
  const auto total_batches = static_cast<std::size_t>(std::llround(config.epochs * static_cast<double>(batches_per_epoch)));

  std::vector<std::size_t> order(n);
  Matrix<float> xb;
  std::vector<int> yb;
  Mlp<float>::Cache cache;
  Matrix<float> d_logits;
  for (std::size_t done = 0, epoch = 0; done < total_batches; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, epoch, 0xe9));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches_per_epoch && done < total_batches; ++b, ++done) {
      const std::size_t first = b * batch;
      const std::size_t count = std::min(batch, n - first);
      if (count < 2) continue;  // batch statistics need two samples
      xb.resize(samples.features.rows(), static_cast<Eigen::Index>(count));
      yb.resize(count);
      for (std::size_t j = 0; j < count; ++j) {
        xb.col(static_cast<Eigen::Index>(j)) = samples.features.col(static_cast<Eigen::Index>(order[first + j]));
        yb[j] = samples.labels[order[first + j]];
      }
      model.parameters().zero_grad();
      const Matrix<float> logits = model.forward(xb, true, &cache);
      const double loss = cross_entropy<float>(logits, yb, weights ? &*weights : nullptr, &d_logits);
      if (!std::isfinite(loss)) {
        throw TrainingFault("non-finite classifier loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(b));
      }
      model.backward(cache, d_logits);
      adam.step(model.parameters());
    }
  }
  return model;
}

std::vector<std::uint64_t> ensemble_member_seeds(std::uint64_t master_seed, int count) {
  std::vector<std::uint64_t> seeds(count);
  for (int i = 0; i < count; ++i) seeds[i] = master_seed + static_cast<std::uint64_t>(i);
  return seeds;
}

EnsembleModel train_ensemble_with_seeds(const PixelSamples& samples, const MLPConfig& config,
                                        std::vector<std::uint64_t> seeds, int workers) {
  if (seeds.empty()) throw ConfigError("ensemble needs at least one member");
  EnsembleModel ensemble;
  ensemble.config = config;
  ensemble.member_seeds = seeds;
  ensemble.members.resize(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  auto work = [&](std::size_t i) {
    try {
      ensemble.members[i] = train_member(samples, config, seeds[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(seeds.size())));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < seeds.size(); i += n_workers) work(i);
      });
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const TrainingFault& e) {
      throw TrainingFault("ensemble member " + std::to_string(i) + ": " + e.what());
    }
  }
  return ensemble;
}

EnsembleModel train_ensemble(const PixelSamples& samples, const MLPConfig& config, int count,
                             std::uint64_t master_seed, int workers) {
  if (count < 1) throw ConfigError("ensemble size must be >= 1");
  return train_ensemble_with_seeds(samples, config, ensemble_member_seeds(master_seed, count), workers);
}

std::vector<int> majority_vote(std::span<const std::vector<int>> member_votes, int class_count) {
  if (member_votes.empty()) throw ConfigError("majority_vote: no members");
  const std::size_t n = member_votes.front().size();
  for (const auto& votes : member_votes) {
    if (votes.size() != n) throw DimensionError("majority_vote: members voted on different pixel counts");
    for (int v : votes)
      if (v < 0 || v >= class_count) throw ConfigError("majority_vote: vote outside [0, K)");
  }
  std::vector<int> out(n);
  std::vector<int> counts(class_count);
  for (std::size_t p = 0; p < n; ++p) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& votes : member_votes) ++counts[votes[p]];
    // max_element returns the first maximum, i.e. the smallest tied class.
    out[p] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  return out;
}

std::vector<std::vector<int>> member_votes(const EnsembleModel& ensemble, const Matrix<float>& pixels) {
  std::vector<std::vector<int>> votes;
  votes.reserve(ensemble.members.size());
  for (const auto& m : ensemble.members) votes.push_back(m.predict(pixels));
  return votes;
}

Mask predict_mask(const EnsembleModel& ensemble, const PixelFeatureVolume& volume) {
  if (volume.channel_count() != ensemble.config.input_dim) {
    throw DimensionError("predict_mask: ensemble expects C_total " + std::to_string(ensemble.config.input_dim) +
                         ", volume has " + std::to_string(volume.channel_count()));
  }
  const auto votes = member_votes(ensemble, pixel_matrix(volume));
  const auto labels = majority_vote(votes, ensemble.config.class_count);
  Mask mask(volume.features.height, volume.features.width);
  std::copy(labels.begin(), labels.end(), mask.data());
  return mask;
}

namespace {

nlohmann::json config_json(const MLPConfig& c) {
  return {{"input_dim", c.input_dim},         {"hidden_dims", c.hidden_dims}, {"class_count", c.class_count},
          {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},   {"epochs", c.epochs},
          {"seed", c.seed},                   {"class_weighting", c.class_weighting}};
}

MLPConfig config_from_json(const nlohmann::json& j) {
  MLPConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  c.class_count = j.at("class_count").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.class_weighting = j.at("class_weighting").get<bool>();
  return c;
}

}  // namespace

void save_ensemble(const EnsembleModel& ensemble, const std::filesystem::path& path) {
  TensorContainer c;
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    for (const auto& p : ensemble.members[i].parameters()) {
      NamedTensor t{"member." + std::to_string(i) + "." + p.name, {},
                    std::vector<float>(p.value.data(), p.value.data() + p.value.size())};
      for (int d : p.shape) t.dims.push_back(static_cast<std::uint32_t>(d));
      c.tensors.push_back(std::move(t));
    }
  }
  c.manifest = nlohmann::json{{"kind", "ensemble"},
                              {"N", ensemble.members.size()},
                              {"member_seeds", ensemble.member_seeds},
                              {"mlp_config", config_json(ensemble.config)}}
                   .dump();
  write_container(path, c);
}

EnsembleModel load_ensemble(const std::filesystem::path& path, std::optional<int> expected_input_dim) {
  TensorContainer c = read_container(path);
  if (!c.manifest) throw LoadError("ensemble manifest missing in " + path.string());
  EnsembleModel e;
  try {
    const auto manifest = nlohmann::json::parse(*c.manifest);
    if (manifest.value("kind", "") != "ensemble") throw LoadError("not an ensemble file: " + path.string());
    e.config = config_from_json(manifest.at("mlp_config"));
    e.member_seeds = manifest.at("member_seeds").get<std::vector<std::uint64_t>>();
    if (manifest.at("N").get<std::size_t>() != e.member_seeds.size()) throw LoadError("ensemble N mismatch");
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError("ensemble manifest in " + path.string() + ": " + ex.what());
  }
  if (expected_input_dim && *expected_input_dim != e.config.input_dim) {
    throw LoadError("ensemble input_dim " + std::to_string(e.config.input_dim) + " does not match feature C_total " +
                    std::to_string(*expected_input_dim));
  }
  std::size_t next = 0;
  for (std::size_t i = 0; i < e.member_seeds.size(); ++i) {
    Mlp<float> m(e.config, 0);
    for (auto& p : m.parameters()) {
      if (next >= c.tensors.size()) throw LoadError("ensemble payload truncated in " + path.string());
      const auto& t = c.tensors[next++];
      if (t.name != "member." + std::to_string(i) + "." + p.name || static_cast<Eigen::Index>(t.values.size()) != p.numel()) {
        throw LoadError("ensemble tensor mismatch at " + t.name);
      }
      p.value = Eigen::Map<const Vector<float>>(t.values.data(), p.numel());
    }
    e.members.push_back(std::move(m));
  }
  if (next != c.tensors.size()) throw LoadError("extra tensors in ensemble file " + path.string());
  return e;
}

}  // namespace dseg
