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

#include <cmath>
#include <cstdint>

#include "dseg/tensor.hpp"

namespace dseg {

/// Linear variance schedule and its derived products. Timesteps are 1-based.
/// Only (T, beta_start, beta_end) is persisted; the vectors are rebuilt.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(int steps, double beta_start, double beta_end);

  int steps() const { return steps_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  double beta(int t) const { return betas_[index(t)]; }
  double alpha(int t) const { return alphas_[index(t)]; }
  /// Cumulative product of alpha_1..alpha_t; alpha_bar(0) is 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_[index(t)]; }

  const Eigen::VectorXd& betas() const { return betas_; }
  const Eigen::VectorXd& alphas() const { return alphas_; }
  const Eigen::VectorXd& alpha_bars() const { return alpha_bars_; }

  /// Map a fraction of T onto a timestep in [1, T].
  int timestep_from_fraction(double fraction) const;

  void require_timestep(int t) const;

  friend bool operator==(const NoiseSchedule& a, const NoiseSchedule& b) {
    return a.steps_ == b.steps_ && a.beta_start_ == b.beta_start_ && a.beta_end_ == b.beta_end_;
  }

 private:
  Eigen::Index index(int t) const {
    require_timestep(t);
    return t - 1;
  }

  int steps_ = 0;
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
  Eigen::VectorXd betas_;
  Eigen::VectorXd alphas_;
  Eigen::VectorXd alpha_bars_;
};

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end);

template <typename Scalar>
struct NoisingResult {
  Tensor3<Scalar> x_t;
  int t = 0;
  Tensor3<Scalar> eps;
};

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
template <typename Scalar>
NoisingResult<Scalar> add_noise(const Tensor3<Scalar>& x0, int t, const Tensor3<Scalar>& eps,
                                const NoiseSchedule& schedule) {
  schedule.require_timestep(t);
  require_same_shape(x0, eps, "add_noise");
  const double ab = schedule.alpha_bar(t);
  const auto signal = static_cast<Scalar>(std::sqrt(ab));
  const auto noise = static_cast<Scalar>(std::sqrt(1.0 - ab));
  NoisingResult<Scalar> out{Tensor3<Scalar>(x0.channels, x0.height, x0.width), t, eps};
  out.x_t.data = signal * x0.data + noise * eps.data;
  return out;
}

}  // namespace dseg
