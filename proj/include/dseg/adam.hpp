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
#include <vector>

#include "dseg/layers.hpp"

namespace dseg {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over every parameter of a ParameterSet; moments are kept in the
/// parameter scalar type so checkpoints of them round-trip bitwise.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet<Scalar>& params, AdamOptions options) : options_(options) {
    for (const auto& p : params) {
      m_.push_back(Vector<Scalar>::Zero(p.numel()));
      v_.push_back(Vector<Scalar>::Zero(p.numel()));
    }
  }

  void step(ParameterSet<Scalar>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, t_);
    const double c2 = 1.0 - std::pow(options_.beta2, t_);
    const auto b1 = static_cast<Scalar>(options_.beta1), b2 = static_cast<Scalar>(options_.beta2);
    const auto step_size = static_cast<Scalar>(options_.learning_rate / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(options_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step_size * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  const AdamOptions& options() const { return options_; }
  std::vector<Vector<Scalar>>& first_moments() { return m_; }
  std::vector<Vector<Scalar>>& second_moments() { return v_; }
  const std::vector<Vector<Scalar>>& first_moments() const { return m_; }
  const std::vector<Vector<Scalar>>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::vector<Vector<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace dseg
