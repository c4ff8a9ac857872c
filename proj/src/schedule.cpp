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

#include "dseg/schedule.hpp"

#include <algorithm>
#include <string>

namespace dseg {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end)
    : steps_(steps), beta_start_(beta_start), beta_end_(beta_end) {
  if (steps < 1) throw ConfigError("schedule needs T >= 1, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
  }
  betas_.resize(steps);
  alphas_.resize(steps);
  alpha_bars_.resize(steps);
  long double product = 1.0L;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas_[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * frac;
    alphas_[i] = 1.0 - betas_[i];
    product *= static_cast<long double>(alphas_[i]);
    alpha_bars_[i] = static_cast<double>(product);
  }
}

int NoiseSchedule::timestep_from_fraction(double fraction) const {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("timestep fraction must lie in (0, 1)");
  const auto t = static_cast<int>(std::lround(fraction * steps_));
  return std::clamp(t, 1, steps_);
}

void NoiseSchedule::require_timestep(int t) const {
  if (t < 1 || t > steps_) {
    throw ConfigError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps_) + "]");
  }
}

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
  return NoiseSchedule(steps, beta_start, beta_end);
}

}  // namespace dseg
