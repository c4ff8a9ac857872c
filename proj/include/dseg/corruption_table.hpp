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

#include <array>

namespace dseg::corruption_table {

// Severity ladders, index 0 = severity 1. Pixel quantities are in the
// [-1, 1] image range; bump the version whenever a value changes.
inline constexpr int kVersion = 1;

inline constexpr std::array<double, 5> kNoiseStd = {0.16, 0.24, 0.36, 0.52, 0.76};
inline constexpr std::array<double, 5> kBlurSigma = {0.6, 1.0, 1.5, 2.0, 3.0};
inline constexpr std::array<double, 5> kBrightnessShift = {0.2, 0.4, 0.6, 0.8, 1.0};
inline constexpr std::array<double, 5> kContrastFactor = {0.6, 0.45, 0.3, 0.2, 0.1};
inline constexpr std::array<double, 5> kPixelateBlock = {2, 3, 4, 5, 6};

}  // namespace dseg::corruption_table
