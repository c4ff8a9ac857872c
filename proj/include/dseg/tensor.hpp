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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>

#include "dseg/errors.hpp"

namespace dseg {

/// Channel-major storage: one row per channel, one column per pixel (row-major
/// over y then x). Memory order is therefore exactly [C, H, W].
template <typename Scalar>
using PlaneMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Dense [C, H, W] tensor.
template <typename Scalar>
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  PlaneMatrix<Scalar> data;

  Tensor3() = default;
  Tensor3(int c, int h, int w) : channels(c), height(h), width(w), data(PlaneMatrix<Scalar>::Zero(c, h * w)) {}

  static Tensor3 Zero(int c, int h, int w) { return Tensor3(c, h, w); }
  static Tensor3 Constant(int c, int h, int w, Scalar value) {
    Tensor3 t(c, h, w);
    t.data.setConstant(value);
    return t;
  }

  int pixels() const { return height * width; }
  Eigen::Index size() const { return data.size(); }

  Scalar& operator()(int c, int y, int x) { return data(c, y * width + x); }
  Scalar operator()(int c, int y, int x) const { return data(c, y * width + x); }

  bool same_shape(const Tensor3& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }

  template <typename Other>
  Tensor3<Other> cast() const {
    Tensor3<Other> out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }

  bool all_finite() const { return data.allFinite(); }

  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.same_shape(b) && a.data == b.data;
  }
};

using Image = Tensor3<float>;

/// Integer class mask [H, W].
using Mask = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(int c, int h, int w) {
  return "[" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
}

template <typename Scalar>
std::string shape_string(const Tensor3<Scalar>& t) {
  return shape_string(t.channels, t.height, t.width);
}

template <typename Scalar>
void require_same_shape(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
  }
}

/// Concatenate along the channel axis.
template <typename Scalar>
Tensor3<Scalar> concat_channels(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("concat_channels: spatial mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Tensor3<Scalar> out(a.channels + b.channels, a.height, a.width);
  out.data.topRows(a.channels) = a.data;
  out.data.bottomRows(b.channels) = b.data;
  return out;
}

template <typename Scalar>
Tensor3<Scalar> slice_channels(const Tensor3<Scalar>& t, int first, int count) {
  Tensor3<Scalar> out(count, t.height, t.width);
  out.data = t.data.middleRows(first, count);
  return out;
}

/// Squared L2 distance between two same-shape tensors.
template <typename Scalar>
double squared_distance(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b) {
  require_same_shape(a, b, "squared_distance");
  return (a.data.template cast<double>() - b.data.template cast<double>()).squaredNorm();
}

}  // namespace dseg
