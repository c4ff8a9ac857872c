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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dseg/random.hpp"
#include "dseg/tensor.hpp"

namespace dseg {

/// A named, shaped parameter with its gradient accumulator.
template <typename Scalar>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  Vector<Scalar> value;
  Vector<Scalar> grad;

  Eigen::Index numel() const { return value.size(); }
};

/// Flat registry of parameters addressed by index; layers hold indices.
template <typename Scalar>
class ParameterSet {
 public:
  int add(std::string name, std::vector<int> shape) {
    const Eigen::Index n = std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
    params_.push_back({std::move(name), std::move(shape), Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n)});
    return static_cast<int>(params_.size()) - 1;
  }

  Parameter<Scalar>& operator[](int i) { return params_[i]; }
  const Parameter<Scalar>& operator[](int i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Eigen::Index total_numel() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  /// Matrix view of a parameter stored row-major as rows x cols.
  Eigen::Map<const PlaneMatrix<Scalar>> matrix(int i, int rows, int cols) const {
    return {params_[i].value.data(), rows, cols};
  }
  Eigen::Map<PlaneMatrix<Scalar>> grad_matrix(int i, int rows, int cols) {
    return {params_[i].grad.data(), rows, cols};
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& p : params_) {
      const int i = out.add(p.name, p.shape);
      out[i].value = p.value.template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<Parameter<Scalar>> params_;
};

/// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar>
void init_uniform(Parameter<Scalar>& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<Scalar>(dist(rng));
}

// ---------------------------------------------------------------------------
// Convolution (square kernel, zero padding k/2, stride 1 or 2) via im2col.

struct Conv2dSpec {
  int in = 0, out = 0, kernel = 3, stride = 1;
  int weight = -1, bias = -1;
};

template <typename Scalar>
struct Conv2dCache {
  PlaneMatrix<Scalar> columns;
  int in_h = 0, in_w = 0;
};

template <typename Scalar>
Conv2dSpec make_conv(ParameterSet<Scalar>& ps, const std::string& name, int in, int out, int kernel, int stride,
                     Rng& rng) {
  Conv2dSpec s{in, out, kernel, stride};
  s.weight = ps.add(name + ".weight", {out, in, kernel, kernel});
  s.bias = ps.add(name + ".bias", {out});
  init_uniform(ps[s.weight], in * kernel * kernel, rng);
  init_uniform(ps[s.bias], in * kernel * kernel, rng);
  return s;
}

template <typename Scalar>
PlaneMatrix<Scalar> im2col(const Tensor3<Scalar>& x, int kernel, int stride, int out_h, int out_w) {
  const int pad = kernel / 2;
  PlaneMatrix<Scalar> cols(x.channels * kernel * kernel, out_h * out_w);
  for (int c = 0; c < x.channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        Scalar* row = cols.row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          Scalar* dst = row + oy * out_w;
          if (iy < 0 || iy >= x.height) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = x.data.row(c).data() + iy * x.width;
          if (stride == 1) {
            // Valid outputs form one contiguous run; only the borders see padding.
            const int shift = kx - pad;
            const int lo = std::max(0, -shift), hi = std::min(out_w, x.width - shift);
            std::fill(dst, dst + lo, Scalar(0));
            std::copy(src + lo + shift, src + hi + shift, dst + lo);
            std::fill(dst + hi, dst + out_w, Scalar(0));
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix < 0 || ix >= x.width) ? Scalar(0) : src[ix];
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
Tensor3<Scalar> col2im(const PlaneMatrix<Scalar>& cols, int channels, int in_h, int in_w, int kernel, int stride,
                       int out_h, int out_w) {
  const int pad = kernel / 2;
  Tensor3<Scalar> x(channels, in_h, in_w);
  for (int c = 0; c < channels; ++c) {
    Scalar* dst_plane = x.data.row(c).data();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Scalar* row = cols.row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= in_h) continue;
          const Scalar* src = row + oy * out_w;
          Scalar* dst = dst_plane + iy * in_w;
          if (stride == 1) {
            const int shift = kx - pad;
            const int lo = std::max(0, -shift), hi = std::min(out_w, in_w - shift);
            for (int ox = lo; ox < hi; ++ox) dst[ox + shift] += src[ox];
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return x;
}

template <typename Scalar>
Tensor3<Scalar> conv2d_forward(const ParameterSet<Scalar>& ps, const Conv2dSpec& s, const Tensor3<Scalar>& x,
                               Conv2dCache<Scalar>* cache) {
  if (x.channels != s.in) {
    throw DimensionError("conv2d: expected " + std::to_string(s.in) + " input channels, got " +
                         std::to_string(x.channels));
  }
  const int out_h = (x.height + s.stride - 1) / s.stride;
  const int out_w = (x.width + s.stride - 1) / s.stride;
  const auto w = ps.matrix(s.weight, s.out, s.in * s.kernel * s.kernel);
  const auto b = ps[s.bias].value;
  Tensor3<Scalar> y(s.out, out_h, out_w);
  if (s.kernel == 1 && s.stride == 1) {
    y.data.noalias() = w * x.data;
    if (cache) {
      cache->columns = x.data;
    }
  } else {
    PlaneMatrix<Scalar> cols = im2col(x, s.kernel, s.stride, out_h, out_w);
    y.data.noalias() = w * cols;
    if (cache) cache->columns = std::move(cols);
  }
  y.data.colwise() += b;
  if (cache) {
    cache->in_h = x.height;
    cache->in_w = x.width;
  }
  return y;
}

/// Accumulates weight/bias gradients and returns d(input).
template <typename Scalar>
Tensor3<Scalar> conv2d_backward(ParameterSet<Scalar>& ps, const Conv2dSpec& s, const Conv2dCache<Scalar>& cache,
                                const Tensor3<Scalar>& dy) {
  const int k2 = s.in * s.kernel * s.kernel;
  ps.grad_matrix(s.weight, s.out, k2).noalias() += dy.data * cache.columns.transpose();
  ps[s.bias].grad += dy.data.rowwise().sum();
  const auto w = ps.matrix(s.weight, s.out, k2);
  PlaneMatrix<Scalar> dcols = w.transpose() * dy.data;
  if (s.kernel == 1 && s.stride == 1) {
    Tensor3<Scalar> dx(s.in, cache.in_h, cache.in_w);
    dx.data = std::move(dcols);
    return dx;
  }
  return col2im(dcols, s.in, cache.in_h, cache.in_w, s.kernel, s.stride, dy.height, dy.width);
}

// ---------------------------------------------------------------------------
// Group normalization (per-sample, batch independent).

struct GroupNormSpec {
  int channels = 0, groups = 1;
  int gamma = -1, beta = -1;
  double eps = 1e-5;
};

template <typename Scalar>
struct GroupNormCache {
  PlaneMatrix<Scalar> normalized;
  std::vector<Scalar> inv_std;
};

/// Largest group count <= 8 dividing the channel count.
inline int group_count_for(int channels) {
  for (int g = std::min(8, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

template <typename Scalar>
GroupNormSpec make_group_norm(ParameterSet<Scalar>& ps, const std::string& name, int channels) {
  GroupNormSpec s{channels, group_count_for(channels)};
  s.gamma = ps.add(name + ".gamma", {channels});
  s.beta = ps.add(name + ".beta", {channels});
  ps[s.gamma].value.setOnes();
  return s;
}

template <typename Scalar>
Tensor3<Scalar> group_norm_forward(const ParameterSet<Scalar>& ps, const GroupNormSpec& s, const Tensor3<Scalar>& x,
                                   GroupNormCache<Scalar>* cache) {
  const int per_group = s.channels / s.groups;
  const auto& gamma = ps[s.gamma].value;
  const auto& beta = ps[s.beta].value;
  Tensor3<Scalar> y(x.channels, x.height, x.width);
  PlaneMatrix<Scalar> normalized(x.channels, x.pixels());
  std::vector<Scalar> inv_std(s.groups);
  for (int g = 0; g < s.groups; ++g) {
    auto block = x.data.middleRows(g * per_group, per_group);
    const Scalar mean = block.mean();
    const Scalar var = (block.array() - mean).square().mean();
    const Scalar rstd = Scalar(1) / std::sqrt(var + static_cast<Scalar>(s.eps));
    inv_std[g] = rstd;
    normalized.middleRows(g * per_group, per_group) = (block.array() - mean) * rstd;
  }
  y.data = (normalized.array().colwise() * gamma.array()).colwise() + beta.array();
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename Scalar>
Tensor3<Scalar> group_norm_backward(ParameterSet<Scalar>& ps, const GroupNormSpec& s,
                                    const GroupNormCache<Scalar>& cache, const Tensor3<Scalar>& dy) {
  const int per_group = s.channels / s.groups;
  const auto& xhat = cache.normalized;
  ps[s.gamma].grad += (dy.data.array() * xhat.array()).rowwise().sum().matrix();
  ps[s.beta].grad += dy.data.rowwise().sum();
  PlaneMatrix<Scalar> dxhat = dy.data.array().colwise() * ps[s.gamma].value.array();
  Tensor3<Scalar> dx(dy.channels, dy.height, dy.width);
  for (int g = 0; g < s.groups; ++g) {
    auto dblock = dxhat.middleRows(g * per_group, per_group);
    auto xblock = xhat.middleRows(g * per_group, per_group);
    const Scalar mean_d = dblock.mean();
    const Scalar mean_dx = (dblock.array() * xblock.array()).mean();
    dx.data.middleRows(g * per_group, per_group) =
        cache.inv_std[g] * (dblock.array() - mean_d - xblock.array() * mean_dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// SiLU.

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

template <typename Scalar>
Tensor3<Scalar> silu(const Tensor3<Scalar>& x) {
  Tensor3<Scalar> y(x.channels, x.height, x.width);
  y.data = (x.data.array() * sigmoid(x.data.array())).matrix();
  return y;
}

/// d/dx [x * sigmoid(x)] applied to dy; x is the SiLU input.
template <typename Scalar>
Tensor3<Scalar> silu_backward(const Tensor3<Scalar>& x, const Tensor3<Scalar>& dy) {
  Tensor3<Scalar> dx(x.channels, x.height, x.width);
  const auto s = sigmoid(x.data.array()).eval();
  dx.data = (dy.data.array() * (s + x.data.array() * s * (Scalar(1) - s))).matrix();
  return dx;
}

template <typename Scalar>
Vector<Scalar> silu(const Vector<Scalar>& x) {
  return (x.array() * sigmoid(x.array())).matrix();
}

template <typename Scalar>
Vector<Scalar> silu_backward(const Vector<Scalar>& x, const Vector<Scalar>& dy) {
  const auto s = sigmoid(x.array()).eval();
  return (dy.array() * (s + x.array() * s * (Scalar(1) - s))).matrix();
}

// ---------------------------------------------------------------------------
// Dense layer on a single vector.

struct LinearSpec {
  int in = 0, out = 0;
  int weight = -1, bias = -1;
};

template <typename Scalar>
LinearSpec make_linear(ParameterSet<Scalar>& ps, const std::string& name, int in, int out, Rng& rng) {
  LinearSpec s{in, out};
  s.weight = ps.add(name + ".weight", {out, in});
  s.bias = ps.add(name + ".bias", {out});
  init_uniform(ps[s.weight], in, rng);
  init_uniform(ps[s.bias], in, rng);
  return s;
}

template <typename Scalar>
Vector<Scalar> linear_forward(const ParameterSet<Scalar>& ps, const LinearSpec& s, const Vector<Scalar>& x) {
  return ps.matrix(s.weight, s.out, s.in) * x + ps[s.bias].value;
}

template <typename Scalar>
Vector<Scalar> linear_backward(ParameterSet<Scalar>& ps, const LinearSpec& s, const Vector<Scalar>& x,
                               const Vector<Scalar>& dy) {
  ps.grad_matrix(s.weight, s.out, s.in).noalias() += dy * x.transpose();
  ps[s.bias].grad += dy;
  return ps.matrix(s.weight, s.out, s.in).transpose() * dy;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x upsampling.

template <typename Scalar>
Tensor3<Scalar> upsample_nearest2(const Tensor3<Scalar>& x) {
  Tensor3<Scalar> y(x.channels, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c)
    for (int yy = 0; yy < y.height; ++yy)
      for (int xx = 0; xx < y.width; ++xx) y(c, yy, xx) = x(c, yy / 2, xx / 2);
  return y;
}

template <typename Scalar>
Tensor3<Scalar> upsample_nearest2_backward(const Tensor3<Scalar>& dy) {
  Tensor3<Scalar> dx(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c)
    for (int yy = 0; yy < dy.height; ++yy)
      for (int xx = 0; xx < dy.width; ++xx) dx(c, yy / 2, xx / 2) += dy(c, yy, xx);
  return dx;
}

}  // namespace dseg
