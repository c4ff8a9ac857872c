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

#include "dseg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dseg {

namespace {

constexpr std::array<Rgb, 12> kPalette{{{0, 0, 0},
                                        {230, 25, 75},
                                        {60, 180, 75},
                                        {255, 225, 25},
                                        {0, 130, 200},
                                        {245, 130, 48},
                                        {145, 30, 180},
                                        {70, 240, 240},
                                        {240, 50, 230},
                                        {210, 245, 60},
                                        {250, 190, 212},
                                        {0, 128, 128}}};

// Rows top to bottom, 3 bits each (MSB = left column).
struct Glyph {
  char c;
  std::array<std::uint8_t, 5> rows;
};
constexpr std::array<Glyph, 13> kGlyphs{{{'0', {7, 5, 5, 5, 7}},
                                         {'1', {2, 6, 2, 2, 7}},
                                         {'2', {7, 1, 7, 4, 7}},
                                         {'3', {7, 1, 7, 1, 7}},
                                         {'4', {5, 5, 7, 1, 1}},
                                         {'5', {7, 4, 7, 1, 7}},
                                         {'6', {7, 4, 7, 5, 7}},
                                         {'7', {7, 1, 1, 1, 1}},
                                         {'8', {7, 5, 7, 5, 7}},
                                         {'9', {7, 5, 7, 1, 7}},
                                         {'.', {0, 0, 0, 0, 2}},
                                         {'-', {0, 0, 7, 0, 0}},
                                         {' ', {0, 0, 0, 0, 0}}}};

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kAxis{40, 40, 40};
constexpr Rgb kGray{170, 170, 170};

void fill_rect(Raster& r, int x0, int y0, int w, int h, Rgb color) {
  for (int y = std::max(0, y0); y < std::min(r.height, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(r.width, x0 + w); ++x)
      for (int c = 0; c < 3; ++c) r.at(x, y, c) = color[c];
}

void draw_line(Raster& r, double x0, double y0, double x1, double y1, Rgb color) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double f = static_cast<double>(i) / steps;
    fill_rect(r, static_cast<int>(std::lround(x0 + f * (x1 - x0))) - 1, static_cast<int>(std::lround(y0 + f * (y1 - y0))) - 1,
              2, 2, color);
  }
}

Raster blank(int w, int h) {
  Raster r(w, h, 3);
  std::fill(r.pixels.begin(), r.pixels.end(), std::uint8_t{255});
  return r;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Axes box with y ticks at 0, 0.5, 1 for a plot area [left, left+w] x [top, top+h].
void draw_unit_axes(Raster& r, int left, int top, int w, int h) {
  draw_line(r, left, top, left, top + h, kAxis);
  draw_line(r, left, top + h, left + w, top + h, kAxis);
  for (double v : {0.0, 0.5, 1.0}) {
    const int y = top + static_cast<int>(std::lround((1.0 - v) * h));
    draw_line(r, left - 4, y, left, y, kAxis);
    draw_text(r, 2, y - 5, fixed2(v), kAxis);
  }
}

}  // namespace

Rgb palette_color(int index) { return kPalette[static_cast<std::size_t>(index) % kPalette.size()]; }

Rgb color_ramp(double value) {
  // Piecewise-linear through dark blue, teal, green and yellow.
  constexpr std::array<std::array<double, 3>, 4> stops{{{68, 1, 84}, {49, 104, 142}, {53, 183, 121}, {253, 231, 37}}};
  const double v = std::clamp(value, 0.0, 1.0) * 3.0;
  const int i = std::min(2, static_cast<int>(v));
  const double f = v - i;
  Rgb out{};
  for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
  return out;
}

Raster colorize_mask(const Mask& mask) {
  Raster r(static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 3);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      const Rgb c = palette_color(mask(y, x));
      for (int k = 0; k < 3; ++k) r.at(x, y, k) = c[k];
    }
  return r;
}

Raster overlay_mask(const Image& image, const Mask& mask, double alpha) {
  if (mask.rows() != image.height || mask.cols() != image.width) {
    throw DimensionError("overlay_mask: mask does not match image " + shape_string(image));
  }
  Raster r = image_to_raster(image);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      if (mask(y, x) == 0) continue;
      const Rgb c = palette_color(mask(y, x));
      for (int k = 0; k < 3; ++k)
        r.at(x, y, k) = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * r.at(x, y, k) + alpha * c[k]));
    }
  return r;
}

Raster hstack(const std::vector<Raster>& panels) {
  if (panels.empty()) throw ConfigError("hstack: no panels");
  const int h = panels.front().height;
  int w = 0;
  for (const auto& p : panels) {
    if (p.height != h || p.channels != 3) throw DimensionError("hstack: panels need equal height and RGB");
    w += p.width + 2;
  }
  Raster out = blank(w - 2, h);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < p.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(x0 + x, y, c) = p.at(x, y, c);
    x0 += p.width + 2;
  }
  return out;
}

void draw_text(Raster& raster, int x, int y, const std::string& text, Rgb color, int scale) {
  for (char ch : text) {
    const auto g = std::find_if(kGlyphs.begin(), kGlyphs.end(), [ch](const Glyph& gl) { return gl.c == ch; });
    if (g != kGlyphs.end()) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (g->rows[row] & (4 >> col)) fill_rect(raster, x + col * scale, y + row * scale, scale, scale, color);
    }
    x += 4 * scale;
  }
}

void write_heatmap(const std::filesystem::path& path, const std::vector<std::vector<std::optional<double>>>& cells,
                   const std::vector<int>& row_labels, const std::vector<int>& col_labels) {
  const int rows = static_cast<int>(cells.size());
  const int cols = rows ? static_cast<int>(cells.front().size()) : 0;
  if (rows == 0 || cols == 0) throw ConfigError("heatmap needs at least one cell");
  if (static_cast<int>(row_labels.size()) != rows || static_cast<int>(col_labels.size()) != cols) {
    throw DimensionError("heatmap labels do not match the grid");
  }
  constexpr int kCell = 44, kLeft = 40, kTop = 8, kBottom = 20;
  Raster r = blank(kLeft + cols * kCell + 8, kTop + rows * kCell + kBottom);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(cells[i].size()) != cols) throw DimensionError("heatmap rows differ in length");
    draw_text(r, 4, kTop + i * kCell + kCell / 2 - 5, std::to_string(row_labels[i]), kAxis);
    for (int j = 0; j < cols; ++j) {
      const auto& v = cells[i][j];
      const Rgb fill = v ? color_ramp(*v) : kGray;
      fill_rect(r, kLeft + j * kCell, kTop + i * kCell, kCell - 1, kCell - 1, fill);
      if (v) {
        const Rgb ink = *v > 0.6 ? kAxis : kWhite;
        draw_text(r, kLeft + j * kCell + 4, kTop + i * kCell + kCell / 2 - 5, fixed2(*v), ink);
      }
    }
  }
  for (int j = 0; j < cols; ++j) draw_text(r, kLeft + j * kCell + 4, kTop + rows * kCell + 4, std::to_string(col_labels[j]), kAxis);
  write_png(path, r);
}

void write_line_plot(const std::filesystem::path& path, const std::vector<Series>& series) {
  if (series.empty()) throw ConfigError("line plot needs at least one series");
  double x_min = 0.0, x_max = 0.0;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("series " + s.name + " has mismatched x and y");
    for (double x : s.x) {
      x_min = first ? x : std::min(x_min, x);
      x_max = first ? x : std::max(x_max, x);
      first = false;
    }
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  constexpr int kLeft = 44, kTop = 10, kW = 320, kH = 200;
  Raster r = blank(kLeft + kW + 12, kTop + kH + 24);
  draw_unit_axes(r, kLeft, kTop, kW, kH);
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * kW; };
  auto py = [&](double y) { return kTop + (1.0 - std::clamp(y, 0.0, 1.0)) * kH; };
  draw_text(r, kLeft, kTop + kH + 6, fixed2(x_min), kAxis);
  draw_text(r, kLeft + kW - 36, kTop + kH + 6, fixed2(x_max), kAxis);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Rgb color = palette_color(static_cast<int>(k) + 1);
    const auto& s = series[k];
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      fill_rect(r, static_cast<int>(px(s.x[i])) - 2, static_cast<int>(py(s.y[i])) - 2, 5, 5, color);
      if (i > 0) draw_line(r, px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), color);
    }
  }
  write_png(path, r);
}

void write_bar_chart(const std::filesystem::path& path, const std::vector<double>& values,
                     const std::vector<double>& errors) {
  if (values.empty()) throw ConfigError("bar chart needs at least one value");
  if (!errors.empty() && errors.size() != values.size()) throw DimensionError("bar chart errors do not match values");
  constexpr int kLeft = 44, kTop = 10, kH = 200, kBar = 36, kGap = 14;
  const int w = static_cast<int>(values.size()) * (kBar + kGap) + kGap;
  Raster r = blank(kLeft + w + 8, kTop + kH + 24);
  draw_unit_axes(r, kLeft, kTop, w, kH);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int x = kLeft + kGap + static_cast<int>(i) * (kBar + kGap);
    const double v = std::clamp(values[i], 0.0, 1.0);
    const int top = kTop + static_cast<int>(std::lround((1.0 - v) * kH));
    fill_rect(r, x, top, kBar, kTop + kH - top, palette_color(static_cast<int>(i) + 1));
    if (!errors.empty()) {
      const double lo = std::clamp(values[i] - errors[i], 0.0, 1.0), hi = std::clamp(values[i] + errors[i], 0.0, 1.0);
      const double cx = x + kBar / 2.0;
      draw_line(r, cx, kTop + (1.0 - lo) * kH, cx, kTop + (1.0 - hi) * kH, kAxis);
    }
    draw_text(r, x, kTop + kH + 6, std::to_string(i), kAxis);
  }
  write_png(path, r);
}

}  // namespace dseg
