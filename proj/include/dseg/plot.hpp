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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dseg/png_io.hpp"

namespace dseg {

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed, well-separated colors; index 0 is black.
Rgb palette_color(int index);
/// Perceptual blue-green-yellow ramp over [0, 1].
Rgb color_ramp(double value);

Raster colorize_mask(const Mask& mask);
/// Alpha-blend the class colors over the image; background (0) is left untouched.
Raster overlay_mask(const Image& image, const Mask& mask, double alpha = 0.5);
/// Side-by-side panels of equal height separated by a 2-pixel gap.
Raster hstack(const std::vector<Raster>& panels);

/// Draw digits, '.', '-' and spaces with a 3x5 bitmap font.
void draw_text(Raster& raster, int x, int y, const std::string& text, Rgb color, int scale = 2);

/// rows x cols grid of values in [0, 1]; missing cells are drawn gray.
/// Axis labels are the given integers, values are printed inside the cells.
void write_heatmap(const std::filesystem::path& path, const std::vector<std::vector<std::optional<double>>>& cells,
                   const std::vector<int>& row_labels, const std::vector<int>& col_labels);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Lines over a shared x axis, y fixed to [0, 1]. Series colors follow the palette.
void write_line_plot(const std::filesystem::path& path, const std::vector<Series>& series);

/// Bars in [0, 1] with optional error whiskers.
void write_bar_chart(const std::filesystem::path& path, const std::vector<double>& values,
                     const std::vector<double>& errors = {});

}  // namespace dseg
