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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dseg {

/// FNV-1a 64-bit.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

std::string hex64(std::uint64_t value);

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

/// "DSEG" tensor container:
///   magic "DSEG" | u32 version | u32 T | f64 beta_start | f64 beta_end | u32 tensor count
///   per tensor: u32 name length | name | u8 rank | u32 dims[rank] | f32 payload
///   optional trailer: u32 length | JSON manifest text
/// All integers and floats little-endian.
struct TensorContainer {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8 + 8 + 4;

  std::uint32_t schedule_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<NamedTensor> tensors;
  std::optional<std::string> manifest;
};

std::size_t tensor_record_bytes(const NamedTensor& tensor);

void write_container(const std::filesystem::path& path, const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path);

/// Little-endian primitive I/O shared by the binary formats.
namespace le {
void put_u8(std::string& out, std::uint8_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

class Reader {
 public:
  Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}
  std::uint8_t u8();
  std::uint32_t u32();
  float f32();
  double f64();
  std::string text(std::size_t n);
  void floats(float* dst, std::size_t n);
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n);
  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Write through a temporary file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
}  // namespace le

}  // namespace dseg
