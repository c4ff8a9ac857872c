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

#include "dseg/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dseg/errors.hpp"

namespace dseg {

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a64(std::string_view text) { return fnv1a64(text.data(), text.size()); }

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace le {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_f32(std::string& out, float v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_f64(std::string& out, double v) { out.append(reinterpret_cast<const char*>(&v), 8); }

void Reader::need(std::size_t n) {
  if (remaining() < n) throw LoadError("truncated payload in " + source_);
}
std::uint8_t Reader::u8() {
  need(1);
  return static_cast<std::uint8_t>(bytes_[pos_++]);
}
std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return v;
}
float Reader::f32() {
  need(4);
  float v;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return v;
}
double Reader::f64() {
  need(8);
  double v;
  std::memcpy(&v, bytes_.data() + pos_, 8);
  pos_ += 8;
  return v;
}
std::string Reader::text(std::size_t n) {
  need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}
void Reader::floats(float* dst, std::size_t n) {
  need(n * 4);
  std::memcpy(dst, bytes_.data() + pos_, n * 4);
  pos_ += n * 4;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace le

std::size_t tensor_record_bytes(const NamedTensor& tensor) {
  return 4 + tensor.name.size() + 1 + 4 * tensor.dims.size() + 4 * tensor.values.size();
}

void write_container(const std::filesystem::path& path, const TensorContainer& container) {
  std::string out = "DSEG";
  le::put_u32(out, TensorContainer::kVersion);
  le::put_u32(out, container.schedule_steps);
  le::put_f64(out, container.beta_start);
  le::put_f64(out, container.beta_end);
  le::put_u32(out, static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& t : container.tensors) {
    std::size_t numel = 1;
    for (auto d : t.dims) numel *= d;
    if (numel != t.values.size()) throw DimensionError("tensor " + t.name + ": dims do not match payload");
    if (t.dims.size() > 255) throw DimensionError("tensor " + t.name + ": rank too large");
    le::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    le::put_u8(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) le::put_u32(out, d);
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * 4);
  }
  if (container.manifest) {
    le::put_u32(out, static_cast<std::uint32_t>(container.manifest->size()));
    out += *container.manifest;
  }
  le::write_file_atomic(path, out);
}

TensorContainer read_container(const std::filesystem::path& path) {
  le::Reader in(le::read_file(path), path.string());
  if (in.remaining() < 4 || in.text(4) != "DSEG") throw LoadError("bad magic in " + path.string());
  const auto version = in.u32();
  if (version != TensorContainer::kVersion) {
    throw LoadError("unsupported container version " + std::to_string(version) + " in " + path.string());
  }
  TensorContainer c;
  c.schedule_steps = in.u32();
  c.beta_start = in.f64();
  c.beta_end = in.f64();
  const auto count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.text(in.u32());
    const auto rank = in.u8();
    std::size_t numel = 1;
    for (int r = 0; r < rank; ++r) {
      t.dims.push_back(in.u32());
      numel *= t.dims.back();
    }
    if (numel * 4 > in.remaining()) throw LoadError("truncated tensor payload '" + t.name + "' in " + path.string());
    t.values.resize(numel);
    in.floats(t.values.data(), numel);
    c.tensors.push_back(std::move(t));
  }
  if (in.remaining() > 0) {
    const auto n = in.u32();
    c.manifest = in.text(n);
    if (in.remaining() != 0) throw LoadError("trailing bytes in " + path.string());
  }
  return c;
}

}  // namespace dseg
