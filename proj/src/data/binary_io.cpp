// Copyright 2026 The plcfe Authors.
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

#include "plcfe/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

#include "plcfe/errors.hpp"

namespace plcfe {

void ByteWriter::magic(std::string_view tag) {
  for (char c : tag) bytes_.push_back(static_cast<std::uint8_t>(c));
}

void ByteWriter::u16(std::uint16_t v) {
  bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
  bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    bytes_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
  }
}

void ByteWriter::f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int shift = 0; shift < 64; shift += 8) {
    bytes_.push_back(static_cast<std::uint8_t>((bits >> shift) & 0xff));
  }
}

void ByteWriter::f64s(std::span<const double> values) {
  bytes_.reserve(bytes_.size() + 8 * values.size());
  for (double v : values) f64(v);
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

ByteReader ByteReader::load(const std::filesystem::path& path) {
  return ByteReader(read_file_bytes(path));
}

void ByteReader::need(std::size_t count, const char* what) const {
  if (bytes_.size() - pos_ < count) {
    throw FormatError(std::string("truncated file while reading ") + what, pos_);
  }
}

void ByteReader::expect_magic(std::string_view tag) {
  need(tag.size(), "magic");
  for (std::size_t i = 0; i < tag.size(); ++i) {
    if (bytes_[pos_ + i] != static_cast<std::uint8_t>(tag[i])) {
      throw FormatError("bad magic, expected \"" + std::string(tag) + "\"", pos_ + i);
    }
  }
  pos_ += tag.size();
}

std::uint8_t ByteReader::u8() {
  need(1, "u8");
  return bytes_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2, "u16");
  const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
  pos_ += 4;
  return v;
}

double ByteReader::f64() {
  need(8, "f64");
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
  pos_ += 8;
  return std::bit_cast<double>(bits);
}

std::vector<double> ByteReader::f64s(std::size_t count) {
  if (count > remaining() / 8) throw FormatError("truncated file while reading reals", pos_);
  std::vector<double> out(count);
  for (double& v : out) v = f64();
  return out;
}

void ByteReader::expect_end() const {
  if (pos_ != bytes_.size()) throw FormatError("unexpected trailing bytes", pos_);
}

std::uint32_t checked_u32(std::size_t value, const char* what) {
  if (value > std::numeric_limits<std::uint32_t>::max()) {
    throw ParameterError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(value);
}

}  // namespace plcfe
