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

#ifndef PLCFE_BINARY_IO_HPP_
#define PLCFE_BINARY_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace plcfe {

// Writes to a temporary sibling, then renames over `path`.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Little-endian byte encoder. Output is independent of host byte order.
class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f64(double v);
  void f64s(std::span<const double> values);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  void save(const std::filesystem::path& path) const { write_file_bytes(path, bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Little-endian decoder. Every read failure throws FormatError carrying the
// byte offset at which the problem was found.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
  static ByteReader load(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  double f64();
  std::vector<double> f64s(std::size_t count);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  // Throws FormatError if any bytes are left over.
  void expect_end() const;

 private:
  void need(std::size_t count, const char* what) const;

  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t value, const char* what);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace plcfe

#endif  // PLCFE_BINARY_IO_HPP_
