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

#include "plcfe/csv.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <span>

#include "plcfe/binary_io.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

std::string format_real(double value, int significant_digits) {
  char buf[64];
  const int len = std::snprintf(buf, sizeof(buf), "%.*g", significant_digits, value);
  return std::string(buf, static_cast<std::size_t>(len));
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) {
  for (const auto& name : header) field(std::string_view(name));
  end_row();
}

CsvWriter& CsvWriter::field(std::string_view text) {
  if (row_open_) text_ += ',';
  text_ += text;
  row_open_ = true;
  return *this;
}

CsvWriter& CsvWriter::field(double value, int digits) {
  return field(std::string_view(format_real(value, digits)));
}

CsvWriter& CsvWriter::field(long long value) {
  return field(std::string_view(std::to_string(value)));
}

CsvWriter& CsvWriter::field(unsigned long long value) {
  return field(std::string_view(std::to_string(value)));
}

void CsvWriter::end_row() {
  text_ += '\n';
  row_open_ = false;
}

void CsvWriter::save(const std::filesystem::path& path) const {
  const auto* begin = reinterpret_cast<const std::uint8_t*>(text_.data());
  write_file_bytes(path, std::span<const std::uint8_t>(begin, text_.size()));
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw FormatError("missing CSV column '" + std::string(name) + "'", 0);
}

CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    const std::size_t line_start = pos;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.emplace_back(line.substr(start, comma == std::string_view::npos
                                                 ? std::string_view::npos
                                                 : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != table.header.size()) {
        throw FormatError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(table.header.size()),
                          line_start);
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw FormatError("empty CSV file", 0);
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

double parse_real(const std::string& text) {
  // strtod understands the full %.17g output including exponents and inf.
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw FormatError("not a number: '" + text + "'", 0);
  return v;
}

long long parse_int(const std::string& text) {
  long long v = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw FormatError("not an integer: '" + text + "'", 0);
  return v;
}

}  // namespace plcfe
