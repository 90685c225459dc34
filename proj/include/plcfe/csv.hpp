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

#ifndef PLCFE_CSV_HPP_
#define PLCFE_CSV_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace plcfe {

// Significant digits for report CSVs and for exact-round-trip CSVs.
inline constexpr int kReportDigits = 6;
inline constexpr int kExactDigits = 17;

// printf("%.*g") formatting; locale independent.
std::string format_real(double value, int significant_digits);

// Line-oriented CSV builder. Fields are written verbatim (no quoting); all
// our fields are numbers or identifiers.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header);

  CsvWriter& field(std::string_view text);
  CsvWriter& field(double value, int digits = kReportDigits);
  CsvWriter& field(long long value);
  CsvWriter& field(unsigned long long value);
  CsvWriter& field(std::size_t value) { return field(static_cast<unsigned long long>(value)); }
  CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
  void end_row();

  const std::string& text() const { return text_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::string text_;
  bool row_open_ = false;
};

// Parsed CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws FormatError if the column is missing.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

double parse_real(const std::string& text);
long long parse_int(const std::string& text);

}  // namespace plcfe

#endif  // PLCFE_CSV_HPP_
