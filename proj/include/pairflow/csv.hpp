// Copyright 2026 The Pairflow Authors
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

#include <filesystem>
#include <string>
#include <vector>

namespace pairflow {

// Minimal delimiter-separated text I/O. No quoting: fields must not contain
// the delimiter or newlines (the writer rejects them).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;         // -1 when absent
  int require_column(const std::string& name) const;  // throws ValidationError
};

CsvTable read_csv(const std::filesystem::path& path, char delim = ',');
void write_csv(const std::filesystem::path& path, const CsvTable& table, char delim = ',');

// Doubles are rendered with enough digits to round-trip exactly.
std::string format_double(double value);
double parse_double(const std::string& field, const std::string& context);
long long parse_int(const std::string& field, const std::string& context);

}  // namespace pairflow
