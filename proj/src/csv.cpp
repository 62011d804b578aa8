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

#include "pairflow/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pairflow/errors.hpp"

namespace pairflow {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == delim) {
      fields.push_back(current);
      current.clear();
    } else if (ch != '\r') {
      current.push_back(ch);
    }
  }
  fields.push_back(current);
  return fields;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  int idx = column(name);
  if (idx < 0) throw ValidationError("missing column '" + name + "'");
  return idx;
}

CsvTable read_csv(const std::filesystem::path& path, char delim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty file: " + path.string());
  table.header = split_line(line, delim);
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (line.empty()) continue;
    auto fields = split_line(line, delim);
    if (fields.size() != table.header.size()) {
      throw ValidationError("row " + std::to_string(row_index) + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table, char delim) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      if (f.find(delim) != std::string::npos || f.find('\n') != std::string::npos) {
        throw ValidationError("field contains delimiter or newline: '" + f + "'");
      }
      if (i) out << delim;
      out << f;
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      throw ValidationError("row width does not match header");
    }
    emit(row);
  }
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  // Trim to the shortest representation that still round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, value);
    if (std::strtod(probe, nullptr) == value) return probe;
  }
  return buf;
}

double parse_double(const std::string& field, const std::string& context) {
  if (field.empty()) throw ValidationError(context + ": empty numeric field");
  errno = 0;
  char* end = nullptr;
  double value = std::strtod(field.c_str(), &end);
  if (errno != 0 || end == field.c_str() || *end != '\0') {
    throw ValidationError(context + ": non-numeric field '" + field + "'");
  }
  return value;
}

long long parse_int(const std::string& field, const std::string& context) {
  if (field.empty()) throw ValidationError(context + ": empty integer field");
  errno = 0;
  char* end = nullptr;
  long long value = std::strtoll(field.c_str(), &end, 10);
  if (errno != 0 || end == field.c_str() || *end != '\0') {
    throw ValidationError(context + ": non-integer field '" + field + "'");
  }
  return value;
}

}  // namespace pairflow
