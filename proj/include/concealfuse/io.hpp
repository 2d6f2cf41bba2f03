// Copyright 2026 The concealfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CONCEALFUSE_IO_HPP
#define CONCEALFUSE_IO_HPP

#include <string>
#include <vector>

#include "concealfuse/core.hpp"

namespace concealfuse {

// Comma-separated table without quoting. Lines starting with '#' are
// metadata; on write, a single trailing `# config_hash=... created=...` line
// is appended.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table, const std::string& config_hash);
// Body of a CSV file with '#' lines removed.
std::string csv_body(const std::string& path);

// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& field);
long long parse_int(const std::string& text, const std::string& field);

// `sample_id,label,m0_real,m0_fake,...,m{K-1}_fake` with an empty label for
// unlabeled rows (stored as -1).
struct MatrixTable {
  std::vector<std::string> sample_ids;
  Labels labels;
  Matrix values;
};

MatrixTable read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const MatrixTable& table,
                      const std::string& config_hash);
std::vector<std::string> matrix_csv_header(int model_count);

std::string read_text_file(const std::string& path);
std::string timestamp_utc();

}  // namespace concealfuse

#endif  // CONCEALFUSE_IO_HPP
