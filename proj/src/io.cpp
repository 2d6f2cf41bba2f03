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

#include "concealfuse/io.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace concealfuse {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("file", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv", "cannot open " + path);
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    if (!have_header) {
      t.header = split_line(line);
      have_header = true;
      continue;
    }
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw ValidationError("row " + std::to_string(t.rows.size()),
                            "expected " + std::to_string(t.header.size()) + " cells, got " +
                                std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ValidationError("csv", "missing header in " + path);
  return t;
}

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_csv(const std::string& path, const CsvTable& table, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw ValidationError("csv", "cannot write " + path);
  auto write_row = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& r : table.rows) write_row(r);
  out << "# config_hash=" << config_hash << " created=" << timestamp_utc() << '\n';
}

std::string csv_body(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv", "cannot open " + path);
  std::string body;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    body += line;
    body += '\n';
  }
  return body;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& field) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ValidationError(field, "not a number: '" + text + "'");
  return v;
}

long long parse_int(const std::string& text, const std::string& field) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ValidationError(field, "not an integer: '" + text + "'");
  return v;
}

std::vector<std::string> matrix_csv_header(int model_count) {
  std::vector<std::string> h{"sample_id", "label"};
  for (int k = 0; k < model_count; ++k) {
    h.push_back("m" + std::to_string(k) + "_real");
    h.push_back("m" + std::to_string(k) + "_fake");
  }
  return h;
}

MatrixTable read_matrix_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 4 || t.header.size() % 2 != 0)
    throw ValidationError("header", "expected sample_id,label and pairs of model columns");
  const int k = static_cast<int>((t.header.size() - 2) / 2);
  if (t.header != matrix_csv_header(k))
    throw ValidationError("header", "expected sample_id,label,m0_real,m0_fake,...");
  MatrixTable m;
  const Index n = static_cast<Index>(t.rows.size());
  m.values.resize(n, 2 * k);
  m.labels.resize(n);
  for (Index r = 0; r < n; ++r) {
    const auto& cells = t.rows[static_cast<std::size_t>(r)];
    const std::string where = "row " + std::to_string(r);
    m.sample_ids.push_back(cells[0]);
    if (cells[1].empty()) {
      m.labels(r) = -1;
    } else {
      const long long lab = parse_int(cells[1], where + " label");
      if (lab != kReal && lab != kFake) throw ValidationError(where, "label must be 0, 1 or empty");
      m.labels(r) = static_cast<int>(lab);
    }
    for (int c = 0; c < 2 * k; ++c) m.values(r, c) = parse_double(cells[2 + c], where);
  }
  return m;
}

void write_matrix_csv(const std::string& path, const MatrixTable& table,
                      const std::string& config_hash) {
  if (table.values.cols() % 2 != 0) throw ValidationError("matrix", "odd column count");
  CsvTable t;
  t.header = matrix_csv_header(static_cast<int>(table.values.cols() / 2));
  for (Index r = 0; r < table.values.rows(); ++r) {
    std::vector<std::string> row;
    row.push_back(r < static_cast<Index>(table.sample_ids.size()) ? table.sample_ids[r]
                                                                  : std::to_string(r));
    row.push_back(r < table.labels.size() && table.labels(r) >= 0 ? std::to_string(table.labels(r))
                                                                  : "");
    for (Index c = 0; c < table.values.cols(); ++c) row.push_back(format_double(table.values(r, c)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t, config_hash);
}

}  // namespace concealfuse
