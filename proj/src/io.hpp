#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace tmld::io {

// 17 significant digits: enough decimal text to round-trip any double.
std::string fmt_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;  // row-major rows x cols

  double operator()(size_t i, size_t j) const { return data[i * cols + j]; }
};

void write_csv(const std::string& path, const std::vector<std::string>& header, const double* data,
               size_t rows, size_t cols);
CsvTable read_csv(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

void ensure_dir(const std::string& path);
std::string sha256_file(const std::string& path);

nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace tmld::io
