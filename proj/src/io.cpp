#include "io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "errors.hpp"
#include "sha256.hpp"

namespace tmld::io {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header, const double* data,
               size_t rows, size_t cols) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (size_t j = 0; j < header.size(); ++j) {
    if (j) f << ',';
    f << header[j];
  }
  f << '\n';
  char buf[40];
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) {
      if (j) f << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", data[i * cols + j]);
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty csv: " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  t.cols = t.header.size();
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    size_t ncell = 0;
    while (std::getline(ss, cell, ',')) {
      t.data.push_back(std::strtod(cell.c_str(), nullptr));
      ++ncell;
    }
    if (ncell != t.cols) throw IoError("ragged csv row in " + path);
    ++t.rows;
  }
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << contents;
  if (!f) throw IoError("write failed: " + path);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

std::string sha256_file(const std::string& path) { return Sha256::hash_hex(read_file(path)); }

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("malformed JSON in " + path + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace tmld::io
