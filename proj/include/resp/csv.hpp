#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace resp {

// Deterministic CSV output: comma separated, header row, decimal point,
// LF line endings, fixed row order. Doubles are formatted with %.12g so a
// rerun with identical inputs produces byte-identical files.

inline std::string csv_format(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary), columns_(header.size()) {
    if (!out_) throw std::runtime_error("cannot open csv file: " + path);
    for (size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    if (values.size() != columns_)
      throw std::invalid_argument("csv row width mismatch");
    for (size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_format(values[i]);
    }
    out_ << '\n';
  }

  void raw_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
      throw std::invalid_argument("csv row width mismatch");
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  size_t columns_;
};

}  // namespace resp
