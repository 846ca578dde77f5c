#include "adjointlab/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "raw field files are little-endian; big-endian hosts need byte swaps");

namespace adjointlab {

void write_raw_field(const std::string& path, const Eigen::MatrixXd& field) {
  std::ofstream meta(path + ".meta");
  if (!meta) throw std::runtime_error("write_raw_field: cannot open " + path + ".meta");
  meta << "dims: " << field.rows() << " " << field.cols() << "\n"
       << "dtype: float64\n"
       << "order: row-major\n";
  meta.close();

  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("write_raw_field: cannot open " + path);
  for (Eigen::Index r = 0; r < field.rows(); ++r) {
    for (Eigen::Index c = 0; c < field.cols(); ++c) {
      const double v = field(r, c);
      bin.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  }
  if (!bin) throw std::runtime_error("write_raw_field: write failed for " + path);
}

Eigen::MatrixXd read_raw_field(const std::string& path) {
  std::ifstream meta(path + ".meta");
  if (!meta) throw std::runtime_error("read_raw_field: missing sidecar " + path + ".meta");
  std::string key;
  Eigen::Index rows = 0, cols = 0;
  std::string dtype, order;
  meta >> key >> rows >> cols;
  if (key != "dims:") throw std::runtime_error("read_raw_field: malformed sidecar " + path);
  meta >> key >> dtype >> key >> order;
  if (dtype != "float64" || order != "row-major") {
    throw std::runtime_error("read_raw_field: unsupported payload layout in " + path + ".meta");
  }

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("read_raw_field: cannot open " + path);
  Eigen::MatrixXd field(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0.0;
      bin.read(reinterpret_cast<char*>(&v), sizeof(double));
      field(r, c) = v;
    }
  }
  if (!bin) throw std::runtime_error("read_raw_field: payload shorter than dims in " + path);
  char extra;
  if (bin.read(&extra, 1)) throw std::runtime_error("read_raw_field: payload longer than dims in " + path);
  return field;
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(std::string path, std::vector<std::string> header)
    : path_(std::move(path)), n_cols_(header.size()) {
  if (header.empty()) throw std::invalid_argument("CsvWriter: empty header");
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) body_ += ",";
    body_ += header[i];
  }
  body_ += "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_) throw std::invalid_argument("CsvWriter: column count mismatch");
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) body_ += ",";
    body_ += cells[i];
  }
  body_ += "\n";
}

void CsvWriter::close() {
  if (closed_) return;
  closed_ = true;
  std::ofstream out(path_, std::ios::binary);  // binary: keep LF endings everywhere
  if (!out) throw std::runtime_error("CsvWriter: cannot open " + path_);
  out << body_;
}

CsvWriter::~CsvWriter() {
  try {
    close();
  } catch (...) {
  }
}

}  // namespace adjointlab
