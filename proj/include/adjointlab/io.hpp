#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace adjointlab {

/// Raw field file: little-endian float64 payload in row-major order plus a
/// text sidecar "<path>.meta" carrying dimensions, dtype tag and ordering.
void write_raw_field(const std::string& path, const Eigen::MatrixXd& field);
Eigen::MatrixXd read_raw_field(const std::string& path);

/// CSV with a header row, comma separators, '.' decimal and LF line endings.
/// Numbers are rendered with up to 17 significant digits so rewrites are
/// byte-stable.
std::string csv_number(double v);

class CsvWriter {
 public:
  CsvWriter(std::string path, std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  void close();  // writes the file; destructor closes too
  ~CsvWriter();

 private:
  std::string path_;
  std::string body_;
  size_t n_cols_;
  bool closed_ = false;
};

}  // namespace adjointlab
