#pragma once

#include <string>
#include <vector>

#include "mfdgm/training.hpp"

namespace mfdgm {

/// %.16e: 17 significant digits, '.' decimal separator regardless of locale.
std::string format_real(double v);

/// Writes `content` to path.tmp and renames it over `path`.  Creates parent
/// directories.  Throws std::runtime_error on I/O failure.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// Simple CSV builder: one header row, then rows of already-formatted cells.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> cells);
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// iteration,residual,condition,total
std::string loss_csv(const std::vector<MetricsRecord>& metrics, bool hjb);
/// iteration,rho,phi (records without an error are skipped)
std::string rel_err_csv(const std::vector<MetricsRecord>& metrics);

}  // namespace mfdgm
