#include "mfdgm/output.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mfdgm {

namespace fs = std::filesystem;

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) throw std::invalid_argument("CSV row width does not match the header");
  rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

std::string loss_csv(const std::vector<MetricsRecord>& metrics, bool hjb) {
  CsvTable t({"iteration", "residual", "condition", "total"});
  for (const MetricsRecord& m : metrics) {
    const LossParts& l = hjb ? m.hjb : m.fp;
    t.add_row({std::to_string(m.iteration), format_real(l.residual), format_real(l.condition), format_real(l.total())});
  }
  return t.str();
}

std::string rel_err_csv(const std::vector<MetricsRecord>& metrics) {
  CsvTable t({"iteration", "rho", "phi"});
  for (const MetricsRecord& m : metrics)
    if (m.error) t.add_row({std::to_string(m.iteration), format_real(m.error->rho), format_real(m.error->phi)});
  return t.str();
}

}  // namespace mfdgm
