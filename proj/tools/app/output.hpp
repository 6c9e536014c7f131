#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/numerics.hpp"

namespace mfg_lqg::app {

/// Round-trip decimal (17 significant digits).
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string cell(double v) { return fmt(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(long v) { return std::to_string(v); }
inline std::string cell(long long v) { return std::to_string(v); }
inline std::string cell(const std::string& v) { return v; }
inline std::string cell(const char* v) { return v; }

/// Long-format CSV with a fixed header.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header)
      : out_(path, std::ios::binary), columns_(header.size()) {
    if (!out_) throw ConfigError("cannot write " + path.string());
    write(header);
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    static_assert(sizeof...(Cells) > 0);
    write({cell(cells)...});
  }

 private:
  void write(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::size_t columns_;
};

inline void write_json(const std::filesystem::path& path,
                       const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json_vector(const VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace mfg_lqg::app
