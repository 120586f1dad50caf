#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rmdpg/dpg.hpp"
#include "rmdpg/stages.hpp"

namespace rmdpg {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const char* csv_header() { return "level,nT,dofs,t,err_u_H1,err_psi_L2,err_M_L2,eta1,eta2,eta3,eta"; }

/// Deterministic convergence table: fixed header, 17 significant digits.
/// Wall-clock timings are reported separately (write_timings) so that two
/// identical runs produce byte-identical CSV files.
inline std::string records_to_csv(const std::vector<LevelRecord>& records) {
  std::ostringstream os;
  os << csv_header() << "\n";
  for (const auto& r : records) {
    os << r.level << "," << r.n_triangles << "," << r.dofs << "," << format_g17(r.t) << ","
       << format_g17(r.err_u_h1) << "," << format_g17(r.err_psi_l2) << "," << format_g17(r.err_m_l2) << ","
       << format_g17(r.eta1) << "," << format_g17(r.eta2) << "," << format_g17(r.eta3) << "," << format_g17(r.eta)
       << "\n";
  }
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

inline std::string records_to_timings(const std::vector<LevelRecord>& records) {
  std::ostringstream os;
  os << "# wall-clock seconds per stage (non-deterministic; kept out of the CSV)\n";
  os << "level nT stage1_s stage2_s stage3_s\n";
  for (const auto& r : records) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d %d %.3f %.3f %.3f\n", r.level, r.n_triangles, r.secs1, r.secs2, r.secs3);
    os << buf;
  }
  return os.str();
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv: empty input");
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
  if (t.columns.empty()) throw ConfigError("csv: no header columns");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (...) {
        throw ConfigError("csv: non-numeric cell '" + cell + "'");
      }
    }
    if (row.size() != t.columns.size()) throw ConfigError("csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw ConfigError("csv: no data rows");
  return t;
}

/// Log-log plot data: one block per finite series plus a guide line of the
/// requested slope anchored at the last data point of each series.
inline std::string plotdata_from_csv(const CsvTable& t, double guide_slope) {
  const int nt_col = t.column("nT");
  if (nt_col < 0) throw ConfigError("csv: missing nT column");
  static const char* series[] = {"err_u_H1", "err_psi_L2", "err_M_L2", "eta1", "eta2", "eta3", "eta"};
  std::ostringstream os;
  for (const char* name : series) {
    const int c = t.column(name);
    if (c < 0) continue;
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : t.rows)
      if (std::isfinite(row[c]) && row[c] > 0.0) pts.emplace_back(row[nt_col], row[c]);
    if (pts.size() < 2) continue;
    os << "# series " << name << "\n";
    for (const auto& [x, y] : pts) os << format_g17(x) << " " << format_g17(y) << "\n";
    os << "\n";
    const auto [x_last, y_last] = pts.back();
    const double x_first = pts.front().first;
    os << "# guide " << name << " slope " << format_g17(guide_slope) << "\n";
    os << format_g17(x_first) << " " << format_g17(y_last * std::pow(x_first / x_last, guide_slope)) << "\n";
    os << format_g17(x_last) << " " << format_g17(y_last) << "\n";
    os << "\n";
  }
  return os.str();
}

/// Least-squares slopes of log(error) vs log(#T) over the last `window`
/// levels, for every finite series.
inline std::string rate_table(const std::vector<LevelRecord>& records, int window = 3) {
  std::ostringstream os;
  if (records.size() < 2) return os.str();
  const std::size_t n = std::min<std::size_t>(records.size(), static_cast<std::size_t>(window));
  const auto slope = [&](auto field) -> double {
    std::vector<double> x, y;
    for (std::size_t i = records.size() - n; i < records.size(); ++i) {
      const double v = field(records[i]);
      if (!std::isfinite(v) || v <= 0.0) return std::numeric_limits<double>::quiet_NaN();
      x.push_back(std::log(static_cast<double>(records[i].n_triangles)));
      y.push_back(std::log(v));
    }
    return least_squares_slope(x, y);
  };
  const std::pair<const char*, double> rates[] = {
      {"err_u_H1", slope([](const LevelRecord& r) { return r.err_u_h1; })},
      {"err_psi_L2", slope([](const LevelRecord& r) { return r.err_psi_l2; })},
      {"err_M_L2", slope([](const LevelRecord& r) { return r.err_m_l2; })},
      {"eta", slope([](const LevelRecord& r) { return r.eta; })},
  };
  os << "rates vs #T over the last " << n << " levels:\n";
  for (const auto& [name, v] : rates) {
    if (std::isfinite(v)) {
      char buf[80];
      std::snprintf(buf, sizeof(buf), "  %-12s %+.3f\n", name, v);
      os << buf;
    }
  }
  return os.str();
}

/// Debug dump of the per-element kernels (row-major, 17 significant digits).
inline std::string dump_kernels_text(const Mesh& mesh, const KernelConfig& cfg, const std::vector<Vec2>& grad_r) {
  std::ostringstream os;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto k = compute_element_kernel(mesh, t, cfg, grad_r[t]);
    os << "element " << t << " gram " << k.gram.rows() << " " << k.gram.cols() << "\n";
    for (int i = 0; i < k.gram.rows(); ++i) {
      for (int j = 0; j < k.gram.cols(); ++j) os << (j ? " " : "") << format_g17(k.gram(i, j));
      os << "\n";
    }
    os << "element " << t << " b " << k.b.rows() << " " << k.b.cols() << "\n";
    for (int i = 0; i < k.b.rows(); ++i) {
      for (int j = 0; j < k.b.cols(); ++j) os << (j ? " " : "") << format_g17(k.b(i, j));
      os << "\n";
    }
    os << "element " << t << " load " << k.load.size() << "\n";
    for (int i = 0; i < k.load.size(); ++i) os << (i ? " " : "") << format_g17(k.load[i]);
    os << "\n";
  }
  return os.str();
}

/// Text dump of the final solution coefficient blocks.
inline std::string dump_solution_text(const Mesh& mesh, const TrialLayout& layout, const StageSolution& sol) {
  std::ostringstream os;
  os << "r " << sol.r.size() << "\n";
  for (int i = 0; i < sol.r.size(); ++i) os << format_g17(sol.r[i]) << "\n";
  os << "ufrak " << sol.ufrak.size() << "\n";
  for (int i = 0; i < sol.ufrak.size(); ++i) os << format_g17(sol.ufrak[i]) << "\n";
  os << "u " << sol.u.size() << "\n";
  for (int i = 0; i < sol.u.size(); ++i) os << format_g17(sol.u[i]) << "\n";
  (void)mesh;
  (void)layout;
  return os.str();
}

}  // namespace rmdpg
