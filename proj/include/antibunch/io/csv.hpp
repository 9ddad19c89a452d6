#pragma once

// CSV export of histograms and traces, and re-import.
//
// Every file has a header row and "\n" line endings. The first column is the
// bin center (ns with 3 decimals, or ms for traces).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "antibunch/core.hpp"
#include "antibunch/fit/g2.hpp"
#include "antibunch/io/timestamp_file.hpp"

namespace antibunch::io {

namespace detail {

inline std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::open_failed, "cannot create " + path);
  out << text;
  out.flush();
  if (!out) throw IoError(IoErrc::write_failed, "write failed on " + path);
}

inline void require_nonempty(std::size_t n) {
  if (n == 0) throw std::invalid_argument("cannot export an empty histogram");
}

}  // namespace detail

inline std::string histogram_csv(const CoincidenceHistogram& h) {
  detail::require_nonempty(h.counts.size());
  std::string s = "tau_ns,count\n";
  for (std::size_t j = 0; j < h.counts.size(); ++j)
    s += detail::fixed3(h.bin_center_ns(j)) + "," + std::to_string(h.counts[j]) + "\n";
  return s;
}

// Normalized g2 adds the per-bin sigma as a third column.
inline std::string histogram_csv(const fit::NormalizedG2& g) {
  detail::require_nonempty(g.value.size());
  std::string s = "tau_ns,g2,sigma\n";
  for (std::size_t j = 0; j < g.value.size(); ++j)
    s += detail::fixed3(g.tau_ns[j]) + "," + detail::real(g.value[j]) + "," + detail::real(g.sigma[j]) + "\n";
  return s;
}

inline std::string histogram_csv(const DecayHistogram& d) {
  detail::require_nonempty(d.counts.size());
  std::string s = "delay_ns,count\n";
  for (std::size_t j = 0; j < d.counts.size(); ++j)
    s += detail::fixed3(d.bin_center_ns(j)) + "," + std::to_string(d.counts[j]) + "\n";
  return s;
}

inline std::string histogram_csv(const IntensityTrace& t) {
  detail::require_nonempty(t.counts.size());
  std::string s = "time_ms,count\n";
  for (std::size_t j = 0; j < t.counts.size(); ++j)
    s += detail::fixed3((static_cast<double>(j) + 0.5) * t.bin_ms()) + "," + std::to_string(t.counts[j]) + "\n";
  return s;
}

template <class H>
void export_histogram_csv(const H& h, const std::string& path) {
  detail::write_text(path, histogram_csv(h));
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("CSV has no header row");
  {
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) t.header.push_back(cell);
  }
  t.columns.resize(t.header.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(cells, cell, ',')) {
      if (c >= t.columns.size()) throw std::invalid_argument("CSV row " + std::to_string(row) + " has extra cells");
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument("CSV row " + std::to_string(row) + " has a malformed cell");
      t.columns[c++].push_back(v);
    }
    if (c != t.columns.size()) throw std::invalid_argument("CSV row " + std::to_string(row) + " is short");
  }
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::open_failed, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

namespace detail {

inline std::vector<std::uint64_t> counts_column(const CsvTable& t) {
  if (t.columns.size() < 2 || t.rows() < 2) throw std::invalid_argument("histogram CSV needs two columns and two rows");
  std::vector<std::uint64_t> out;
  out.reserve(t.rows());
  for (double v : t.columns[1]) {
    if (v < 0.0 || v != std::floor(v)) throw std::invalid_argument("counts must be non-negative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

inline Picoseconds bin_width_from(const std::vector<double>& centers_ns) {
  const Picoseconds bw = ns_to_ps(centers_ns[1] - centers_ns[0]);
  if (bw <= 0) throw std::invalid_argument("bin centers must increase");
  for (std::size_t j = 2; j < centers_ns.size(); ++j)
    if (ns_to_ps(centers_ns[j] - centers_ns[j - 1]) != bw) throw std::invalid_argument("bin centers are not evenly spaced");
  return bw;
}

}  // namespace detail

// Rebuilds a coincidence histogram from its CSV. Bins must be symmetric
// about zero delay, as exported.
inline CoincidenceHistogram coincidence_from_csv(const CsvTable& t) {
  CoincidenceHistogram h;
  h.counts = detail::counts_column(t);
  h.bin_width = detail::bin_width_from(t.columns[0]);
  const Picoseconds low = ns_to_ps(t.columns[0].front()) - h.bin_width / 2;
  h.window = -low;
  if (h.window <= 0 || CoincidenceHistogram::bin_count(h.window, h.bin_width) != h.counts.size())
    throw std::invalid_argument("bins do not span a symmetric delay window");
  return h;
}

inline DecayHistogram decay_from_csv(const CsvTable& t) {
  DecayHistogram d;
  d.counts = detail::counts_column(t);
  d.bin_width = detail::bin_width_from(t.columns[0]);
  d.period = d.bin_width * static_cast<Picoseconds>(d.counts.size());
  return d;
}

inline IntensityTrace trace_from_csv(const CsvTable& t) {
  IntensityTrace tr;
  tr.counts = detail::counts_column(t);
  const double bin_ms = t.columns[0][1] - t.columns[0][0];
  tr.bin_width = static_cast<Picoseconds>(std::llround(bin_ms * 1e3)) * kPsPerMs / 1000;
  if (tr.bin_width <= 0) throw std::invalid_argument("trace bins must increase");
  return tr;
}

}  // namespace antibunch::io
