#pragma once

// Dependency-free SVG rendering of campaign outputs: median error against
// iteration with MAD/2 bands per criterion, and the reference output pdf,
// both on a log10 y-axis.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "owal/error.hpp"

namespace owal {

struct CurveSeries {
  std::string label;
  std::vector<double> x, y, lo, hi;  // lo/hi empty when there is no band
};

struct PlotBounds {
  double x_lo = 0, x_hi = 1;
  double log_y_lo = 0, log_y_hi = 1;  // log10 units
};

namespace svg_detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double to_double(const std::string& cell, const std::string& file, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw format_error(file + ":" + std::to_string(line) + ": '" + cell + "' is not a number");
}

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return palette[i % (sizeof palette / sizeof *palette)];
}

}  // namespace svg_detail

/// Reads a campaign CSV into one series per criterion. The band is
/// median -/+ mad_half; a non-positive lower edge is drawn at median / 10 so it
/// stays on the log axis.
inline std::vector<CurveSeries> read_campaign_curves(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw format_error("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw format_error(file.string() + ": empty file");
  const auto header = svg_detail::split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"iteration", "criterion", "median_error", "mad_half"})
    if (!col.count(need)) throw format_error(file.string() + ": missing column '" + need + "'");

  std::vector<CurveSeries> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = svg_detail::split(line, ',');
    if (cells.size() != header.size())
      throw format_error(file.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                         " fields");
    const std::string crit = cells[col["criterion"]];
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.label == crit; });
    if (it == out.end()) {
      out.push_back({crit, {}, {}, {}, {}});
      it = out.end() - 1;
    }
    const double m = svg_detail::to_double(cells[col["median_error"]], file.string(), lineno);
    const double h = svg_detail::to_double(cells[col["mad_half"]], file.string(), lineno);
    if (!std::isfinite(m) || m <= 0.0) continue;  // nothing to draw on a log axis
    it->x.push_back(svg_detail::to_double(cells[col["iteration"]], file.string(), lineno));
    it->y.push_back(m);
    it->lo.push_back(m - h > 0.0 ? m - h : m / 10.0);
    it->hi.push_back(m + h);
  }
  if (out.empty()) throw format_error(file.string() + ": no data rows");
  return out;
}

/// Reads a reference-pdf TSV ("# ..." comments, then "s pdf d_pdf").
inline CurveSeries read_reference_pdf(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw format_error("cannot read " + file.string());
  std::string line;
  CurveSeries s{"reference pdf", {}, {}, {}, {}};
  std::map<std::string, std::size_t> col;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = svg_detail::split(line, '\t');
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
      for (const char* need : {"s", "pdf"})
        if (!col.count(need)) throw format_error(file.string() + ": missing column '" + need + "'");
      continue;
    }
    if (cells.size() <= std::max(col["s"], col["pdf"]))
      throw format_error(file.string() + ":" + std::to_string(lineno) + ": too few fields");
    s.x.push_back(svg_detail::to_double(cells[col["s"]], file.string(), lineno));
    s.y.push_back(svg_detail::to_double(cells[col["pdf"]], file.string(), lineno));
  }
  if (s.x.empty()) throw format_error(file.string() + ": no data rows");
  return s;
}

/// Data range of every series (bands included) widened by 5% on each side;
/// the y margin is taken in log10 units.
inline PlotBounds plot_bounds(const std::vector<CurveSeries>& series) {
  double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
  for (const auto& s : series) {
    for (double v : s.x) xl = std::min(xl, v), xh = std::max(xh, v);
    for (const auto* vs : {&s.y, &s.lo, &s.hi})
      for (double v : *vs)
        if (v > 0.0) yl = std::min(yl, std::log10(v)), yh = std::max(yh, std::log10(v));
  }
  if (!std::isfinite(xl) || !std::isfinite(yl)) throw format_error("nothing to plot");
  if (xh == xl) xh = xl + 1.0;
  if (yh == yl) yh = yl + 1.0;
  const double mx = 0.05 * (xh - xl), my = 0.05 * (yh - yl);
  return {xl - mx, xh + mx, yl - my, yh + my};
}

/// Renders series (with optional bands) on a log-y chart.
inline std::string render_log_chart(const std::vector<CurveSeries>& series, const std::string& title,
                                    const std::string& x_label, const std::string& y_label) {
  const PlotBounds b = plot_bounds(series);
  const double W = 720, H = 460, L = 80, R = 150, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - b.x_lo) / (b.x_hi - b.x_lo) * pw; };
  auto py = [&](double y) { return T + (b.log_y_hi - std::log10(y)) / (b.log_y_hi - b.log_y_lo) * ph; };
  using svg_detail::num;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<g class=\"axes\" data-x-min=\"" << num(b.x_lo) << "\" data-x-max=\"" << num(b.x_hi) << "\" data-log10-y-min=\""
     << num(b.log_y_lo) << "\" data-log10-y-max=\"" << num(b.log_y_hi) << "\">\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(std::ceil(b.log_y_lo)); e <= static_cast<int>(std::floor(b.log_y_hi)); ++e) {
    const double y = py(std::pow(10.0, e));
    os << "<line x1=\"" << L << "\" x2=\"" << L + pw << "\" y1=\"" << num(y) << "\" y2=\"" << num(y)
       << "\" stroke=\"#dddddd\"/><text x=\"" << L - 6 << "\" y=\"" << num(y + 4)
       << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  const double step = std::pow(10.0, std::floor(std::log10((b.x_hi - b.x_lo) / 2.0)));
  for (double x = std::ceil(b.x_lo / step) * step; x <= b.x_hi; x += step)
    os << "<text x=\"" << num(px(x)) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text transform=\"translate(18," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
     << "</text>\n</g>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (!s.lo.empty()) {
      os << "<path class=\"band\" data-series=\"" << s.label << "\" fill=\"" << svg_detail::color(i)
         << "\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
      for (std::size_t k = 0; k < s.x.size(); ++k) os << (k ? 'L' : 'M') << num(px(s.x[k])) << ',' << num(py(s.hi[k]));
      for (std::size_t k = s.x.size(); k-- > 0;) os << 'L' << num(px(s.x[k])) << ',' << num(py(s.lo[k]));
      os << "Z\"/>\n";
    }
    os << "<polyline class=\"series\" data-series=\"" << s.label << "\" fill=\"none\" stroke=\"" << svg_detail::color(i)
       << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!(s.y[k] > 0.0)) continue;
      os << num(px(s.x[k])) << ',' << num(py(s.y[k])) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 16 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << L + pw + 12 << "\" x2=\"" << L + pw + 32 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << svg_detail::color(i) << "\" stroke-width=\"2\"/><text x=\"" << L + pw + 38 << "\" y=\""
       << ly + 4 << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Writes <problem>_error.svg and <problem>_reference_pdf.svg for every
/// campaign CSV in dir. Returns the files written.
inline std::vector<std::filesystem::path> plot_campaign_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw format_error(dir.string() + ": not a directory");
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".csv" && name.find("_trials.csv") == std::string::npos) csvs.push_back(e.path());
  }
  std::sort(csvs.begin(), csvs.end());
  if (csvs.empty()) throw format_error(dir.string() + ": no campaign CSV files");
  if (!fs::exists(dir / "manifest.json")) throw format_error(dir.string() + ": missing manifest.json");

  std::vector<fs::path> written;
  auto write = [&](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw usage_error("cannot write " + p.string());
    f << text;
    written.push_back(p);
  };
  for (const auto& csv : csvs) {
    const std::string problem = csv.stem().string();
    write(dir / (problem + "_error.svg"),
          render_log_chart(read_campaign_curves(csv), problem + ": median error (bands: MAD/2)", "iteration",
                           "log-pdf error"));
    const fs::path ref = dir / (problem + "_reference_pdf.tsv");
    if (!fs::exists(ref)) throw format_error(ref.string() + ": missing reference pdf file");
    write(dir / (problem + "_reference_pdf.svg"),
          render_log_chart({read_reference_pdf(ref)}, problem + ": reference output pdf", "s", "pdf"));
  }
  return written;
}

}  // namespace owal
