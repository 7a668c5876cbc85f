#include "abc/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace abc {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  return out;
}

const char* sign_name(MarginSign s) { return s == MarginSign::Plus ? "+" : "-"; }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

void write_ergodicity_csv(const ErgodicityReport& rep, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "q,eps,N,starts,worst_deviation,threshold,worst_k,worst_l,worst_m,worst_sign,worst_start,pass,scope\n";
  out << rep.q << ',' << rep.eps << ',' << rep.N << ',' << rep.starts << ',' << rep.worst_deviation
      << ',' << rep.threshold << ',' << rep.worst_cell.k << ',' << rep.worst_cell.l << ','
      << rep.worst_cell.m << ',' << sign_name(rep.worst_sign) << ',' << rep.worst_start << ','
      << (rep.pass ? 1 : 0) << ",\"" << rep.scope << "\"\n";
}

void write_mixing_csv(const MixingReport& rep, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "grid_index,segment_index,worst_deviation,threshold,k,l,m,sign,ratio,pass\n";
  for (const auto& r : rep.rows)
    out << r.grid_index << ',' << r.segment_index << ',' << r.worst_deviation << ','
        << rep.threshold << ',' << r.worst_cell.k << ',' << r.worst_cell.l << ','
        << r.worst_cell.m << ',' << sign_name(r.worst_sign) << ',' << r.ratio << ','
        << (r.worst_deviation <= rep.threshold ? 1 : 0) << '\n';
}

void write_correlation_csv(const CorrelationTable& table, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "m,a_id,b_id,joint,product,defect,std_error\n";
  for (const auto& r : table.rows)
    out << r.m << ',' << r.a_id << ',' << r.b_id << ',' << r.joint << ',' << r.product << ','
        << r.defect << ',' << r.std_error << '\n';
}

std::string svg_line_plot(const std::vector<PlotSeries>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label, bool log_y) {
  constexpr double W = 720, H = 440, ml = 80, mr = 150, mt = 40, mb = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!(x1 >= x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (ty(y) - y0) / (y1 - y0) * (H - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(title) << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
     << "\" stroke=\"black\"/>\n";
  char buf[64];
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    std::snprintf(buf, sizeof buf, "%.4g", xv);
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\">" << buf
       << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.3g", log_y ? std::pow(10.0, yv) : yv);
    const double yp = H - mb - (yv - y0) / (y1 - y0) * (H - mt - mb);
    os << "<text x=\"" << ml - 6 << "\" y=\"" << yp + 4 << "\" text-anchor=\"end\">" << buf
       << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << (mt + H - mb) / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << (log_y ? " (log)" : "")
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = colors[k % 8];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - mr + 10 << "\" y=\"" << mt + 16 * k + 10 << "\" fill=\"" << col
       << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_correlation_svg(const CorrelationTable& table, const std::string& path) {
  std::map<std::pair<std::size_t, std::size_t>, PlotSeries> by_pair;
  for (const auto& r : table.rows) {
    auto& s = by_pair[{r.a_id, r.b_id}];
    s.label = "pair " + std::to_string(r.a_id);
    s.x.push_back(static_cast<double>(r.m));
    s.y.push_back(r.defect);
  }
  std::vector<PlotSeries> series;
  for (auto& [k, s] : by_pair) series.push_back(std::move(s));
  write_text(path, svg_line_plot(series, "correlation defect |mu(A n F^-m B) - mu(A) mu(B)|", "m",
                                 "defect", true));
}

void write_profile_svg(const StretchProfile& pr, double lo, double hi, const std::string& path) {
  constexpr int n = 2001;
  PlotSeries f2{"f2", {}, {}};
  for (int i = 0; i < n; ++i) {
    const double t = lo + (hi - lo) * i / (n - 1);
    f2.x.push_back(t);
    f2.y.push_back(pr.f2(t));
  }
  std::string svg = svg_line_plot({f2}, "stretch profile f2", "theta1", "f2", false);
  // Shade M_{q,c} by a thin band under the axis.
  const ExcludedSet M{pr.q, pr.c};
  std::ostringstream band;
  constexpr double W = 720, H = 440, ml = 80, mr = 150, mb = 60;
  for (int i = 0; i < n - 1; ++i) {
    const double t = lo + (hi - lo) * (i + 0.5) / (n - 1);
    if (!M.contains(t)) continue;
    const double x = ml + (t - lo) / (hi - lo) * (W - ml - mr);
    band << "<rect x=\"" << x << "\" y=\"" << H - mb - 6 << "\" width=\""
         << (W - ml - mr) / (n - 1) + 0.5 << "\" height=\"6\" fill=\"#bbbbbb\"/>\n";
  }
  svg.insert(svg.rfind("</svg>"), band.str());
  write_text(path, svg);
}

}  // namespace abc
