#pragma once

#include <string>
#include <vector>

#include "abc/statistics.hpp"
#include "abc/stretching.hpp"

namespace abc {

void write_ergodicity_csv(const ErgodicityReport& rep, const std::string& path);
void write_mixing_csv(const MixingReport& rep, const std::string& path);
void write_correlation_csv(const CorrelationTable& table, const std::string& path);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal standalone SVG line plot. Non-positive values are dropped on a log axis.
std::string svg_line_plot(const std::vector<PlotSeries>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label, bool log_y);

// Defect against m, one line per pair, log-y.
void write_correlation_svg(const CorrelationTable& table, const std::string& path);
// f2 over [lo, hi] with the excluded set shaded.
void write_profile_svg(const StretchProfile& pr, double lo, double hi, const std::string& path);

void write_text(const std::string& path, const std::string& text);

}  // namespace abc
