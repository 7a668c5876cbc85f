#include "abc/decompositions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "abc/parallel.hpp"

namespace abc {

namespace {

void require_q(int q) {
  if (q < 16) throw std::domain_error("cell family needs q >= 16, got " + std::to_string(q));
}

// Distance from a point at modulus a in the z1 plane to the torus |z1| = b on S^3.
double torus_gap(double s2_a, double s2_b) {
  const double da = std::sqrt(s2_a) - std::sqrt(s2_b);
  const double db = std::sqrt(1.0 - s2_a) - std::sqrt(1.0 - s2_b);
  return std::hypot(da, db);
}

}  // namespace

ProductSet Cell::as_product_set() const {
  const double inv = 1.0 / q;
  return {AngleInterval{k * inv, inv}, AngleInterval{l * inv, inv},
          {XiInterval::from_sin2(m * inv, (m + 1) * inv)}};
}

bool Cell::contains(const HopfPoint& p) const {
  const double s = std::sin(p.xi);
  const double s2 = s * s;
  return p.theta1 * q >= k && p.theta1 * q < k + 1 && p.theta2 * q >= l && p.theta2 * q < l + 1 &&
         s2 * q >= m && s2 * q < m + 1;
}

std::vector<Cell> cells(int q) {
  require_q(q);
  std::vector<Cell> out;
  out.reserve(static_cast<std::size_t>(q - 2) * (q - 2) * (q - 2));
  for (int k = 1; k <= q - 2; ++k)
    for (int l = 1; l <= q - 2; ++l)
      for (int m = 1; m <= q - 2; ++m) out.push_back(Cell{q, k, l, m});
  return out;
}

bool margin_regime_validated(int q, double eps) {
  return q >= 16 && q <= 64 && eps > 0.0 && eps <= 0.1;
}

MarginCell margin_cell(const Cell& b, double eps, MarginSign sign) {
  if (!(eps >= 0.0 && eps < 1.0)) throw std::domain_error("margin_cell: eps must lie in (0, 1)");
  const double q = b.q;
  const double d = (sign == MarginSign::Plus ? 1.0 : -1.0) * eps / (16.0 * q);
  MarginCell mc;
  mc.base = b;
  mc.eps = eps;
  mc.sign = sign;
  mc.t1_lo = b.k / q - d;
  mc.t1_hi = (b.k + 1) / q + d;
  mc.t2_lo = b.l / q - d;
  mc.t2_hi = (b.l + 1) / q + d;
  mc.s2_lo = std::max(0.0, b.m / q - d);
  mc.s2_hi = std::min(1.0, (b.m + 1) / q + d);
  if (mc.t1_hi <= mc.t1_lo || mc.t2_hi <= mc.t2_lo || mc.s2_hi <= mc.s2_lo)
    throw DegenerateCellError("margin_cell: shrunk cell is empty");
  mc.in_validated_regime = eps == 0.0 || margin_regime_validated(b.q, eps);
  return mc;
}

ProductSet MarginCell::as_product_set() const {
  return {AngleInterval::from_bounds(t1_lo, t1_hi), AngleInterval::from_bounds(t2_lo, t2_hi),
          {XiInterval::from_sin2(s2_lo, s2_hi)}};
}

bool MarginCell::contains(const HopfPoint& p) const {
  const double s = std::sin(p.xi);
  const double s2 = s * s;
  return p.theta1 >= t1_lo && p.theta1 < t1_hi && p.theta2 >= t2_lo && p.theta2 < t2_hi &&
         s2 >= s2_lo && s2 < s2_hi;
}

double margin_boundary_distance(const Cell& b, double eps, MarginSign sign) {
  const MarginCell mc = margin_cell(b, eps, sign);
  const double q = b.q;
  const double outer_s2_lo = std::min(mc.s2_lo, b.m / q);
  const double outer_s2_hi = std::max(mc.s2_hi, (b.m + 1) / q);
  const double dtheta = eps / (16.0 * q);
  // Angular faces: the face {theta1 = const} is a half-plane through the z2 axis;
  // a point at angular offset dtheta and modulus r1 sits r1 sin(2 pi dtheta) away.
  const double r1_min = std::sqrt(outer_s2_lo);
  const double r2_min = std::sqrt(1.0 - outer_s2_hi);
  const double d_t1 = r1_min * std::sin(2.0 * kPi * dtheta);
  const double d_t2 = r2_min * std::sin(2.0 * kPi * dtheta);
  const double d_lo = torus_gap(mc.s2_lo, b.m / q);
  const double d_hi = torus_gap(mc.s2_hi, (b.m + 1) / q);
  return std::min({d_t1, d_t2, d_lo, d_hi});
}

double ExcludedSet::half_width() const {
  return 1.0 / (4.0 * q * static_cast<double>(q) * std::sqrt(static_cast<double>(q)));
}

double ExcludedSet::spacing() const { return 1.0 / (4.0 * q * static_cast<double>(q)); }

bool ExcludedSet::contains(double theta1) const {
  const double x = wrap01(theta1 - c / 2.0) / spacing();
  const double d = std::abs(x - std::round(x)) * spacing();
  return d <= half_width();
}

double ExcludedSet::measure() const { return 2.0 / std::sqrt(static_cast<double>(q)); }

std::vector<ExcludedSet::Component> ExcludedSet::complement_components() const {
  const double sp = spacing();
  const double h = half_width();
  const double c0 = wrap01(c / 2.0);
  std::vector<Component> out;
  // Centers are c0 + j * sp; the complement piece after center j is
  // (c0 + j sp + h, c0 + (j + 1) sp - h).
  const std::int64_t j_lo = static_cast<std::int64_t>(std::floor(-c0 / sp)) - 1;
  const std::int64_t j_hi = static_cast<std::int64_t>(std::ceil((1.0 - c0) / sp)) + 1;
  for (std::int64_t j = j_lo; j <= j_hi; ++j) {
    const double lo = std::max(0.0, c0 + j * sp + h);
    const double hi = std::min(1.0, c0 + (j + 1) * sp - h);
    if (hi > lo) out.push_back({lo, hi});
  }
  return out;
}

HopfPoint skew_change(int qp, const HopfPoint& p, SkewDirection dir) {
  const long double slope = 1.0L - 1.0L / qp;
  const long double t2 = dir == SkewDirection::Forward
                             ? static_cast<long double>(p.theta2) + slope * p.theta1
                             : static_cast<long double>(p.theta2) - slope * p.theta1;
  return {p.theta1, static_cast<double>(wrap01(t2)), p.xi};
}

HopfPoint Segment::point_at(double theta1) const {
  const long double t2 = -(1.0L - 1.0L / q) * theta1 + c;
  return {wrap01(theta1), static_cast<double>(wrap01(t2)), xi};
}

std::size_t PartialDecomposition::segment_count() const {
  std::size_t n = 0;
  for (const auto& g : grid) n += g.segments.size();
  return n;
}

Segment PartialDecomposition::segment(std::size_t gi, std::size_t si) const {
  const GridPoint& g = grid.at(gi);
  const Interval& iv = g.segments.at(si);
  return {q, g.c, g.xi, iv.lo, iv.hi};
}

std::pair<double, double> admissible_sin2_band(int q) {
  const double lo = 1.0 / q;
  const double hi = 1.0 - 1.0 / q;
  return {lo * lo, hi * hi};
}

GridSpec default_grid(int q, int nc, int nxi) {
  auto [lo, hi] = admissible_sin2_band(q);
  return {nc, nxi, lo, hi};
}

std::vector<std::pair<double, double>> decomposition_grid(const GridSpec& spec) {
  std::vector<std::pair<double, double>> out;
  const double w = (spec.s2_hi - spec.s2_lo) / spec.nxi;
  for (int ic = 0; ic < spec.nc; ++ic) {
    const double c = static_cast<double>(ic) / spec.nc;
    for (int ix = 0; ix < spec.nxi; ++ix) {
      const double s2 = spec.s2_lo + (ix + 0.5) * w;
      out.emplace_back(c, std::asin(std::sqrt(s2)));
    }
  }
  return out;
}

PartialDecomposition uniform_decomposition(int q, const GridSpec& spec) {
  PartialDecomposition d;
  d.q = q;
  d.spec = spec;
  const double max_len = 1.0 / (static_cast<double>(q) * q * q);
  for (auto [c, xi] : decomposition_grid(spec)) {
    GridPoint g{c, xi, {}};
    for (const auto& comp : ExcludedSet{q, c}.complement_components()) {
      const double len = comp.hi - comp.lo;
      const auto pieces = static_cast<std::int64_t>(std::ceil(len / max_len));
      for (std::int64_t i = 0; i < pieces; ++i) {
        const double a = comp.lo + len * static_cast<double>(i) / pieces;
        const double b = i + 1 == pieces ? comp.hi : comp.lo + len * static_cast<double>(i + 1) / pieces;
        g.segments.push_back({a, b});
      }
    }
    d.grid.push_back(std::move(g));
  }
  return d;
}

ValidationReport validate_partial_decomposition(const PartialDecomposition& d) {
  ValidationReport rep;
  rep.q = d.q;
  rep.coverage_threshold = 1.0 - 3.0 / std::sqrt(static_cast<double>(d.q));
  rep.length_threshold = 1.0 / (static_cast<double>(d.q) * d.q * d.q);
  for (const GridPoint& g : d.grid) {
    GridValidation v;
    v.c = g.c;
    v.xi = g.xi;
    std::vector<Interval> sorted = g.segments;
    std::sort(sorted.begin(), sorted.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const Interval& iv = sorted[i];
      v.coverage += iv.length();
      v.max_length = std::max(v.max_length, iv.length());
      if (!(iv.hi > iv.lo) || iv.lo < 0.0 || iv.hi > 1.0) v.connected = false;
      if (i > 0 && iv.lo < sorted[i - 1].hi) v.disjoint = false;
    }
    std::ostringstream where;
    where.precision(17);
    where << " at c=" << g.c << " xi=" << g.xi;
    if (v.max_length > rep.length_threshold) {
      v.pass = false;
      rep.failures.push_back("segment too long" + where.str());
    }
    if (v.coverage < rep.coverage_threshold) {
      v.pass = false;
      rep.failures.push_back("coverage below 1 - 3/sqrt(q)" + where.str());
    }
    if (!v.disjoint) {
      v.pass = false;
      rep.failures.push_back("segments overlap" + where.str());
    }
    if (!v.connected) {
      v.pass = false;
      rep.failures.push_back("segment is empty or leaves [0, 1]" + where.str());
    }
    rep.pass = rep.pass && v.pass;
    rep.grid.push_back(v);
  }
  return rep;
}

void write_decomposition_csv(const PartialDecomposition& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "c,xi,theta1_lo,theta1_hi\n";
  out.precision(17);
  for (const GridPoint& g : d.grid)
    for (const Interval& iv : g.segments)
      out << g.c << ',' << g.xi << ',' << iv.lo << ',' << iv.hi << '\n';
}

PartialDecomposition read_decomposition_csv(const std::string& path, int q) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  if (line != "c,xi,theta1_lo,theta1_hi")
    throw std::runtime_error(path + ": unexpected header '" + line + "'");
  std::map<std::pair<double, double>, std::vector<Interval>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double v[4];
    std::istringstream ss(line);
    for (int i = 0; i < 4; ++i) {
      std::string cell;
      if (!std::getline(ss, cell, ',')) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 4 columns");
      v[i] = std::stod(cell);
    }
    rows[{v[0], v[1]}].push_back({v[2], v[3]});
  }
  PartialDecomposition d;
  d.q = q;
  std::vector<double> cs, xis;
  for (auto& [key, segs] : rows) {
    cs.push_back(key.first);
    xis.push_back(key.second);
    d.grid.push_back({key.first, key.second, std::move(segs)});
  }
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
  std::sort(xis.begin(), xis.end());
  xis.erase(std::unique(xis.begin(), xis.end()), xis.end());
  d.spec.nc = static_cast<int>(cs.size());
  d.spec.nxi = static_cast<int>(xis.size());
  auto [lo, hi] = admissible_sin2_band(q);
  d.spec.s2_lo = lo;
  d.spec.s2_hi = hi;
  return d;
}

DefectEstimate cell_approximation_defect(const MapExpr& K, const PartialDecomposition& d,
                                         const Cell& b, std::uint64_t n_mc, std::uint64_t seed) {
  DefectEstimate est;
  est.cell_measure = b.measure();
  const GridSpec& spec = d.spec;
  if (spec.nc <= 0 || spec.nxi <= 0 || d.grid.size() != static_cast<std::size_t>(spec.nc) * spec.nxi)
    throw std::invalid_argument("cell_approximation_defect: decomposition grid is not a full nc x nxi grid");

  // Majority vote over 17 equispaced points of K^{-1}(I).
  std::vector<std::vector<Interval>> selected(d.grid.size());
  parallel_for(d.grid.size(), [&](std::size_t gi) {
    const GridPoint& g = d.grid[gi];
    for (std::size_t si = 0; si < g.segments.size(); ++si) {
      const Segment s = d.segment(gi, si);
      int inside = 0;
      for (int j = 0; j < 17; ++j) {
        const double t = s.theta1_lo + (j + 0.5) / 17.0 * s.length();
        if (b.contains(K.eval_inverse(s.point_at(t)))) ++inside;
      }
      if (inside >= 9) selected[gi].push_back(g.segments[si]);
    }
    std::sort(selected[gi].begin(), selected[gi].end(),
              [](const Interval& x, const Interval& y) { return x.lo < y.lo; });
  });
  for (const auto& s : selected) est.selected += s.size();
  if (est.selected == 0) {
    est.defect = est.cell_measure;
    return est;
  }

  const double slope = 1.0 - 1.0 / d.q;
  const double w = (spec.s2_hi - spec.s2_lo) / spec.nxi;
  auto in_union = [&](const HopfPoint& x) {
    const double cx = wrap01(x.theta2 + slope * x.theta1);
    const int ic = static_cast<int>(std::floor(wrap01(cx + 0.5 / spec.nc) * spec.nc)) % spec.nc;
    const double s = std::sin(x.xi);
    const double s2 = s * s;
    if (s2 < spec.s2_lo || s2 >= spec.s2_hi) return false;
    const int ix = std::min(spec.nxi - 1, static_cast<int>((s2 - spec.s2_lo) / w));
    const auto& segs = selected[static_cast<std::size_t>(ic) * spec.nxi + ix];
    auto it = std::upper_bound(segs.begin(), segs.end(), x.theta1,
                               [](double t, const Interval& iv) { return t < iv.lo; });
    if (it == segs.begin()) return false;
    --it;
    return x.theta1 < it->hi;
  };
  const McEstimate mc = mc_measure(
      [&](const HopfPoint& x) { return b.contains(K.eval_inverse(x)) != in_union(x); }, n_mc, seed);
  est.defect = mc.estimate;
  est.std_error = mc.std_error;
  return est;
}

}  // namespace abc
