#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "abc/hopf_geometry.hpp"
#include "abc/sphere_maps.hpp"

namespace abc {

class DegenerateCellError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// B_q^{k,l,m}: theta1 in [k/q, (k+1)/q), theta2 in [l/q, (l+1)/q),
// sin^2 xi in [m/q, (m+1)/q).
struct Cell {
  int q = 16;
  int k = 1, l = 1, m = 1;

  ProductSet as_product_set() const;
  bool contains(const HopfPoint& p) const;
  double measure() const { return product_measure(as_product_set()); }
};

std::vector<Cell> cells(int q);

enum class MarginSign { Plus, Minus };

// Cell with eps-sized margins. Angles move by eps/(16 q); the radial margin is
// eps/(16 q) in sin^2 xi, i.e. sin xi in (sqrt(m/q -+ eps/(16q)), sqrt((m+1)/q +- eps/(16q))).
struct MarginCell {
  Cell base;
  double eps = 0.0;
  MarginSign sign = MarginSign::Plus;
  double t1_lo = 0, t1_hi = 0, t2_lo = 0, t2_hi = 0, s2_lo = 0, s2_hi = 0;
  // False when (q, eps) lies outside the sweep on which the margin inequalities
  // were checked numerically.
  bool in_validated_regime = true;

  ProductSet as_product_set() const;
  bool contains(const HopfPoint& p) const;
  double measure() const { return product_measure(as_product_set()); }
};

MarginCell margin_cell(const Cell& b, double eps, MarginSign sign);
bool margin_regime_validated(int q, double eps);

// Euclidean distance in R^4 between the boundary of the cell and the boundary of
// its margin version, minimized over the faces.
double margin_boundary_distance(const Cell& b, double eps, MarginSign sign);

// Cells of C_q containing p after widening by the given margin: at most one per
// axis neighbor, so at most 27 candidates are tested.
template <class F>
void for_each_margin_cell_containing(int q, double eps, MarginSign sign, const HopfPoint& p,
                                     F&& f);

struct ExcludedSet {
  int q = 16;
  double c = 0.0;

  double half_width() const;
  double spacing() const;  // 1 / (4 q^2)
  bool contains(double theta1) const;
  double measure() const;

  // Connected components of the complement inside [0, 1); N_{q,c} is not closed
  // on the torus, so the pieces at theta1 = 0 and theta1 = 1 stay separate.
  struct Component {
    double lo, hi;
  };
  std::vector<Component> complement_components() const;
};

enum class SkewDirection { Forward, Backward };

// Forward sends N_{qp,c} x {xi} to the horizontal line theta2' = c.
HopfPoint skew_change(int qp, const HopfPoint& p, SkewDirection dir);

// theta1 interval [lo, hi) inside [0, 1].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

struct Segment {
  int q = 16;
  double c = 0.0;
  double xi = 0.0;
  double theta1_lo = 0.0;
  double theta1_hi = 0.0;

  double length() const { return theta1_hi - theta1_lo; }
  // Point of N_{q,c} x {xi} at theta1 in [0, 1].
  HopfPoint point_at(double theta1) const;
};

struct GridPoint {
  double c = 0.0;
  double xi = 0.0;
  std::vector<Interval> segments;
};

// Each grid point stands for the bin of (c, sin^2 xi) values around it: c bins
// of width 1/nc centered on j/nc and sin^2 bins of equal width over [s2_lo, s2_hi].
struct GridSpec {
  int nc = 0;
  int nxi = 0;
  double s2_lo = 0.0;
  double s2_hi = 1.0;
};

struct PartialDecomposition {
  int q = 16;
  GridSpec spec;
  std::vector<GridPoint> grid;  // index = ic * nxi + ixi

  std::size_t segment_count() const;
  Segment segment(std::size_t grid_index, std::size_t segment_index) const;
};

// Grid points (c, xi), c-major.
std::vector<std::pair<double, double>> decomposition_grid(const GridSpec& spec);
// sin^2 range of F_q.
std::pair<double, double> admissible_sin2_band(int q);

// Cuts each complement component of M_{q,c} into equal pieces of length at most
// q^{-3}; no stretching involved.
PartialDecomposition uniform_decomposition(int q, const GridSpec& spec);
GridSpec default_grid(int q, int nc = 32, int nxi = 32);

struct GridValidation {
  double c = 0.0, xi = 0.0;
  double coverage = 0.0;
  double max_length = 0.0;
  bool disjoint = true;
  bool connected = true;
  bool pass = true;
};

struct ValidationReport {
  int q = 16;
  double coverage_threshold = 0.0;
  double length_threshold = 0.0;
  std::vector<GridValidation> grid;
  std::vector<std::string> failures;
  bool pass = true;
};

ValidationReport validate_partial_decomposition(const PartialDecomposition& d);

void write_decomposition_csv(const PartialDecomposition& d, const std::string& path);
// Grid bins are inferred from the distinct c and xi values in the file.
PartialDecomposition read_decomposition_csv(const std::string& path, int q);

struct DefectEstimate {
  double defect = 0.0;       // MC estimate of mu(B delta union Gamma)
  double std_error = 0.0;
  std::size_t selected = 0;  // segments selected
  double cell_measure = 0.0;
};

// K maps the cell picture to the decomposition picture, so Gamma = K^{-1}(I).
// A segment is selected when the majority of 17 equispaced points of K^{-1}(I)
// lie in b. Each grid segment stands for its (c, xi) grid bin, so the union of
// selected segments has positive volume.
DefectEstimate cell_approximation_defect(const MapExpr& K, const PartialDecomposition& d,
                                         const Cell& b, std::uint64_t n_mc, std::uint64_t seed);

// ---- template definitions ----

template <class F>
void for_each_margin_cell_containing(int q, double eps, MarginSign sign, const HopfPoint& p,
                                     F&& f) {
  const double s2 = std::sin(p.xi) * std::sin(p.xi);
  const int k0 = static_cast<int>(p.theta1 * q);
  const int l0 = static_cast<int>(p.theta2 * q);
  const int m0 = static_cast<int>(s2 * q);
  for (int dk = -1; dk <= 1; ++dk) {
    const int k = k0 + dk;
    if (k < 1 || k > q - 2) continue;
    for (int dl = -1; dl <= 1; ++dl) {
      const int l = l0 + dl;
      if (l < 1 || l > q - 2) continue;
      for (int dm = -1; dm <= 1; ++dm) {
        const int m = m0 + dm;
        if (m < 1 || m > q - 2) continue;
        const MarginCell mc = margin_cell(Cell{q, k, l, m}, eps, sign);
        if (mc.contains(p)) f(Cell{q, k, l, m});
      }
    }
  }
}

}  // namespace abc
