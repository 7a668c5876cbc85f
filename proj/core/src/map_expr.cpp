#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "abc/sphere_maps.hpp"

namespace abc {

namespace {

std::string format_real(long double v) {
  std::ostringstream os;
  os.precision(21);
  os << v;
  return os.str();
}

bool is_atomic(MapExpr::Kind k) {
  return k != MapExpr::Kind::Compose && k != MapExpr::Kind::Power;
}

// Rotation of a Cartesian point by `turns` full turns in both complex planes.
CartesianPoint rotate_cartesian(const CartesianPoint& z, long double turns) {
  const long double a = 2.0L * kPiL * wrap01(turns);
  const double c = static_cast<double>(std::cos(a));
  const double s = static_cast<double>(std::sin(a));
  return {c * z.x1 - s * z.y1, s * z.x1 + c * z.y1, c * z.x2 - s * z.y2, s * z.x2 + c * z.y2};
}

HopfPoint leaf_rotation(const HopfPoint& p, const RationalRotation& a, std::int64_t m) {
  return rotate(a, p, m);
}
CartesianPoint leaf_rotation(const CartesianPoint& z, const RationalRotation& a, std::int64_t m) {
  return rotate_cartesian(z, a.multiple(m));
}
HopfPoint leaf_real_rotation(const HopfPoint& p, long double a, std::int64_t m) {
  return rotate(a, p, m);
}
CartesianPoint leaf_real_rotation(const CartesianPoint& z, long double a, std::int64_t m) {
  return rotate_cartesian(z, wrap01(static_cast<long double>(m) * a));
}

// chi is invariant under the twist, so its m-th power is the twist with amplitude mA.
template <class P>
P leaf_twist(const P& p, int q, long double A, std::int64_t m) {
  return twist(TwistParams{q, A * static_cast<long double>(m)}, p);
}

template <class P>
P leaf_mix(const P& p, long double turn, std::int64_t m) {
  return mix(turn * static_cast<long double>(m), p);
}

bool is_conjugation(const MapExpr::Node& n) {
  return n.kind == MapExpr::Kind::Compose && n.conj_parts > 0;
}

template <class P>
P apply(const MapExpr::Node& n, const P& p, std::int64_t m);

template <class P>
P apply_expr(const MapExpr& e, const P& p, std::int64_t m) {
  return apply(e.node(), p, m);
}

template <class P>
P apply(const MapExpr::Node& n, const P& p, std::int64_t m) {
  using K = MapExpr::Kind;
  if (m == 0) return p;
  switch (n.kind) {
    case K::Identity:
      return p;
    case K::Rotation:
      return leaf_rotation(p, n.alpha, m);
    case K::RealRotation:
      return leaf_real_rotation(p, n.real_alpha, m);
    case K::Twist:
      return leaf_twist(p, n.q, n.amount, m);
    case K::Mix:
      return leaf_mix(p, n.amount, m);
    case K::Inverse:
      return apply_expr(n.children.at(0), p, -m);
    case K::Power:
      return apply_expr(n.children.at(0), p, n.exponent * m);
    case K::Compose: {
      if (is_conjugation(n)) {
        // x^{-1} o y^m o x
        const auto& parts = n.children;
        const std::size_t k = n.conj_parts;
        P z = p;
        for (std::size_t i = 0; i < k; ++i) z = apply_expr(parts[parts.size() - 1 - i], z, 1);
        if (parts.size() == 2 * k + 1) {
          z = apply_expr(parts[k], z, m);
        } else if (parts.size() > 2 * k + 1) {
          std::vector<MapExpr> middle(parts.begin() + k, parts.end() - k);
          z = apply_expr(MapExpr::compose(std::move(middle)), z, m);
        }
        for (std::size_t i = k; i-- > 0;) z = apply_expr(parts[parts.size() - 1 - i], z, -1);
        return z;
      }
      P z = p;
      const std::int64_t reps = m > 0 ? m : -m;
      for (std::int64_t r = 0; r < reps; ++r) {
        if (m > 0) {
          for (auto it = n.children.rbegin(); it != n.children.rend(); ++it)
            z = apply_expr(*it, z, 1);
        } else {
          for (const auto& c : n.children) z = apply_expr(c, z, -1);
        }
      }
      return z;
    }
  }
  throw MapExprError("MapExpr: malformed node");
}

}  // namespace

MapExpr::MapExpr() : MapExpr(identity()) {}

MapExpr::MapExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

MapExpr MapExpr::identity() {
  static const auto node = [] {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Identity;
    n->text = "id";
    return n;
  }();
  return MapExpr(node);
}

MapExpr MapExpr::rotation(const RationalRotation& alpha) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Rotation;
  n->alpha = RationalRotation::make(alpha.p, alpha.q);
  n->text = "rot(" + n->alpha.to_string() + ")";
  return MapExpr(n);
}

MapExpr MapExpr::rotation(long double alpha) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::RealRotation;
  n->real_alpha = alpha;
  n->text = "rot(" + format_real(alpha) + ")";
  return MapExpr(n);
}

MapExpr MapExpr::twist(int q, long double A) {
  if (q <= 0) throw MapExprError("twist: q must be positive");
  if (A == 0.0L) return identity();
  auto n = std::make_shared<Node>();
  n->kind = Kind::Twist;
  n->q = q;
  n->amount = A;
  n->text = "twist(q=" + std::to_string(q) + ",A=" + format_real(A) + ")";
  return MapExpr(n);
}

MapExpr MapExpr::mix(long double turn) {
  if (turn == 0.0L) return identity();
  auto n = std::make_shared<Node>();
  n->kind = Kind::Mix;
  n->amount = turn;
  n->text = "mix(" + format_real(turn) + ")";
  return MapExpr(n);
}

MapExpr MapExpr::compose(std::vector<MapExpr> parts) {
  std::vector<MapExpr> flat;
  for (auto& p : parts) {
    if (p.kind() == Kind::Identity) continue;
    if (p.kind() == Kind::Compose) {
      for (const auto& c : p.node_->children) flat.push_back(c);
    } else {
      flat.push_back(std::move(p));
    }
  }
  if (flat.empty()) return identity();
  if (flat.size() == 1) return flat.front();
  auto n = std::make_shared<Node>();
  n->kind = Kind::Compose;
  int depth = 0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (i) n->text += " . ";
    n->text += flat[i].to_string();
    depth = std::max(depth, flat[i].depth());
  }
  n->depth = depth + 1;
  std::size_t k = 0;
  while (2 * (k + 1) <= flat.size() && flat[k] == flat[flat.size() - 1 - k].inverse()) ++k;
  n->conj_parts = k;
  n->children = std::move(flat);
  return MapExpr(n);
}

MapExpr MapExpr::compose(const MapExpr& outer, const MapExpr& inner) {
  return compose(std::vector<MapExpr>{outer, inner});
}

MapExpr MapExpr::conjugate(const MapExpr& x, const MapExpr& y) {
  if (x.is_identity()) return y;
  return compose({x.inverse(), y, x});
}

MapExpr MapExpr::inverse() const {
  switch (kind()) {
    case Kind::Identity:
      return *this;
    case Kind::Inverse:
      return node_->children.at(0);
    case Kind::Compose: {
      std::vector<MapExpr> parts;
      for (auto it = node_->children.rbegin(); it != node_->children.rend(); ++it)
        parts.push_back(it->inverse());
      return compose(std::move(parts));
    }
    default:
      break;
  }
  auto n = std::make_shared<Node>();
  n->kind = Kind::Inverse;
  n->children = {*this};
  n->depth = depth() + 1;
  n->text = "inv(" + to_string() + ")";
  return MapExpr(n);
}

MapExpr MapExpr::power(std::int64_t m) const {
  if (m == 1) return *this;
  if (m == 0 || is_identity()) return identity();
  if (m == -1) return inverse();
  if (kind() == Kind::Power) return node_->children.at(0).power(node_->exponent * m);
  auto n = std::make_shared<Node>();
  n->kind = Kind::Power;
  n->exponent = m;
  n->children = {*this};
  n->depth = depth() + 1;
  const std::string base = is_atomic(kind()) ? to_string() : "(" + to_string() + ")";
  n->text = base + "^" + std::to_string(m);
  return MapExpr(n);
}

const std::string& MapExpr::to_string() const { return node_->text; }
MapExpr::Kind MapExpr::kind() const { return node_->kind; }
int MapExpr::depth() const { return node_->depth; }

std::int64_t MapExpr::exact_period() const {
  switch (kind()) {
    case Kind::Identity:
      return 1;
    case Kind::Rotation:
      return node_->alpha.q;
    case Kind::Inverse:
      return node_->children.at(0).exact_period();
    case Kind::Power: {
      const std::int64_t p = node_->children.at(0).exact_period();
      if (p == 0) return 0;
      return p / std::gcd(p, std::llabs(node_->exponent));
    }
    case Kind::Compose: {
      if (!is_conjugation(*node_)) return 0;
      const auto& parts = node_->children;
      const std::size_t k = node_->conj_parts;
      if (parts.size() == 2 * k) return 1;
      std::vector<MapExpr> middle(parts.begin() + k, parts.end() - k);
      return compose(std::move(middle)).exact_period();
    }
    default:
      return 0;
  }
}

HopfPoint MapExpr::eval(const HopfPoint& p) const { return apply(*node_, p, 1); }
HopfPoint MapExpr::eval_inverse(const HopfPoint& p) const { return apply(*node_, p, -1); }
CartesianPoint MapExpr::eval(const CartesianPoint& z) const { return apply(*node_, z, 1); }
HopfPoint MapExpr::eval_power(const HopfPoint& p, std::int64_t m) const {
  return m == 0 ? p : apply(*node_, p, m);
}
CartesianPoint MapExpr::eval_power(const CartesianPoint& z, std::int64_t m) const {
  return m == 0 ? z : apply(*node_, z, m);
}
CartesianPoint MapExpr::eval_inverse(const CartesianPoint& z) const {
  return apply(*node_, z, -1);
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  MapExpr parse_all() {
    MapExpr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw MapExprError("MapExpr parse error at offset " + std::to_string(pos_) + ": " + what);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(std::string_view tok) {
    skip();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }

  std::string_view token_until(std::string_view stops) {
    skip();
    std::size_t start = pos_;
    while (pos_ < s_.size() && stops.find(s_[pos_]) == std::string_view::npos) ++pos_;
    std::string_view t = s_.substr(start, pos_ - start);
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
    if (t.empty()) fail("expected a value");
    return t;
  }

  long double real_value(std::string_view t) {
    std::string buf(t);
    char* end = nullptr;
    long double v = std::strtold(buf.c_str(), &end);
    if (end == buf.c_str() || *end != '\0') fail("bad number '" + buf + "'");
    return v;
  }

  std::int64_t int_value(std::string_view t) {
    std::int64_t v = 0;
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size())
      fail("bad integer '" + std::string(t) + "'");
    return v;
  }

  MapExpr expr() {
    std::vector<MapExpr> parts{term()};
    while (true) {
      skip();
      if (pos_ < s_.size() && s_[pos_] == '.') {
        ++pos_;
        parts.push_back(term());
      } else {
        break;
      }
    }
    return MapExpr::compose(std::move(parts));
  }

  MapExpr term() {
    MapExpr e = primary();
    while (accept("^")) {
      skip();
      std::size_t start = pos_;
      if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      e = e.power(int_value(s_.substr(start, pos_ - start)));
    }
    return e;
  }

  MapExpr primary() {
    if (accept("id")) return MapExpr::identity();
    if (accept("rot(")) {
      std::string_view t = token_until(")");
      expect(")");
      if (t.find('/') != std::string_view::npos) {
        try {
          return MapExpr::rotation(RationalRotation::parse(t));
        } catch (const std::invalid_argument& e) {
          fail(e.what());
        }
      }
      return MapExpr::rotation(real_value(t));
    }
    if (accept("twist(")) {
      expect("q");
      expect("=");
      const auto q = int_value(token_until(","));
      expect(",");
      expect("A");
      expect("=");
      const long double A = real_value(token_until(")"));
      expect(")");
      if (q <= 0) fail("twist q must be positive");
      return MapExpr::twist(static_cast<int>(q), A);
    }
    if (accept("mix(")) {
      const long double t = real_value(token_until(")"));
      expect(")");
      return MapExpr::mix(t);
    }
    if (accept("inv(")) {
      MapExpr e = expr();
      expect(")");
      return e.inverse();
    }
    if (accept("(")) {
      MapExpr e = expr();
      expect(")");
      return e;
    }
    fail("expected a map");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

MapExpr MapExpr::parse(std::string_view text) { return Parser(text).parse_all(); }

}  // namespace abc
