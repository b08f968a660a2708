#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "numeric.hpp"

namespace semithick {

template <class Real>
struct BasicTorusPoint {
  Real u{};
  Real v{};
};
using TorusPoint = BasicTorusPoint<double>;

// Exact rational point (nu/den, nv/den) of the unit torus, 0 <= nu, nv < den.
struct RationalPoint {
  Int nu = 0;
  Int nv = 0;
  Int den = 1;

  template <class Real = double>
  BasicTorusPoint<Real> point() const {
    return {Real(nu) / Real(den), Real(nv) / Real(den)};
  }
  bool operator==(const RationalPoint&) const = default;
};

template <class Real>
inline BasicTorusPoint<Real> wrap(const Real& u, const Real& v) {
  return {frac01(u), frac01(v)};
}

// Minimal lift of p - a into [-1/2, 1/2)^2.
template <class Real>
inline std::array<Real, 2> lift_diff(const BasicTorusPoint<Real>& p, const BasicTorusPoint<Real>& a) {
  return {centered(Real(p.u - a.u)), centered(Real(p.v - a.v))};
}

template <class Real>
inline Real torus_distance(const BasicTorusPoint<Real>& p, const BasicTorusPoint<Real>& q) {
  using std::hypot;
  auto d = lift_diff(p, q);
  return hypot(d[0], d[1]);
}

// Orthonormal eigen-chart of [[2,1],[1,1]]: x along e_s = (1,-phi)/c, y along e_u = (phi,1)/c.
template <class Real>
struct BasicChart {
  Real phi;
  Real norm;

  static BasicChart make() {
    using std::sqrt;
    Real p = (1 + sqrt(Real(5))) / 2;
    return {p, sqrt(1 + p * p)};
  }

  std::array<Real, 2> e_u() const { return {phi / norm, 1 / norm}; }
  std::array<Real, 2> e_s() const { return {1 / norm, -phi / norm}; }

  // standard offset (du, dv) -> chart (x, y)
  std::array<Real, 2> to_chart(const Real& du, const Real& dv) const {
    return {(du - phi * dv) / norm, (phi * du + dv) / norm};
  }
  std::array<Real, 2> from_chart(const Real& x, const Real& y) const {
    return {(x + phi * y) / norm, (y - phi * x) / norm};
  }

  std::array<Real, 2> local(const BasicTorusPoint<Real>& p, const BasicTorusPoint<Real>& anchor) const {
    auto d = lift_diff(p, anchor);
    return to_chart(d[0], d[1]);
  }
  BasicTorusPoint<Real> point(const BasicTorusPoint<Real>& anchor, const Real& x, const Real& y) const {
    auto d = from_chart(x, y);
    return wrap(Real(anchor.u + d[0]), Real(anchor.v + d[1]));
  }
};
using Chart = BasicChart<double>;

constexpr int kMaxNInit = 45;

struct LinearModel {
  int n_init = 1;
  Int a = 2, b = 1, c = 1, d = 1;  // M_pow = [[a, b], [c, d]]
  double lambda_u = 0;
  double lambda_s = 0;
  std::array<double, 2> e_u{};
  std::array<double, 2> e_s{};

  Int trace() const { return a + d; }
  Int det() const { return a * d - b * c; }
  // |det(M_pow - I)| = trace - 2
  Int fixed_point_count() const { return trace() - 2; }

  template <class Real = double>
  Real lambda() const {
    using std::sqrt;
    Real t = Real(trace());
    return (t + sqrt(t * t - 4)) / 2;
  }
};

inline LinearModel make_linear_model(int n_init) {
  if (n_init < 1) throw std::invalid_argument("make_linear_model: N_init must be >= 1");
  if (n_init > kMaxNInit) {
    std::ostringstream os;
    os << "make_linear_model: integer overflow for N_init = " << n_init
       << "; maximal supported N_init is " << kMaxNInit;
    throw std::overflow_error(os.str());
  }
  LinearModel m;
  m.n_init = n_init;
  Int a = 1, b = 0, c = 0, d = 1;
  for (int i = 0; i < n_init; ++i) {
    Int na = 2 * a + c, nb = 2 * b + d, nc = a + c, nd = b + d;
    a = na;
    b = nb;
    c = nc;
    d = nd;
  }
  m.a = a;
  m.b = b;
  m.c = c;
  m.d = d;
  m.lambda_u = m.lambda<double>();
  m.lambda_s = 1.0 / m.lambda_u;
  Chart ch = Chart::make();
  m.e_u = ch.e_u();
  m.e_s = ch.e_s();
  return m;
}

template <class Real>
inline BasicTorusPoint<Real> apply_linear(const LinearModel& m, const BasicTorusPoint<Real>& p) {
  return {frac_dot(m.a, p.u, m.b, p.v), frac_dot(m.c, p.u, m.d, p.v)};
}

template <class Real>
inline BasicTorusPoint<Real> apply_linear_inverse(const LinearModel& m, const BasicTorusPoint<Real>& p) {
  // det = 1: inverse is [[d, -b], [-c, a]]
  return {frac_dot(m.d, p.u, -m.b, p.v), frac_dot(-m.c, p.u, m.a, p.v)};
}

inline std::vector<RationalPoint> fixed_points(const LinearModel& m) {
  // A = M - I, column HNF [[h11, 0], [h21, h22]], cosets k = (i, j) of Z^2 / A Z^2.
  const Int a11 = m.a - 1, a12 = m.b, a21 = m.c, a22 = m.d - 1;
  const Int det = a11 * a22 - a12 * a21;
  const Int den = det < 0 ? -det : det;
  Int s = 0, t = 0;
  Int h11 = ext_gcd(a11, a12, s, t);
  if (h11 == 0) throw std::logic_error("fixed_points: degenerate M - I");
  Int h22 = den / h11;
  std::vector<RationalPoint> out;
  out.reserve(static_cast<std::size_t>(den));
  for (Int i = 0; i < h11; ++i) {
    for (Int j = 0; j < h22; ++j) {
      // p = adj(A) k / det
      __int128 pu = static_cast<__int128>(a22) * i - static_cast<__int128>(a12) * j;
      __int128 pv = -static_cast<__int128>(a21) * i + static_cast<__int128>(a11) * j;
      if (det < 0) {
        pu = -pu;
        pv = -pv;
      }
      Int nu = static_cast<Int>(pu % den);
      Int nv = static_cast<Int>(pv % den);
      if (nu < 0) nu += den;
      if (nv < 0) nv += den;
      out.push_back({nu, nv, den});
    }
  }
  return out;
}

// Distance to the fixed-point lattice A^{-1} Z^2 via a Gauss-reduced basis.
class FixedPointLattice {
 public:
  explicit FixedPointLattice(const LinearModel& m) {
    const double a11 = double(m.a - 1), a12 = double(m.b), a21 = double(m.c), a22 = double(m.d - 1);
    const double det = a11 * a22 - a12 * a21;
    b1_ = {a22 / det, -a21 / det};
    b2_ = {-a12 / det, a11 / det};
    reduce();
  }

  double distance(double u, double v) const {
    double det = b1_[0] * b2_[1] - b1_[1] * b2_[0];
    double c1 = (u * b2_[1] - v * b2_[0]) / det;
    double c2 = (b1_[0] * v - b1_[1] * u) / det;
    double r1 = std::round(c1), r2 = std::round(c2);
    double best = std::numeric_limits<double>::infinity();
    for (int i = -2; i <= 2; ++i) {
      for (int j = -2; j <= 2; ++j) {
        double k1 = r1 + i, k2 = r2 + j;
        double du = u - k1 * b1_[0] - k2 * b2_[0];
        double dv = v - k1 * b1_[1] - k2 * b2_[1];
        best = std::min(best, std::hypot(du, dv));
      }
    }
    return best;
  }

 private:
  void reduce() {
    auto dot = [](const std::array<double, 2>& x, const std::array<double, 2>& y) {
      return x[0] * y[0] + x[1] * y[1];
    };
    for (int it = 0; it < 200; ++it) {
      if (dot(b1_, b1_) > dot(b2_, b2_)) std::swap(b1_, b2_);
      double mu = std::round(dot(b1_, b2_) / dot(b1_, b1_));
      if (mu == 0) break;
      b2_ = {b2_[0] - mu * b1_[0], b2_[1] - mu * b1_[1]};
    }
  }
  std::array<double, 2> b1_{}, b2_{};
};

inline double epsilon_net_radius(const LinearModel& m, int grid = 1024) {
  FixedPointLattice lat(m);
  double r = 0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      r = std::max(r, lat.distance(double(i) / grid, double(j) / grid));
    }
  }
  return r;
}

enum class Direction { stable, unstable };

struct DenseLineHit {
  TorusPoint point;
  double param = 0;  // signed arclength from base along the direction
  Int winding = 0;
  Int n_u = 0;       // lattice translate: target + n lies next to the lifted line
  Int n_v = 0;
  double distance = 0;
};

class DenseLineError : public std::runtime_error {
 public:
  DenseLineError(const std::string& msg, double best) : std::runtime_error(msg), best_distance(best) {}
  double best_distance;
};

inline DenseLineHit dense_line_near_point(const LinearModel&, const TorusPoint& base, Direction dir,
                                          const TorusPoint& target, double tol, Int cap = 1000000) {
  if (!(tol > 0)) throw std::invalid_argument("dense_line_near_point: tol must be positive");
  const Chart ch = Chart::make();
  const double phi = ch.phi, c = ch.norm;
  auto dl = lift_diff(target, base);
  double best = std::numeric_limits<double>::infinity();
  for (Int step = 0; step < 2 * cap + 1; ++step) {
    Int k = (step + 1) / 2;
    if (step % 2 == 0) k = -k;
    DenseLineHit h;
    h.winding = k;
    double r = 0;
    if (dir == Direction::unstable) {
      h.n_v = k;
      double s = dl[1] + double(k);
      h.n_u = static_cast<Int>(std::llround(phi * s - dl[0]));
      r = (dl[0] + double(h.n_u)) - phi * s;
      h.param = ((dl[0] + double(h.n_u)) * phi + s) / c;
      auto es = ch.e_s();
      h.point = wrap(target.u - (r / c) * es[0], target.v - (r / c) * es[1]);
    } else {
      h.n_u = k;
      double s = dl[0] + double(k);
      h.n_v = static_cast<Int>(std::llround(-phi * s - dl[1]));
      r = (dl[1] + double(h.n_v)) + phi * s;
      h.param = (s - phi * (dl[1] + double(h.n_v))) / c;
      auto eu = ch.e_u();
      h.point = wrap(target.u - (r / c) * eu[0], target.v - (r / c) * eu[1]);
    }
    h.distance = std::abs(r) / c;
    if (h.distance < tol) return h;
    best = std::min(best, h.distance);
  }
  std::ostringstream os;
  os << "dense_line_near_point: cap of " << cap << " windings reached, best distance " << best;
  throw DenseLineError(os.str(), best);
}

}  // namespace semithick
