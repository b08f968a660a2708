#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace semithick {

using Int = std::int64_t;

// 50 decimal digits; deep stripe levels shrink like lambda^-m.
using Wide = boost::multiprecision::cpp_bin_float_50;

template <class Real>
inline double to_double(const Real& x) {
  return static_cast<double>(x);
}

template <class Real>
inline Real eps_of() {
  return std::numeric_limits<Real>::epsilon();
}

template <class Real>
inline Real pi_of() {
  if constexpr (std::is_same_v<Real, double>) {
    return 3.14159265358979323846;
  } else {
    return boost::math::constants::pi<Real>();
  }
}

template <class Real>
struct Interval {
  Real lo{};
  Real hi{};

  Real length() const { return hi - lo; }
  Real mid() const { return (lo + hi) / 2; }
  bool contains(const Real& x) const { return lo <= x && x <= hi; }
  bool interior(const Real& x) const { return lo < x && x < hi; }
  Interval widened(const Real& m) const { return {lo - m, hi + m}; }

  template <class Other>
  Interval<Other> as() const {
    return {Other(lo), Other(hi)};
  }
};

template <class Real>
inline Real frac01(const Real& x) {
  using std::floor;
  Real r = x - floor(x);
  if (r >= 1) r -= 1;
  if (r < 0) r += 1;
  return r;
}

// Nearest-integer remainder in [-1/2, 1/2).
template <class Real>
inline Real centered(const Real& x) {
  using std::floor;
  return x - floor(x + Real(0.5));
}

inline Int floor_div(Int a, Int b) {
  Int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline Int mod_pos(Int a, Int b) {
  Int r = a % b;
  return r < 0 ? r + b : r;
}

// Extended gcd: returns g >= 0 with s*a + t*b = g.
inline Int ext_gcd(Int a, Int b, Int& s, Int& t) {
  Int s0 = 1, s1 = 0, t0 = 0, t1 = 1;
  while (b != 0) {
    Int q = floor_div(a, b);
    Int r = a - q * b;
    a = b;
    b = r;
    Int s2 = s0 - q * s1;
    s0 = s1;
    s1 = s2;
    Int t2 = t0 - q * t1;
    t0 = t1;
    t1 = t2;
  }
  if (a < 0) {
    a = -a;
    s0 = -s0;
    t0 = -t0;
  }
  s = s0;
  t = t0;
  return a;
}

// Error-free product and sum (double only).
inline std::pair<double, double> two_prod(double a, double b) {
  double p = a * b;
  return {p, std::fma(a, b, -p)};
}

inline std::pair<double, double> two_sum(double a, double b) {
  double s = a + b;
  double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

// Fractional part of a*u + b*v for integer a, b, compensated.
inline double frac_dot(Int a, double u, Int b, double v) {
  auto [p1, e1] = two_prod(static_cast<double>(a), u);
  auto [p2, e2] = two_prod(static_cast<double>(b), v);
  auto [s, e3] = two_sum(p1, p2);
  double n = std::floor(s);
  double r = (s - n) + (e1 + e2 + e3);
  return frac01(r);
}

template <class Real>
inline Real frac_dot(Int a, const Real& u, Int b, const Real& v) {
  return frac01(Real(a) * u + Real(b) * v);
}

inline double smoothstep3(double u) { return u * u * (3 - 2 * u); }

template <class Real>
inline Real smoothstep3(const Real& u) {
  return u * u * (3 - 2 * u);
}

template <class Real>
inline Real smoothstep3_d(const Real& u) {
  return 6 * u * (1 - u);
}

template <class Real>
inline Real smoothstep5(const Real& u) {
  return u * u * u * (u * (u * 6 - 15) + 10);
}

template <class Real>
inline Real smoothstep5_d(const Real& u) {
  return 30 * u * u * (1 - u) * (1 - u);
}

// Safeguarded Newton on a monotone increasing f over [lo, hi] bracketing target.
// fd(y) returns {f(y), f'(y)}.
template <class Real, class FD>
Real monotone_solve(FD&& fd, Real lo, Real hi, const Real& target, const Real& tol,
                    int max_iter = 400) {
  auto [flo, dlo] = fd(lo);
  auto [fhi, dhi] = fd(hi);
  (void)dlo;
  (void)dhi;
  if (target < flo || target > fhi) {
    if (target < flo && flo - target <= tol) return lo;
    if (target > fhi && target - fhi <= tol) return hi;
    throw std::runtime_error("monotone_solve: target not bracketed");
  }
  Real y = lo + (hi - lo) * ((target - flo) / (fhi - flo));
  for (int it = 0; it < max_iter; ++it) {
    auto [fy, dy] = fd(y);
    Real r = fy - target;
    if (r == 0) return y;
    if (r < 0)
      lo = y;
    else
      hi = y;
    Real next = y;
    bool newton_ok = false;
    if (dy > 0) {
      next = y - r / dy;
      newton_ok = next > lo && next < hi;
    }
    if (!newton_ok) next = (lo + hi) / 2;
    using std::abs;
    if (abs(next - y) <= tol || hi - lo <= tol) return next;
    y = next;
  }
  return y;
}

}  // namespace semithick
