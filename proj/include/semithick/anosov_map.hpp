#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "horseshoe_geometry.hpp"
#include "report.hpp"

namespace semithick {

struct MapBudgets {
  double cone_budget = 1.4;  // ||B|| = |delta| < c
  double lipschitz = 5e5;    // L
  double delta_init = 0.05;
};

// [[a1, 0], [delta, a2]] in chart coordinates.
template <class Real>
struct Jacobian2 {
  Real a1{}, a2{}, delta{};

  std::array<Real, 2> apply(const Real& u, const Real& v) const { return {a1 * u, delta * u + a2 * v}; }
  Real det() const { return a1 * a2; }
  Jacobian2 inverse() const { return {1 / a1, 1 / a2, -delta / (a1 * a2)}; }
};

// Largest singular value of [[a, b], [c, d]].
template <class Real>
inline Real op_norm(const Real& a, const Real& b, const Real& c, const Real& d) {
  using std::sqrt;
  Real s = a * a + b * b + c * c + d * d;
  Real det = a * d - b * c;
  Real disc = s * s - 4 * det * det;
  if (disc < 0) disc = 0;
  return sqrt((s + sqrt(disc)) / 2);
}

template <class Real>
inline Real op_norm(const Jacobian2<Real>& j) {
  return op_norm(j.a1, Real(0), j.delta, j.a2);
}

template <class Real>
inline Real op_norm_diff(const Jacobian2<Real>& j, const Jacobian2<Real>& k) {
  return op_norm(j.a1 - k.a1, Real(0), j.delta - k.delta, j.a2 - k.a2);
}

// Vertical correction relative to the linear stripe map: Y' = f_L(Y) + c(X, Y).
template <class Real>
struct FiberJet {
  Real c{}, cx{}, cy{};
};

template <class Real>
struct BasicFrame {
  Interval<Real> x;
  std::vector<Real> xs, top, bottom;

  static Real interp(const std::vector<Real>& xs, const std::vector<Real>& ys, const Real& X) {
    if (X <= xs.front()) return ys.front();
    if (X >= xs.back()) return ys.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), X);
    std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
    Real t = (X - xs[i]) / (xs[i + 1] - xs[i]);
    return ys[i] + t * (ys[i + 1] - ys[i]);
  }
  Real top_at(const Real& X) const { return interp(xs, top, X); }
  Real bottom_at(const Real& X) const { return interp(xs, bottom, X); }
  bool contains(const Real& X, const Real& Y) const {
    return x.contains(X) && Y >= bottom_at(X) && Y <= top_at(X);
  }
  Real max_slope() const {
    using std::abs;
    Real s = 0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      Real dx = xs[i + 1] - xs[i];
      s = std::max(s, abs(top[i + 1] - top[i]) / dx);
      s = std::max(s, abs(bottom[i + 1] - bottom[i]) / dx);
    }
    return s;
  }
};
using Frame = BasicFrame<double>;

template <class Real>
class BasicAnosovMap {
 public:
  using Point = BasicTorusPoint<Real>;
  using Geo = BasicGeometry<Real>;

  BasicAnosovMap() = default;
  BasicAnosovMap(std::shared_ptr<const Geo> geo, MapBudgets budgets) : geo_(std::move(geo)), budgets_(budgets) {
    if (!geo_) throw std::invalid_argument("build_F_init: missing geometry");
    if (!(budgets.lipschitz > 1)) throw std::invalid_argument("build_F_init: L must exceed 1");
    if (!(budgets.cone_budget > 0)) throw std::invalid_argument("build_F_init: cone budget must be positive");
    if (!(budgets.delta_init > 0)) throw std::invalid_argument("build_F_init: delta_init must be positive");
    check_continuity();
    frame_ = build_frame(kFrameSamples);
  }
  explicit BasicAnosovMap(const HorseshoeSpec& spec, MapBudgets budgets = {})
      : BasicAnosovMap(std::make_shared<const Geo>(spec), budgets) {}

  static constexpr int kFrameSamples = 10001;

  const Geo& geometry() const { return *geo_; }
  std::shared_ptr<const Geo> geometry_ptr() const { return geo_; }
  const MapBudgets& budgets() const { return budgets_; }
  const LinearModel& linear() const { return geo_->linear(); }
  const Real& lambda() const { return geo_->lambda(); }
  const BasicFrame<Real>& frame() const { return frame_; }

  FiberJet<Real> correction(const Real& X, const Real& Y) const {
    int i = geo_->rh_index(X, Y);
    if (i < 0) return {};
    return correction_in(i, X, Y);
  }

  FiberJet<Real> correction_in(int i, const Real& X, const Real& Y) const {
    auto [phi, dphi] = geo_->phi_d(X);
    auto [c, cd] = geo_->vertical(i).correction_d(Y);
    Real w = 1 - phi;
    return {w * c, -dphi * c, w * cd};
  }

  // Image in the p0 chart of a chart point lying in RH_i (local form around the stripe's fixed point).
  std::array<Real, 2> local_image(int i, const Real& X, const Real& Y) const {
    auto f = geo_->fixed_chart(i);
    const Real& lam = geo_->lambda();
    Real c = correction_in(i, X, Y).c;
    return {f[0] + (X - f[0]) / lam, f[1] + lam * (Y - f[1]) + c};
  }

  Point apply(const Point& p) const {
    auto xy = geo_->chart_of(p);
    int i = geo_->rh_index(xy[0], xy[1]);
    if (i < 0) return apply_linear(linear(), p);
    auto im = local_image(i, xy[0], xy[1]);
    return geo_->point_of(im[0], im[1]);
  }

  // Solve f_L(Y) + c(X, Y) = target for Y in RQ_i.
  Real solve_fiber(int i, const Real& X, const Real& target) const {
    const Real& lam = geo_->lambda();
    Real yf = geo_->fixed_chart(i)[1];
    Interval<Real> rq = geo_->RQ(i);
    auto fd = [&](const Real& Y) -> std::pair<Real, Real> {
      auto j = correction_in(i, X, Y);
      return {yf + lam * (Y - yf) + j.c, lam + j.cy};
    };
    using std::abs;
    Real tol = (abs(rq.lo) + abs(rq.hi)) * eps_of<Real>() * 8;
    return monotone_solve(fd, rq.lo, rq.hi, target, tol);
  }

  Point apply_inverse(const Point& p) const {
    Point z = apply_linear_inverse(linear(), p);
    auto xy = geo_->chart_of(z);
    int i = geo_->rh_index(xy[0], xy[1]);
    if (i < 0) return z;
    // p lies in F_Lin(RH_i), next to the stripe's fixed point in the p0 chart
    Real Y = solve_fiber(i, xy[0], geo_->chart_of(p)[1]);
    return geo_->point_of(xy[0], Y);
  }

  // Chart y of the preimage on the fiber X when (X, Yz) is the F_Lin preimage: lambda (Y - Yz) + c(X, Y) = 0.
  // F preserves the image of each RQ_i fiber piece, so the solution stays in the RQ_i containing Yz. hint, when
  // set, is a nearby solution used to start Newton.
  Real fiber_preimage(const Real& X, const Real& Yz, const Real* hint = nullptr) const {
    int i = geo_->rh_index(X, Yz);
    if (i < 0) return Yz;
    const Real& lam = geo_->lambda();
    Real yf = geo_->fixed_chart(i)[1];
    Real target = yf + lam * (Yz - yf);
    const auto& rq = geo_->RQ(i);
    if (hint && rq.contains(*hint)) {
      using std::abs;
      Real tol = (abs(rq.lo) + abs(rq.hi)) * eps_of<Real>() * 8;
      Real y = *hint;
      for (int it = 0; it < 8; ++it) {
        auto jet = correction_in(i, X, y);
        Real step = (yf + lam * (y - yf) + jet.c - target) / (lam + jet.cy);
        y -= step;
        if (!rq.contains(y)) break;
        if (abs(step) <= tol) return y;
      }
    }
    return solve_fiber(i, X, target);
  }

  // True when every fiber with abscissa in [X0, X1] carries the same fiber map near height Y: the map is linear
  // there, or the blend weight is 0 (over UK) or 1 (beyond R~) across the whole range.
  bool fiber_uniform(const Real& X0, const Real& X1, const Real& Y) const {
    const auto& g = *geo_;
    if (!g.RQ(0).contains(Y) && !g.RQ(1).contains(Y)) return true;
    const auto& ux = g.UK().x;
    const auto& rx = g.Rt().x;
    if (ux.interior(X0) && ux.interior(X1)) return true;
    return (X0 < rx.lo && X1 < rx.lo) || (X0 > rx.hi && X1 > rx.hi);
  }

  Jacobian2<Real> differential_chart(const Real& X, const Real& Y) const {
    const Real& lam = geo_->lambda();
    int i = geo_->rh_index(X, Y);
    if (i < 0) return {1 / lam, lam, Real(0)};
    auto j = correction_in(i, X, Y);
    return {1 / lam, lam + j.cy, j.cx};
  }

  Jacobian2<Real> differential(const Point& p) const {
    auto xy = geo_->chart_of(p);
    return differential_chart(xy[0], xy[1]);
  }

  // Central differences of the local form on RH_i: {dX'/dX, dX'/dY, dY'/dX, dY'/dY}.
  std::array<Real, 4> numeric_differential_local(int i, const Real& X, const Real& Y, const Real& hx,
                                                 const Real& hy) const {
    auto xp = local_image(i, X + hx, Y), xm = local_image(i, X - hx, Y);
    auto yp = local_image(i, X, Y + hy), ym = local_image(i, X, Y - hy);
    return {(xp[0] - xm[0]) / (2 * hx), (yp[0] - ym[0]) / (2 * hy), (xp[1] - xm[1]) / (2 * hx),
            (yp[1] - ym[1]) / (2 * hy)};
  }

  // Central differences in chart coordinates; steps hx, hy.
  std::array<Real, 4> numeric_differential(const Point& p, const Real& hx, const Real& hy) const {
    const auto& ch = geo_->chart();
    auto img = [&](const Real& dx, const Real& dy) { return apply(ch.point(p, dx, dy)); };
    auto diff = [&](const Point& a, const Point& b) {
      auto d = lift_diff(a, b);
      return ch.to_chart(d[0], d[1]);
    };
    auto xp = img(hx, 0), xm = img(-hx, 0), yp = img(0, hy), ym = img(0, -hy);
    auto dx = diff(xp, xm), dy = diff(yp, ym);
    return {dx[0] / (2 * hx), dy[0] / (2 * hy), dx[1] / (2 * hx), dy[1] / (2 * hy)};
  }

 private:
  void check_continuity() const {
    // both formulas agree on the boundary of RH_0 and RH_1
    const auto& g = *geo_;
    const Real& lam = g.lambda();
    Real worst = 0;
    using std::abs;
    for (int i = 0; i < 2; ++i) {
      auto f = g.fixed_chart(i);
      const auto& R = g.RH(i);
      for (int k = 0; k <= 200; ++k) {
        Real t = Real(k) / 200;
        Real X = R.x.lo + t * R.x.length();
        Real Y = R.y.lo + t * R.y.length();
        for (auto [x, y] : {std::pair{X, R.y.lo}, std::pair{X, R.y.hi}, std::pair{R.x.lo, Y}, std::pair{R.x.hi, Y}}) {
          auto im = local_image(i, x, y);
          Real ly = f[1] + lam * (y - f[1]);
          worst = std::max(worst, abs(im[1] - ly));
        }
      }
    }
    if (worst > Real(1e-9)) {
      std::ostringstream os;
      os << "build_F_init: blend and linear formulas disagree on the RH boundary by " << to_double(worst);
      throw std::logic_error(os.str());
    }
  }

  // W^s(p0) branches through the frame edges, pulled back from the local stable segment.
  BasicFrame<Real> build_frame(int samples) const {
    const auto& g = *geo_;
    BasicFrame<Real> fr;
    fr.x = g.Rt().x;
    fr.xs.resize(samples);
    fr.top.resize(samples);
    fr.bottom.resize(samples);
    const Real& lam = g.lambda();
    for (int side = 0; side < 2; ++side) {
      auto br = side == 0 ? g.frame_top_branch() : g.frame_bottom_branch();
      for (int k = 0; k < samples; ++k) {
        Real X = fr.x.lo + fr.x.length() * Real(k) / Real(samples - 1);
        fr.xs[k] = X;
        Real t = X - br[0];  // stable parameter from p0 along the unrolled line
        int steps = 0;
        using std::abs;
        while (abs(t) >= Real(0.4)) {
          t /= lam;
          ++steps;
        }
        Point z = g.point_of(t, Real(0));
        for (int s = 0; s < steps; ++s) z = apply_inverse(z);
        auto c = g.chart_of(z);
        (side == 0 ? fr.top : fr.bottom)[k] = c[1];
      }
    }
    return fr;
  }

  std::shared_ptr<const Geo> geo_;
  MapBudgets budgets_;
  BasicFrame<Real> frame_;
};
using AnosovMap = BasicAnosovMap<double>;

namespace detail {

inline std::string point_str(double X, double Y) {
  std::ostringstream os;
  os.precision(17);
  os << "chart (" << X << ", " << Y << ")";
  return os.str();
}

// Distance from a chart point to the boundary of a rectangle (negative outside is not distinguished).
inline double rect_boundary_distance(const ChartRect<double>& r, double X, double Y) {
  double dx = std::max({r.x.lo - X, X - r.x.hi, 0.0});
  double dy = std::max({r.y.lo - Y, Y - r.y.hi, 0.0});
  if (dx > 0 || dy > 0) return std::hypot(dx, dy);
  return std::min({X - r.x.lo, r.x.hi - X, Y - r.y.lo, r.y.hi - Y});
}

}  // namespace detail

// The seven items of the F_init proposition on a grid of `grid` x `grid/2` points per RH stripe.
inline Report verify_finit(const AnosovMap& F, int grid = 1000) {
  const auto& g = F.geometry();
  const double lam = F.lambda();
  Report rep;
  rep.title = "F_init";
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> U(0, 1);

  // (1) agreement with F_Bow on UH_0 and UH_1
  {
    double worst = 0;
    std::string where;
    for (int k = 0; k < 20000; ++k) {
      int i = k % 2;
      double X = g.UK().x.lo + U(rng) * g.UK().x.length();
      double Y = g.Qi(i).lo + U(rng) * g.Qi(i).length();
      auto f = g.fixed_chart(i);
      TorusPoint p = g.point_of(X, Y);
      auto c = g.chart_of(p);
      if (!g.UH(i).contains(c[0], c[1])) continue;
      TorusPoint bow = g.point_of(f[0] + (c[0] - f[0]) / lam, g.vertical(i).bowen().eval(c[1]));
      double d = torus_distance(F.apply(p), bow);
      if (d > worst) {
        worst = d;
        where = detail::point_str(X, Y);
      }
    }
    rep.add("1 F_init = F_Bow on UH_i", worst <= 1e-12, worst, 1e-12, where);
  }
  // (2) agreement with F_Lin outside R~
  {
    long bad = 0, n = 0;
    std::string where;
    const int G = 500;
    for (int a = 0; a < G; ++a) {
      for (int b = 0; b < G; ++b) {
        TorusPoint p{(a + U(rng)) / G, (b + U(rng)) / G};
        auto c = g.chart_of(p);
        if (g.Rt().contains(c[0], c[1])) continue;
        ++n;
        TorusPoint x = F.apply(p), y = apply_linear(F.linear(), p);
        if (x.u != y.u || x.v != y.v) {
          if (bad++ == 0) where = detail::point_str(c[0], c[1]);
        }
      }
    }
    // the band just outside R~ where the formulas meet
    for (int k = 0; k < 20000; ++k) {
      double X = g.Rt().x.lo - 1e-6 * U(rng), Y = g.RQ(k % 2).lo + U(rng) * g.RQ(k % 2).length();
      if (k % 4 >= 2) X = g.Rt().x.hi + 1e-6 * U(rng);
      ++n;
      auto p = g.point_of(X, Y);
      TorusPoint x = F.apply(p), y = apply_linear(F.linear(), p);
      if (x.u != y.u || x.v != y.v) {
        if (bad++ == 0) where = detail::point_str(X, Y);
      }
    }
    rep.add("2 F_init = F_Lin outside R~", bad == 0, double(bad), 0, where.empty() ? std::to_string(n) + " points" : where);
  }
  // (3) F_init(UH_i) = UV_i on boundary samples, both directions
  {
    double worst = 0;
    std::string where;
    const int S = 2000;
    for (int i = 0; i < 2; ++i) {
      const auto& H = g.UH(i);
      const auto& V = g.UV(i);
      for (int k = 0; k <= S; ++k) {
        double t = double(k) / S;
        double xs[4] = {H.x.lo + t * H.x.length(), H.x.lo + t * H.x.length(), H.x.lo, H.x.hi};
        double ys[4] = {H.y.lo, H.y.hi, H.y.lo + t * H.y.length(), H.y.lo + t * H.y.length()};
        for (int e = 0; e < 4; ++e) {
          auto im = g.chart_of(F.apply(g.point_of(xs[e], ys[e])));
          double d = std::abs(detail::rect_boundary_distance(V, im[0], im[1]));
          if (d > worst) {
            worst = d;
            where = detail::point_str(xs[e], ys[e]);
          }
        }
        double vx[4] = {V.x.lo + t * V.x.length(), V.x.lo + t * V.x.length(), V.x.lo, V.x.hi};
        double vy[4] = {V.y.lo, V.y.hi, V.y.lo + t * V.y.length(), V.y.lo + t * V.y.length()};
        for (int e = 0; e < 4; ++e) {
          auto pre = g.chart_of(F.apply_inverse(g.point_of(vx[e], vy[e])));
          double d = std::abs(detail::rect_boundary_distance(H, pre[0], pre[1]));
          if (d > worst) {
            worst = d;
            where = detail::point_str(vx[e], vy[e]);
          }
        }
      }
    }
    rep.add("3 F_init(UH_i) = UV_i", worst < 1e-9, worst, 1e-9, where);
  }
  // (4) F_init(UK) cap UK = UV_0 cup UV_1
  {
    auto comps = linear_image_components(F.linear(), g.UK().x, g.UK().y);
    double mism = 0;
    for (auto& c : comps) {
      double d0 = std::max({std::abs(c.x.lo - g.UV(0).x.lo), std::abs(c.x.hi - g.UV(0).x.hi),
                            std::abs(c.y.lo - g.UV(0).y.lo), std::abs(c.y.hi - g.UV(0).y.hi)});
      double d1 = std::max({std::abs(c.x.lo - g.UV(1).x.lo), std::abs(c.x.hi - g.UV(1).x.hi),
                            std::abs(c.y.lo - g.UV(1).y.lo), std::abs(c.y.hi - g.UV(1).y.hi)});
      mism = std::max(mism, std::min(d0, d1));
    }
    // F_init and F_Lin permute fibers identically and agree on the horizontal edges of UK, so F_init(UK) = F_Lin(UK)
    double edge = 0;
    for (int k = 0; k <= 4000; ++k) {
      double X = g.UK().x.lo + g.UK().x.length() * k / 4000.0;
      for (double Y : {g.UK().y.lo, g.UK().y.hi}) {
        auto p = g.point_of(X, Y);
        edge = std::max(edge, torus_distance(F.apply(p), apply_linear(F.linear(), p)));
      }
    }
    bool ok = comps.size() == 2 && mism < 1e-12 && edge < 1e-12;
    std::ostringstream os;
    os << comps.size() << " components, rect mismatch " << mism << ", edge mismatch " << edge;
    rep.add("4 F_init(UK) cap UK = UV_0 cup UV_1", ok, double(comps.size()), 2, os.str());
  }
  // (5)-(7) on the RH grid
  {
    const int nx = grid, ny = std::max(2, grid / 2);
    double fiber = 0, min_a2 = 1e300, min_a2_core = 1e300, cone = 1e300, max_delta = 0;
    std::string w5, w6, w7;
    for (int i = 0; i < 2; ++i) {
      const auto& R = g.RH(i);
      for (int a = 0; a < nx; ++a) {
        double X = R.x.lo + R.x.length() * a / (nx - 1);
        double x_ref = 0;
        for (int b = 0; b < ny; ++b) {
          double Y = R.y.lo + R.y.length() * b / (ny - 1);
          auto J = F.differential_chart(X, Y);
          if (J.a2 < min_a2) {
            min_a2 = J.a2;
            w6 = detail::point_str(X, Y);
          }
          if (g.UH(i).contains(X, Y)) min_a2_core = std::min(min_a2_core, J.a2);
          max_delta = std::max(max_delta, std::abs(J.delta));
          // boundary rays (1, +-1) must land strictly outside C_H
          double m = std::min(std::abs(J.delta + J.a2), std::abs(J.delta - J.a2)) / J.a1 - 1;
          if (m < cone) {
            cone = m;
            w7 = detail::point_str(X, Y);
          }
          if (b % 25 == 0) {
            double xi = g.chart_of(F.apply(g.point_of(X, Y)))[0];
            if (b == 0) x_ref = xi;
            if (std::abs(xi - x_ref) > fiber) {
              fiber = std::abs(xi - x_ref);
              w5 = detail::point_str(X, Y);
            }
          }
        }
      }
    }
    rep.add("5 vertical fibers preserved", fiber <= 1e-12, fiber, 1e-12, w5);
    std::ostringstream os;
    os << "min inside UH_i " << min_a2_core << ", outside stripes " << lam << ", at " << w6;
    rep.add("6 vertical dilation >= 1.2", min_a2 >= 1.2 && lam >= 1.2, min_a2, 1.2, os.str());
    rep.add("7 strict cone margin", cone > 0, cone, 0, w7);
    rep.add("cone budget |delta| < c", max_delta < F.budgets().cone_budget, max_delta, F.budgets().cone_budget);
  }
  return rep;
}

// Class predicates and closeness to F_init for a map G exposing apply / apply_inverse / differential.
template <class Map>
inline Report check_delta_init(const AnosovMap& F, const Map& G, double delta_init, int grid = 400,
                               const std::vector<TorusPoint>& extra = {}) {
  const auto& g = F.geometry();
  const auto& B = F.budgets();
  Report rep;
  rep.title = "class predicates";
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> U(0, 1);

  std::vector<TorusPoint> pts = extra;
  for (int i = 0; i < 2; ++i) {
    const auto& R = g.RH(i);
    for (int a = 0; a < grid; ++a)
      for (int b = 0; b < grid / 2; ++b)
        pts.push_back(g.point_of(R.x.lo + R.x.length() * (a + 0.5) / grid, R.y.lo + R.y.length() * (b + 0.5) / (grid / 2)));
  }
  const auto& fr = F.frame();
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid / 4; ++b) {
      double X = fr.x.lo + fr.x.length() * (a + 0.5) / grid;
      double lo = fr.bottom_at(X), hi = fr.top_at(X);
      pts.push_back(g.point_of(X, lo + (hi - lo) * (b + 0.5) / (grid / 4)));
    }

  double max_norm = 0, max_inv = 0, min_cone = 1e300, max_close = 0, min_a2 = 1e300, max_a2 = 0;
  std::string wc, wd;
  for (auto& p : pts) {
    auto J = G.differential(p);
    auto J0 = F.differential(p);
    max_norm = std::max(max_norm, op_norm(J));
    max_inv = std::max(max_inv, op_norm(J.inverse()));
    double cm = J.a2 - std::abs(J.delta) - J.a1;
    if (cm < min_cone) {
      min_cone = cm;
      auto c = g.chart_of(p);
      wc = detail::point_str(c[0], c[1]);
    }
    double d = op_norm_diff(J, J0);
    if (d > max_close) {
      max_close = d;
      auto c = g.chart_of(p);
      wd = detail::point_str(c[0], c[1]);
    }
    min_a2 = std::min(min_a2, J.a2);
    max_a2 = std::max(max_a2, J.a2);
  }
  rep.add("||dG|| < L", max_norm < B.lipschitz, max_norm, B.lipschitz);
  rep.add("||dG^-1|| < L", max_inv < B.lipschitz, max_inv, B.lipschitz);
  rep.add("dG(C_H) contains C_H", min_cone > 0, min_cone, 0, wc);
  rep.add("||dG - dF_init|| <= delta_init", max_close <= delta_init, max_close, delta_init, wd);
  rep.add("vertical dilation in [1.1, L]", min_a2 >= 1.1 && max_a2 <= B.lipschitz, min_a2, 1.1);

  // G = F_init on sampled points of S (cylinder endpoints of the thick Cantor set)
  {
    const auto& c = g.cantor();
    double worst = 0;
    for (int k = 0; k < 4000; ++k) {
      std::vector<int> w(c.depth());
      for (auto& b : w) b = int(rng() & 1);
      auto iv = c.cylinder(w);
      double Y = (k & 1) ? iv.hi : iv.lo;
      double X = g.UK().x.lo + U(rng) * g.UK().x.length();
      auto p = g.point_of(X, Y);
      worst = std::max(worst, torus_distance(G.apply(p), F.apply(p)));
    }
    rep.add("G = F_init on S", worst <= 1e-12, worst, 1e-12);
  }
  // fibers: G(p) - F_Lin(p) is vertical, F_Lin being fiber preserving
  {
    double worst = 0;
    const auto& ch = g.chart();
    for (auto& p : pts) {
      auto d = lift_diff(G.apply(p), apply_linear(F.linear(), p));
      worst = std::max(worst, std::abs(ch.to_chart(d[0], d[1])[0]));
    }
    rep.add("vertical fibers preserved", worst <= 1e-12, worst, 1e-12);
  }
  // G = F_Lin outside the frame
  {
    long bad = 0, n = 0;
    for (int k = 0; k < 100000; ++k) {
      TorusPoint p{U(rng), U(rng)};
      auto c = g.chart_of(p);
      if (fr.contains(c[0], c[1])) continue;
      ++n;
      auto a = G.apply(p), b = apply_linear(F.linear(), p);
      if (a.u != b.u || a.v != b.v) ++bad;
    }
    rep.add("G = F_Lin outside R", bad == 0, double(bad), 0, std::to_string(n) + " points");
  }
  // G(UK) cap UK: G agrees with F_Lin on the horizontal edges of UK and permutes fibers like it
  {
    double worst = 0;
    for (int k = 0; k <= 2000; ++k) {
      double X = g.UK().x.lo + g.UK().x.length() * k / 2000.0;
      for (double Y : {g.UK().y.lo, g.UK().y.hi}) {
        auto p = g.point_of(X, Y);
        worst = std::max(worst, torus_distance(G.apply(p), apply_linear(F.linear(), p)));
      }
    }
    rep.add("G(UK) cap UK = UV_0 cup UV_1", worst <= 1e-12, worst, 1e-12);
  }
  return rep;
}

// Geometric invariants of the horseshoe layout and the frame.
inline Report verify_geometry(const AnosovMap& F) {
  const auto& g = F.geometry();
  const auto& P = g.spec().params;
  const auto& m = F.linear();
  const Chart ch = Chart::make();
  Report rep;
  rep.title = "geometry";
  double fix = std::max({torus_distance(apply_linear(m, g.p0()), g.p0()), torus_distance(apply_linear(m, g.p1()), g.p1()),
                         torus_distance(apply_linear(m, g.q()), g.q())});
  rep.add("p0, p1, q fixed by F_Lin", fix <= 1e-12, fix, 1e-12);
  double edge = std::max(g.x1(), g.y1());
  rep.add("K edges < 0.01", edge < P.max_edge, edge, P.max_edge);
  auto fps = fixed_points(m);
  int inside = 0;
  for (auto& r : fps) {
    if (r == g.spec().p0 || r == g.spec().p1) continue;
    auto l = ch.local(r.point(), g.p0());
    if (g.K().contains(l[0], l[1])) ++inside;
  }
  rep.add("no fixed point inside K", inside == 0, inside, 0);
  auto comps = linear_image_components(m, g.K().x, g.K().y);
  bool stripes = comps.size() == 2;
  for (auto& c : comps) stripes = stripes && c.full_height && c.touches_edge;
  rep.add("F_Lin(K) cap K = two vertical stripes", stripes, double(comps.size()), 2);
  double qd = rect_distance(ch, g.K(), g.q());
  rep.add("dist(q, K) >= 0.3", qd >= P.min_q_distance, qd, P.min_q_distance);
  double ratio = g.UK().x.length() / g.K().x.length();
  rep.add("|UK| / |K| <= 1.01", ratio <= P.uk_ratio && g.UK().x.lo < 0 && g.UK().x.hi > g.x1(), ratio, P.uk_ratio);
  // UK edges on W^u(q): recompute the branch abscissae independently in double
  double on = 0;
  const auto& s = g.spec();
  for (auto e : {s.edge_left, s.edge_right}) {
    double du = double(s.q.nu - s.p0.nu) / s.p0.den + double(e[0]);
    double dv = double(s.q.nv - s.p0.nv) / s.p0.den + double(e[1]);
    double x = (du - ch.phi * dv) / ch.norm;
    double target = (e == s.edge_left) ? g.UK().x.lo : g.UK().x.hi;
    on = std::max(on, std::abs(x - target));
  }
  rep.add("UK vertical edges on W^u(q)", on <= 1e-10, on, 1e-10);
  double kb = g.h() / 2;
  rep.add("kappa below h/2", g.kappa() < kb, g.kappa(), kb);
  double img = g.lambda() * g.RQ(0).length();
  rep.add("|F_Lin(RH_i)| < 2 |K| vertically", img < 2 * g.y1(), img, 2 * g.y1());
  double a1 = g.Q().length() - g.Qi(0).length() - g.Qi(1).length();
  rep.add("a_1 = |Q| - |Q_0| - |Q_1|", std::abs(a1 - g.a1()) <= 1e-15 && a1 > 0, g.a1(), a1);
  double mg = std::max({std::abs(g.UK().x.lo - g.Rt().x.lo - P.margin), std::abs(g.Rt().x.hi - g.UK().x.hi - P.margin),
                        std::abs(g.UK().y.lo - g.Rt().y.lo - P.margin), std::abs(g.Rt().y.hi - g.UK().y.hi - P.margin)});
  rep.add("R~ margins 0.01", mg <= 1e-15, mg, 1e-15);
  const auto& fr = F.frame();
  double mid = g.Rt().x.mid();
  double vw = std::max(std::abs(fr.top_at(mid) - (g.Rt().y.hi + P.frame_offset)),
                       std::abs(fr.bottom_at(mid) - (g.Rt().y.lo - P.frame_offset)));
  rep.add("frame anchors within 0.001 of w", vw < P.frame_tol, vw, P.frame_tol);
  bool contains = true;
  for (std::size_t k = 0; k < fr.xs.size(); ++k) contains = contains && fr.bottom[k] < g.Rt().y.lo && fr.top[k] > g.Rt().y.hi;
  auto qc = g.chart_of(g.q());
  rep.add("frame contains R~, q outside", contains && !fr.contains(qc[0], qc[1]), double(contains));
  double slope = fr.max_slope();
  rep.add("frame edge slopes < 1", slope < 1, slope, 1);
  return rep;
}

}  // namespace semithick
