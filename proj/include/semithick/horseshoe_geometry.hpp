#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bowen_cantor.hpp"
#include "torus_linear.hpp"

namespace semithick {

using Lattice = std::array<Int, 2>;

template <class Real>
struct ChartRect {
  BasicTorusPoint<Real> anchor{};
  Interval<Real> x{};
  Interval<Real> y{};

  bool contains(const Real& X, const Real& Y) const { return x.contains(X) && y.contains(Y); }
  Real diameter() const {
    using std::hypot;
    return hypot(x.length(), y.length());
  }
};

// Tunable construction parameters; everything else is derived.
struct HorseshoeParams {
  int n_init = 10;
  double kappa_fraction = 0.1;  // kappa = fraction * (admissible bound h/2)
  double theta = 0.5;           // a_i = c/i^2 for i >= 2 with sum_{i>=2} a_i = theta * (|Q| - a_1)
  std::optional<double> a1_override;
  std::optional<double> coeff_override;
  int depth = 12;
  double cantor_resolution = -1;  // see BasicCantorSet; <= 0 resolves to a few ulps
  double max_edge = 0.01;
  double min_q_distance = 0.3;
  double uk_ratio = 1.01;
  double margin = 0.01;        // R~ = UK widened by this much on each side
  double frame_offset = 0.03;  // w above/below R~
  double frame_tol = 0.001;
};

// Exact construction data: rationals over the common fixed-point denominator plus lattice offsets.
struct HorseshoeSpec {
  HorseshoeParams params;
  RationalPoint p0, p1, q;
  Lattice v{};           // numerators of the lift of p1 - p0 (over p0.den)
  Lattice edge_left{};   // W^u(q) branch q + edge_left is the left edge of UK
  Lattice edge_right{};
  Lattice frame_top{};     // W^s(p0) branch p0 + frame_top carries the top edge of R
  Lattice frame_bottom{};
};

// Integer vectors n with chart(n) in the box (chart offsets of integer translations).
inline std::vector<Lattice> lattice_in_box(double x0, double x1, double y0, double y1) {
  const Chart ch = Chart::make();
  const double phi = ch.phi, c = ch.norm;
  double vmin = 1e300, vmax = -1e300;
  for (double x : {x0, x1}) {
    for (double y : {y0, y1}) {
      double nv = (y - phi * x) / c;
      vmin = std::min(vmin, nv);
      vmax = std::max(vmax, nv);
    }
  }
  std::vector<Lattice> out;
  for (Int nv = Int(std::floor(vmin)) - 1; nv <= Int(std::ceil(vmax)) + 1; ++nv) {
    double ulo = std::max(c * x0 + phi * nv, (c * y0 - nv) / phi);
    double uhi = std::min(c * x1 + phi * nv, (c * y1 - nv) / phi);
    for (Int nu = Int(std::floor(ulo)) - 1; nu <= Int(std::ceil(uhi)) + 1; ++nu) {
      auto p = ch.to_chart(double(nu), double(nv));
      if (p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1) out.push_back({nu, nv});
    }
  }
  return out;
}

// A component of F_Lin(box) cap (box + lattice), in the box's chart.
struct StripeComponent {
  Lattice n{};
  Interval<double> x, y;
  bool full_height = false;   // spans the box vertically
  bool touches_edge = false;  // adjoins a vertical edge of the box
};

// F_Lin(B) cap B on the torus for a chart box B = [0,w] x [0,hgt] whose corners p0 (origin) and p0 + v are fixed.
// F_Lin(B) lifts to [X0/lambda, X1/lambda] x [lambda Y0, lambda Y1] through p0.
inline std::vector<StripeComponent> linear_image_components(const LinearModel& m, Interval<double> bx, Interval<double> by) {
  const double lam = m.lambda_u;
  Interval<double> ix{bx.lo / lam, bx.hi / lam}, iy{by.lo * lam, by.hi * lam};
  // translates B + n meeting the image: chart(n) in [ix.lo - bx.hi, ix.hi - bx.lo] x [iy.lo - by.hi, iy.hi - by.lo]
  auto ns = lattice_in_box(ix.lo - bx.hi, ix.hi - bx.lo, iy.lo - by.hi, iy.hi - by.lo);
  const Chart ch = Chart::make();
  std::vector<StripeComponent> out;
  for (auto& n : ns) {
    auto t = ch.to_chart(double(n[0]), double(n[1]));
    // intersection expressed back in B's own chart: image - n
    Interval<double> cx{std::max(ix.lo - t[0], bx.lo), std::min(ix.hi - t[0], bx.hi)};
    Interval<double> cy{std::max(iy.lo - t[1], by.lo), std::min(iy.hi - t[1], by.hi)};
    if (!(cx.hi > cx.lo) || !(cy.hi > cy.lo)) continue;
    StripeComponent sc;
    sc.n = n;
    sc.x = cx;
    sc.y = cy;
    double tol = 1e-12;
    sc.full_height = cy.lo <= by.lo + tol && cy.hi >= by.hi - tol;
    sc.touches_edge = std::abs(cx.lo - bx.lo) <= tol || std::abs(cx.hi - bx.hi) <= tol;
    out.push_back(sc);
  }
  return out;
}

struct HorseshoeRect {
  RationalPoint p0, p1;
  Lattice v{};
  ChartRect<double> K;
  int interior_fixed_points = 0;
  std::vector<StripeComponent> components;
};

inline std::array<double, 2> rational_chart(const Chart& ch, Int du, Int dv, Int den) {
  return ch.to_chart(double(du) / double(den), double(dv) / double(den));
}

inline HorseshoeRect find_horseshoe_rect(const LinearModel& m, const std::vector<RationalPoint>& fps,
                                         double max_edge = 0.01) {
  if (fps.empty()) throw std::invalid_argument("find_horseshoe_rect: no fixed points");
  const Chart ch = Chart::make();
  // All fixed-point pairs differ by lattice vectors of the fixed-point group, so scanning pairs
  // (p0, p) with p0 the first fixed point covers every pair shape.
  const RationalPoint p0 = fps.front();
  const Int den = p0.den;
  struct Cand {
    double size;
    std::size_t idx;
    Lattice v;
    std::array<double, 2> c;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 1; i < fps.size(); ++i) {
    Int du = fps[i].nu - p0.nu, dv = fps[i].nv - p0.nv;
    if (2 * du >= den) du -= den;
    if (2 * du < -den) du += den;
    if (2 * dv >= den) dv -= den;
    if (2 * dv < -den) dv += den;
    auto c = rational_chart(ch, du, dv, den);
    if (!(c[0] > 0 && c[1] > 0)) continue;  // p0 at the lower-left corner
    double size = std::max(c[0], c[1]);
    if (size >= max_edge) continue;
    cands.push_back({size, i, {du, dv}, c});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.size != b.size) return a.size < b.size;
    return a.idx < b.idx;
  });
  for (auto& cd : cands) {
    HorseshoeRect r;
    r.p0 = p0;
    r.p1 = fps[cd.idx];
    r.v = cd.v;
    r.K.anchor = p0.point();
    r.K.x = {0, cd.c[0]};
    r.K.y = {0, cd.c[1]};
    int inside = 0;
    for (std::size_t j = 0; j < fps.size(); ++j) {
      if (j == 0 || j == cd.idx) continue;
      auto l = ch.local(fps[j].point(), p0.point());
      if (l[0] >= 0 && l[0] <= cd.c[0] && l[1] >= 0 && l[1] <= cd.c[1]) ++inside;
    }
    r.interior_fixed_points = inside;
    if (inside != 0) continue;
    r.components = linear_image_components(m, r.K.x, r.K.y);
    if (r.components.size() != 2) continue;
    bool ok = true;
    for (auto& sc : r.components) ok = ok && sc.full_height && sc.touches_edge;
    if (!ok) continue;
    return r;
  }
  std::ostringstream os;
  os << "find_horseshoe_rect: no admissible fixed-point pair with edges < " << max_edge << " for N_init = " << m.n_init
     << "; use a larger N_init";
  throw std::runtime_error(os.str());
}

inline double rect_distance(const Chart& ch, const ChartRect<double>& K, const TorusPoint& p) {
  TorusPoint center = ch.point(K.anchor, K.x.mid(), K.y.mid());
  auto l = ch.local(p, center);
  double dx = std::max(std::abs(l[0]) - K.x.length() / 2, 0.0);
  double dy = std::max(std::abs(l[1]) - K.y.length() / 2, 0.0);
  return std::hypot(dx, dy);
}

inline RationalPoint choose_q(const LinearModel& m, const std::vector<RationalPoint>& fps, const ChartRect<double>& K,
                              double min_distance = 0.3) {
  const Chart ch = Chart::make();
  double best = -1;
  std::size_t bi = 0;
  for (std::size_t i = 0; i < fps.size(); ++i) {
    double d = rect_distance(ch, K, fps[i].point());
    if (d > best) {
      best = d;
      bi = i;
    }
  }
  if (best < min_distance) {
    std::ostringstream os;
    os << "choose_q: no fixed point at distance >= " << min_distance << " from K (best " << best << ") for N_init = "
       << m.n_init << "; use a larger N_init";
    throw std::runtime_error(os.str());
  }
  return fps[bi];
}

struct UKEdges {
  Lattice left{}, right{};
  double x_left = 0, x_right = 0;
};

// Chart x of the lift (b - a) + n, b and a over a common denominator.
template <class Real>
inline std::array<Real, 2> lift_chart(const BasicChart<Real>& ch, const RationalPoint& a, const RationalPoint& b,
                                      const Lattice& n) {
  Real den = Real(a.den);
  Real du = Real(b.nu - a.nu) / den + Real(n[0]);
  Real dv = Real(b.nv - a.nv) / den + Real(n[1]);
  return ch.to_chart(du, dv);
}

// Lattice offset e with (base + e) on the branch of the dense line passing next to the unwrapped target lift.
inline Lattice branch_offset(const TorusPoint& base, const std::array<double, 2>& target_lift, const DenseLineHit& hit) {
  TorusPoint target = wrap(target_lift[0], target_lift[1]);
  auto dl = lift_diff(target, base);
  Int m0u = std::llround((target_lift[0] - base.u) - dl[0]);
  Int m0v = std::llround((target_lift[1] - base.v) - dl[1]);
  return {m0u - hit.n_u, m0v - hit.n_v};
}

inline std::array<double, 2> unwrapped(const Chart& ch, const TorusPoint& anchor, double x, double y) {
  auto d = ch.from_chart(x, y);
  return {anchor.u + d[0], anchor.v + d[1]};
}

inline UKEdges widen_to_UK(const LinearModel& m, const ChartRect<double>& K, const RationalPoint& p0,
                           const RationalPoint& q, double ratio = 1.01) {
  const Chart ch = Chart::make();
  const double w = K.x.length();
  const double slack = (ratio - 1) * w / 2;  // split the budget between the two sides
  UKEdges e;
  TorusPoint qp = q.point(), p0p = p0.point();
  for (int side = 0; side < 2; ++side) {
    double xt = side == 0 ? K.x.lo - slack / 2 : K.x.hi + slack / 2;
    auto lift = unwrapped(ch, p0p, xt, K.y.mid());
    TorusPoint target = wrap(lift[0], lift[1]);
    DenseLineHit hit;
    try {
      hit = dense_line_near_point(m, qp, Direction::unstable, target, slack / 2);
    } catch (const DenseLineError& err) {
      std::ostringstream os;
      os << "widen_to_UK: no W^u(q) crossing within the " << ratio << " budget (" << err.what() << "); use a larger N_init";
      throw std::runtime_error(os.str());
    }
    // W^u(q) branch: q + off, vertical line at chart x of (q + off - p0)
    Lattice off = branch_offset(qp, lift, hit);
    double x = lift_chart<double>(ch, p0, q, off)[0];
    if (side == 0) {
      e.left = off;
      e.x_left = x;
    } else {
      e.right = off;
      e.x_right = x;
    }
  }
  if (!(e.x_left < K.x.lo && e.x_right > K.x.hi && (e.x_right - e.x_left) <= ratio * w)) {
    throw std::runtime_error("widen_to_UK: crossing abscissae do not bracket K within the ratio budget");
  }
  return e;
}

inline HorseshoeSpec make_horseshoe_spec(const HorseshoeParams& params) {
  LinearModel m = make_linear_model(params.n_init);
  auto fps = fixed_points(m);
  HorseshoeRect r = find_horseshoe_rect(m, fps, params.max_edge);
  RationalPoint q = choose_q(m, fps, r.K, params.min_q_distance);
  UKEdges e = widen_to_UK(m, r.K, r.p0, q, params.uk_ratio);
  HorseshoeSpec s;
  s.params = params;
  s.p0 = r.p0;
  s.p1 = r.p1;
  s.q = q;
  s.v = r.v;
  s.edge_left = e.left;
  s.edge_right = e.right;
  // frame branches of W^s(p0) near w = midpoint of R~'s top/bottom edge moved out by frame_offset
  const Chart ch = Chart::make();
  double xl = e.x_left - params.margin, xr = e.x_right + params.margin;
  double ytop = r.K.y.hi + params.margin + params.frame_offset;
  double ybot = r.K.y.lo - params.margin - params.frame_offset;
  TorusPoint p0p = r.p0.point();
  for (int side = 0; side < 2; ++side) {
    auto lift = unwrapped(ch, p0p, (xl + xr) / 2, side == 0 ? ytop : ybot);
    auto hit = dense_line_near_point(m, p0p, Direction::stable, wrap(lift[0], lift[1]), params.frame_tol);
    Lattice off = branch_offset(p0p, lift, hit);
    (side == 0 ? s.frame_top : s.frame_bottom) = off;
  }
  return s;
}

enum class SMember { in, out, unresolved };

// All regions in the chart anchored at p0, computed in Real from the exact spec.
template <class Real>
class BasicGeometry {
 public:
  BasicGeometry() = default;
  explicit BasicGeometry(const HorseshoeSpec& spec) : spec_(spec) {
    const auto& P = spec.params;
    lm_ = make_linear_model(P.n_init);
    chart_ = BasicChart<Real>::make();
    lambda_ = lm_.template lambda<Real>();
    p0_ = spec.p0.template point<Real>();
    const auto wch = BasicChart<Wide>::make();
    auto k = wch.to_chart(Wide(spec.v[0]) / Wide(spec.p0.den), Wide(spec.v[1]) / Wide(spec.p0.den));
    x1_ = static_cast<Real>(k[0]);
    y1_ = static_cast<Real>(k[1]);
    K_ = {p0_, {Real(0), x1_}, {Real(0), y1_}};
    // lattice offsets are large, so the lifts are summed in Wide before rounding to Real
    auto exact = [&](const RationalPoint& a, const RationalPoint& b, const Lattice& n) {
      auto c = lift_chart<Wide>(wch, a, b, n);
      return std::array<Real, 2>{static_cast<Real>(c[0]), static_cast<Real>(c[1])};
    };
    XL_ = exact(spec.p0, spec.q, spec.edge_left)[0];
    XR_ = exact(spec.p0, spec.q, spec.edge_right)[0];
    q_chart_ = exact(spec.p0, spec.q, Lattice{0, 0});
    if (!(XL_ < 0 && XR_ > x1_)) throw std::runtime_error("geometry: UK edges do not bracket K");
    UK_ = {p0_, {XL_, XR_}, {Real(0), y1_}};
    h_ = y1_ / lambda_;
    Real kappa_bound = h_ / 2;
    if (!(P.kappa_fraction > 0 && P.kappa_fraction < 1)) {
      std::ostringstream os;
      os << "derive_regions: kappa fraction " << P.kappa_fraction << " outside (0,1); admissible kappa < "
         << to_double(kappa_bound);
      throw std::invalid_argument(os.str());
    }
    kappa_ = Real(P.kappa_fraction) * kappa_bound;
    Q_ = {Real(0), y1_};
    Q0_ = {Real(0), h_};
    Q1_ = {y1_ - h_, y1_};
    a1_ = y1_ - 2 * h_;
    Real mg = Real(P.margin);
    UH_[0] = {p0_, UK_.x, Q0_};
    UH_[1] = {p0_, UK_.x, Q1_};
    UV_[0] = {p0_, {XL_ / lambda_, XR_ / lambda_}, Q_};
    UV_[1] = {p0_, {x1_ + (XL_ - x1_) / lambda_, x1_ + (XR_ - x1_) / lambda_}, Q_};
    Rt_ = {p0_, UK_.x.widened(mg), Q_.widened(mg)};
    for (int i = 0; i < 2; ++i) {
      RQ_[i] = UH_[i].y.widened(kappa_);
      RtH_[i] = {p0_, UK_.x, RQ_[i]};
      RH_[i] = {p0_, Rt_.x, RQ_[i]};
    }
    band_ = mg;

    // Cantor set on Q with the first gap forced by the geometry
    Real forced = a1_;
    if (P.a1_override) {
      using std::abs;
      Real over = Real(*P.a1_override);
      if (abs(over - forced) > y1_ * Real(1e-12)) {
        std::ostringstream os;
        os << "build_F_Bow: a_1 override " << *P.a1_override << " does not match the forced first gap |Q| - |Q0| - |Q1| = "
           << to_double(forced);
        throw std::invalid_argument(os.str());
      }
    }
    Real zeta_m1 = pi_of<Real>() * pi_of<Real>() / 6 - 1;
    Real coeff = P.coeff_override ? Real(*P.coeff_override) : Real(P.theta) * (2 * h_) / zeta_m1;
    if (!(P.theta > 0 && P.theta < 1) && !P.coeff_override) throw std::invalid_argument("gap rule: theta must lie in (0,1)");
    cantor_ = std::make_shared<const BasicCantorSet<Real>>(Q_, BasicGapRule<Real>{forced, coeff}, P.depth, 2 * h_,
                                                      P.cantor_resolution);
    vm_[0] = BasicVerticalMap<Real>(BasicBowenMap<Real>(cantor_, Half::left), Real(0), lambda_, kappa_);
    vm_[1] = BasicVerticalMap<Real>(BasicBowenMap<Real>(cantor_, Half::right), y1_, lambda_, kappa_);

    frame_top_ = exact(spec.p0, spec.p0, spec.frame_top);
    frame_bottom_ = exact(spec.p0, spec.p0, spec.frame_bottom);
  }

  const HorseshoeSpec& spec() const { return spec_; }
  const LinearModel& linear() const { return lm_; }
  const BasicChart<Real>& chart() const { return chart_; }
  const Real& lambda() const { return lambda_; }
  const BasicTorusPoint<Real>& p0() const { return p0_; }
  BasicTorusPoint<Real> p1() const { return spec_.p1.template point<Real>(); }
  BasicTorusPoint<Real> q() const { return spec_.q.template point<Real>(); }
  // chart of q relative to p0 through the exact (unreduced) lift
  const std::array<Real, 2>& q_chart() const { return q_chart_; }
  const Real& x1() const { return x1_; }
  const Real& y1() const { return y1_; }
  const Real& h() const { return h_; }
  const Real& kappa() const { return kappa_; }
  const Real& a1() const { return a1_; }
  const Real& band() const { return band_; }
  const ChartRect<Real>& K() const { return K_; }
  const ChartRect<Real>& UK() const { return UK_; }
  const ChartRect<Real>& UH(int i) const { return UH_[i]; }
  const ChartRect<Real>& UV(int i) const { return UV_[i]; }
  const ChartRect<Real>& Rt() const { return Rt_; }
  const ChartRect<Real>& RtH(int i) const { return RtH_[i]; }
  const ChartRect<Real>& RH(int i) const { return RH_[i]; }
  const Interval<Real>& Q() const { return Q_; }
  const Interval<Real>& Qi(int i) const { return i == 0 ? Q0_ : Q1_; }
  const Interval<Real>& RQ(int i) const { return RQ_[i]; }
  const BasicCantorSet<Real>& cantor() const { return *cantor_; }
  const BasicVerticalMap<Real>& vertical(int i) const { return vm_[i]; }
  // fixed point of stripe i in the chart
  std::array<Real, 2> fixed_chart(int i) const {
    if (i == 0) return {Real(0), Real(0)};
    return {x1_, y1_};
  }
  // chart (x, y) of the W^s(p0) branches carrying the frame's top and bottom edges
  const std::array<Real, 2>& frame_top_branch() const { return frame_top_; }
  const std::array<Real, 2>& frame_bottom_branch() const { return frame_bottom_; }

  std::array<Real, 2> chart_of(const BasicTorusPoint<Real>& p) const { return chart_.local(p, p0_); }
  BasicTorusPoint<Real> point_of(const Real& X, const Real& Y) const { return chart_.point(p0_, X, Y); }

  // Blend weight phi: 0 on pi_hor(UK), 1 at and beyond the vertical edges of R~, cubic smoothstep on the bands.
  std::pair<Real, Real> phi_d(const Real& X) const {
    if (X >= XL_ && X <= XR_) return {Real(0), Real(0)};
    if (X <= Rt_.x.lo || X >= Rt_.x.hi) return {Real(1), Real(0)};
    if (X < XL_) {
      Real u = (XL_ - X) / band_;
      return {smoothstep3(u), -smoothstep3_d(u) / band_};
    }
    Real u = (X - XR_) / band_;
    return {smoothstep3(u), smoothstep3_d(u) / band_};
  }

  // Which RH stripe contains the chart point, or -1.
  int rh_index(const Real& X, const Real& Y) const {
    if (!Rt_.x.contains(X)) return -1;
    for (int i = 0; i < 2; ++i)
      if (RQ_[i].contains(Y)) return i;
    return -1;
  }

  SMember s_membership(const BasicTorusPoint<Real>& p) const {
    auto c = chart_of(p);
    return s_membership_chart(c[0], c[1]);
  }
  SMember s_membership_chart(const Real& X, const Real& Y) const {
    if (!UK_.contains(X, Y)) return SMember::out;
    auto m = cantor_->membership(Y);
    if (m.kind == MemberKind::in) return SMember::in;
    if (m.kind == MemberKind::in_gap) return SMember::out;
    return SMember::unresolved;
  }

 private:
  HorseshoeSpec spec_;
  LinearModel lm_;
  BasicChart<Real> chart_{};
  Real lambda_{};
  BasicTorusPoint<Real> p0_{};
  Real x1_{}, y1_{}, XL_{}, XR_{}, h_{}, kappa_{}, a1_{}, band_{};
  std::array<Real, 2> q_chart_{};
  ChartRect<Real> K_, UK_, Rt_;
  std::array<ChartRect<Real>, 2> UH_, UV_, RtH_, RH_;
  Interval<Real> Q_, Q0_, Q1_;
  std::array<Interval<Real>, 2> RQ_;
  std::shared_ptr<const BasicCantorSet<Real>> cantor_;
  std::array<BasicVerticalMap<Real>, 2> vm_;
  std::array<Real, 2> frame_top_{}, frame_bottom_{};
};
using Geometry = BasicGeometry<double>;

}  // namespace semithick
