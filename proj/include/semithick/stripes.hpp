#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "anosov_map.hpp"
#include "parallel.hpp"

namespace semithick {

// One piece of W_m = F^-m(dh UK) as a graph over the frame grid. family 0 comes from the bottom edge of UK
// (the stable curve of p0), family 1 from the top edge (p1).
template <class Real>
struct WCurve {
  int level = 0;
  int family = 0;
  Lattice copy{};  // UK translate whose edge carries F^m of the piece
  std::vector<Real> y;
  std::vector<char> valid;

  bool full() const {
    return std::all_of(valid.begin(), valid.end(), [](char v) { return v != 0; });
  }
};

template <class Real>
struct StripeLevel {
  int level = 0;
  WCurve<Real> lower, upper;  // W_m pieces next to the anchor on its fiber
  bool is_stripe = false;     // F^m(anchor) outside UK: the region between is a stripe of level m
};

// Everything is tracked from one anchor point of the frame.
template <class Real>
struct StripeChain {
  Real X{}, Y{};
  std::vector<StripeLevel<Real>> levels;

  // A stripe of level k is dependent when a stripe of level in (N, k) contains it; within a chain those are
  // exactly the stripes of smaller level around the same anchor.
  bool dependent(int k, int N) const {
    for (int l = N + 1; l < k && l < int(levels.size()); ++l)
      if (levels[l].is_stripe) return true;
    return false;
  }
};

struct StripeOptions {
  int grid = 4096;
  std::vector<std::array<double, 2>> anchors;  // chart points; empty selects the default set
  int random_anchors = 4;                      // added to the default set, uniform in the frame
  std::uint64_t seed = 1;
  int threads = 0;
  double search = 4000;      // fiber window for the nearest UK edges of an image point
  double tolerance = 1e-40;  // grid tolerance for point-set comparisons, chart units
};

template <class Real>
struct StripeSet {
  int m_max = 0;
  int L_geo = 0;
  int frame_level = 0;
  int vertical_level = 0;
  std::vector<Real> xs;
  std::vector<StripeChain<Real>> chains;
  Report report;
};

// Smallest n with dh R inside W_n: on the local stable segment of p0 the map acts as X -> X / lambda, so a frame
// point with stable parameter t lies on F^-n(bottom edge of UK) iff t / lambda^n is in [XL, XR].
template <class Map>
int frame_level(const Map& F) {
  const auto& g = F.geometry();
  const double lam = to_double(g.lambda());
  const double XL = to_double(g.UK().x.lo), XR = to_double(g.UK().x.hi);
  int need = 0;
  for (auto br : {g.frame_top_branch(), g.frame_bottom_branch()}) {
    for (auto X : {g.Rt().x.lo, g.Rt().x.hi}) {
      double t = to_double(X) - to_double(br[0]);
      int n = 0;
      while (!(t >= XL && t <= XR)) {
        t /= lam;
        if (++n > 64) throw std::runtime_error("frame_level: frame edge not on W^s(p0)");
      }
      need = std::max(need, n);
    }
  }
  return need;
}

struct VerticalEdgeTrace {
  int level = 0;      // min n with F^-N(dv UK) cap R empty for all N >= n
  int ball_step = 0;  // first N with both edges inside the fiber ball around q that misses R
  double ball_radius = 0;
  std::vector<double> reach;  // max |fiber parameter from q| per backward step
};

// Backward images of the vertical edges of UK, which lie on the fiber of q. With s the signed fiber parameter of an
// edge end from q, F^-1 acts as s -> (s - c(F^-1 P)) / lambda, c the fiber correction. R is replaced by its bounding
// box, so the level is conservative.
template <class Map>
VerticalEdgeTrace vertical_edge_level(const Map& F, int cap = 32) {
  using Real = std::decay_t<decltype(F.lambda())>;
  const auto& g = F.geometry();
  const auto& sp = g.spec();
  const auto& fr = F.frame();
  const auto wch = BasicChart<Wide>::make();
  double blo = 1e300, bhi = -1e300;
  for (std::size_t k = 0; k < fr.xs.size(); ++k) {
    blo = std::min(blo, to_double(fr.bottom[k]));
    bhi = std::max(bhi, to_double(fr.top[k]));
  }
  const ChartRect<double> box{sp.p0.point(), {to_double(g.Rt().x.lo), to_double(g.Rt().x.hi)}, {blo, bhi}};
  VerticalEdgeTrace out;
  out.ball_radius = rect_distance(Chart::make(), box, sp.q.point());
  auto qc = lift_chart<Wide>(wch, sp.p0, sp.q, Lattice{0, 0});
  const double Xq = to_double(qc[0]), Yq = to_double(qc[1]);

  struct End {
    BasicTorusPoint<Real> p;
    Real s;
  };
  std::vector<End> ends;
  for (auto e : {sp.edge_left, sp.edge_right}) {
    // the lift q + e sits at chart (X_e, Y_e); the edge (X_e, Y), Y in [0, y1], has parameter Y - Y_e
    auto c = lift_chart<Wide>(wch, sp.p0, sp.q, e);
    Real X = static_cast<Real>(c[0]);
    for (auto Y : {Real(0), g.y1()}) ends.push_back({g.point_of(X, Y), static_cast<Real>(Wide(Y) - c[1])});
  }
  auto meets_box = [&](double slo, double shi) {
    return !lattice_in_box(box.x.lo - Xq, box.x.hi - Xq, box.y.lo - Yq - shi, box.y.hi - Yq - slo).empty();
  };
  int last_hit = -1;
  out.ball_step = -1;
  const Real lam = g.lambda();
  for (int N = 0; N <= cap; ++N) {
    double reach = 0;
    for (std::size_t e = 0; e < ends.size(); e += 2) {
      double a = to_double(ends[e].s), b = to_double(ends[e + 1].s);
      reach = std::max({reach, std::abs(a), std::abs(b)});
      if (meets_box(std::min(a, b), std::max(a, b))) last_hit = N;
    }
    out.reach.push_back(reach);
    if (reach < out.ball_radius) {
      // F^-1 is linear on the ball and contracts it into itself
      out.ball_step = N;
      break;
    }
    for (auto& end : ends) {
      end.p = F.apply_inverse(end.p);
      auto c = g.chart_of(end.p);
      end.s = (end.s - F.correction(c[0], c[1]).c) / lam;
    }
  }
  if (out.ball_step < 0) throw std::runtime_error("vertical_edge_level: edges did not enter the ball around q");
  out.level = last_hit + 1;
  return out;
}

namespace detail {

// Fiber bookkeeping for one anchor. B_j = F^j(anchor) is the base of the level-j fiber and a point of that fiber is
// B_j + t e_v. Since F = F_Lin + c e_v, t_{j+1} = lambda t_j + c(B_j + t_j e_v) - c(B_j). The fiber of grid abscissa x
// has base B_j + (x - X_anchor) / lambda^j e_h, so chart abscissae never pass through a backward step and no
// precision is lost to horizontal expansion.
template <class Map>
class FiberChain {
 public:
  using Real = std::decay_t<decltype(std::declval<const Map&>().lambda())>;

  FiberChain(const Map& F, const Real& X, const Real& Y, int m_max) : F_(F), X_(X), Y_(Y) {
    const auto& g = F.geometry();
    auto b = g.point_of(X, Y);
    lam_pow_.push_back(Real(1));
    for (int j = 0; j <= m_max + 1; ++j) {
      base_.push_back(g.chart_of(b));
      cb_.push_back(F.correction(base_.back()[0], base_.back()[1]).c);
      b = F.apply(b);
      lam_pow_.push_back(lam_pow_.back() * g.lambda());
    }
  }

  const Map& map() const { return F_; }
  const std::array<Real, 2>& base(int j) const { return base_[j]; }
  const Real& base_correction(int j) const { return cb_[j]; }
  Real dx(int j, const Real& x) const { return (x - X_) / lam_pow_[j]; }

  // Chart point near p0 of B_j(x) + t e_v.
  std::array<Real, 2> reduce(int j, const Real& x, const Real& t) const {
    const auto& g = F_.geometry();
    return g.chart_of(g.point_of(base_[j][0] + dx(j, x), base_[j][1] + t));
  }

  // One forward step of the fiber parameter; also returns the vertical derivative.
  std::pair<Real, Real> forward(int j, const Real& x, const Real& t) const {
    auto p = reduce(j, x, t);
    const Real& lam = F_.lambda();
    auto jet = F_.correction(p[0], p[1]);
    return {lam * t + jet.c - cb_[j], lam + jet.cy};
  }

  // Fiber parameter at level j of the preimage of the level-(j+1) point with parameter t_next. hint, when set, is a
  // nearby solution (chart y) used to start Newton and receives the new solution.
  Real backward(int j, const Real& x, const Real& t_next, Real* hint = nullptr) const {
    Real t0 = (t_next + cb_[j]) / F_.lambda();
    auto p = reduce(j, x, t0);
    Real ys = F_.fiber_preimage(p[0], p[1], hint);
    if (hint) *hint = ys;
    return t0 + (ys - p[1]);
  }

  // True when the step j preimage of every grid fiber in [x0, x1] sees the same fiber map.
  bool uniform(int j, const Real& x0, const Real& x1, const Real& t_next) const {
    Real t0 = (t_next + cb_[j]) / F_.lambda();
    auto a = reduce(j, x0, t0), b = reduce(j, x1, t0);
    using std::abs;
    if (abs(a[1] - b[1]) > abs(a[1]) * Real(1e-30) + Real(1e-40)) return false;  // different lifts
    return F_.fiber_uniform(std::min(a[0], b[0]), std::max(a[0], b[0]), a[1]);
  }

  // Fiber parameter at level 0 of the level-m point with parameter t.
  Real pull(int m, const Real& x, Real t) const {
    for (int j = m - 1; j >= 0; --j) t = backward(j, x, t);
    return t;
  }

  // Fiber parameter at level n of the level-0 point with parameter t, with the product of vertical derivatives.
  std::pair<Real, Real> push(int n, const Real& x, Real t) const {
    Real d = 1;
    for (int j = 0; j < n; ++j) {
      auto [tn, a2] = forward(j, x, t);
      t = tn;
      d *= a2;
    }
    return {t, d};
  }

  const Real& X() const { return X_; }
  const Real& Y() const { return Y_; }

 private:
  const Map& F_;
  Real X_, Y_;
  std::vector<std::array<Real, 2>> base_;
  std::vector<Real> cb_;
  std::vector<Real> lam_pow_;
};

template <class Real>
struct EdgeHit {
  Real y;      // chart y of the edge on the level-m fiber
  int family;  // 0 bottom edge, 1 top edge
  Lattice copy;
  Real cx;
};

// Nearest horizontal UK edges below (or at) and above Yw on the fiber with chart abscissa Xw.
template <class Real>
std::pair<EdgeHit<Real>, EdgeHit<Real>> bracketing_edges(const BasicGeometry<Real>& g, const Real& Xw, const Real& Yw,
                                                         double search) {
  const auto wch = BasicChart<Wide>::make();
  const auto& UK = g.UK();
  double pad = 1e-9;
  auto ns = lattice_in_box(to_double(Xw - UK.x.hi) - pad, to_double(Xw - UK.x.lo) + pad, to_double(Yw) - search - 1,
                           to_double(Yw) + search + 1);
  bool have_lo = false, have_hi = false;
  EdgeHit<Real> lo{}, hi{};
  for (auto& n : ns) {
    auto c = wch.to_chart(Wide(n[0]), Wide(n[1]));
    Real cx = static_cast<Real>(c[0]), cy = static_cast<Real>(c[1]);
    if (!UK.x.contains(Xw - cx)) continue;
    for (int fam = 0; fam < 2; ++fam) {
      Real ye = cy + (fam == 0 ? UK.y.lo : UK.y.hi);
      if (ye <= Yw) {
        if (!have_lo || ye > lo.y) lo = {ye, fam, n, cx}, have_lo = true;
      } else if (!have_hi || ye < hi.y) {
        hi = {ye, fam, n, cx}, have_hi = true;
      }
    }
  }
  if (!have_lo || !have_hi) {
    std::ostringstream os;
    os << "compute_W: no UK edge within " << search << " of the image fiber; increase the search window";
    throw std::runtime_error(os.str());
  }
  return {lo, hi};
}

template <class Map, class Real>
WCurve<Real> pull_piece(const FiberChain<Map>& ch, const BasicGeometry<Real>& g, const std::vector<Real>& xs, int m,
                        const EdgeHit<Real>& e) {
  WCurve<Real> w;
  w.level = m;
  w.family = e.family;
  w.copy = e.copy;
  w.y.assign(xs.size(), Real(0));
  w.valid.assign(xs.size(), 0);
  const auto& b = ch.base(m);
  Real t = e.y - b[1];
  std::vector<std::size_t> ks;
  for (std::size_t k = 0; k < xs.size(); ++k)
    if (g.UK().x.contains(b[0] + ch.dx(m, xs[k]) - e.cx)) ks.push_back(k);
  if (ks.empty()) return w;
  // steps shared by all grid fibers run once
  int j = m - 1;
  for (; j >= 1 && ch.uniform(j, xs[ks.front()], xs[ks.back()], t); --j) t = ch.backward(j, xs[ks.front()], t);
  std::vector<Real> tk(ks.size(), t);
  for (; j >= 0; --j) {
    Real hint = Real(-1e300);
    Real last_in{}, last_out{}, last_x{}, last_y{};
    bool have = false;
    for (std::size_t n = 0; n < ks.size(); ++n) {
      Real x = xs[ks[n]];
      Real X = ch.base(j)[0] + ch.dx(j, x);
      // where the fiber map does not depend on x, equal inputs give equal outputs
      if (have && tk[n] == last_in && ch.map().fiber_uniform(last_x, X, last_y)) {
        tk[n] = last_out;
        continue;
      }
      Real in = tk[n];
      tk[n] = ch.backward(j, x, in, hint > Real(-1e299) ? &hint : nullptr);
      if (hint <= Real(-1e299)) hint = ch.reduce(j, x, tk[n])[1];
      last_in = in, last_out = tk[n], last_x = X, have = true;
      last_y = ch.reduce(j, x, (in + ch.base_correction(j)) / ch.map().lambda())[1];
    }
  }
  for (std::size_t n = 0; n < ks.size(); ++n) {
    w.valid[ks[n]] = 1;
    w.y[ks[n]] = ch.Y() + tk[n];
  }
  return w;
}

inline std::vector<std::array<double, 2>> default_anchors(const Geometry& g, const Frame& fr, int n_random,
                                                          std::uint64_t seed) {
  const double XL = g.UK().x.lo, w = g.UK().x.length();
  const auto& c = g.cantor();
  const double mid = g.Rt().x.mid();
  std::vector<std::array<double, 2>> a{
      {XL + 0.45 * w, c.gaps(1)[0].lo + 0.6 * c.gaps(1)[0].length()},
      {XL + 0.3 * w, c.gaps(2)[0].mid()},
      {XL + 0.7 * w, c.gaps(3)[1].mid()},
      {XL + 0.6 * w, g.y1() - g.h() / 3},
      {g.Rt().x.lo + 0.004, g.RQ(0).mid()},
      {mid, fr.top_at(mid) - 1e-4},
      {mid, fr.bottom_at(mid) + 1e-3},
  };
  auto rng = block_rng(seed, 0);
  for (int k = 0; k < n_random; ++k) {
    double X = g.Rt().x.lo + unit_real(rng) * g.Rt().x.length();
    double lo = fr.bottom_at(X), hi = fr.top_at(X);
    a.push_back({X, lo + (0.02 + 0.96 * unit_real(rng)) * (hi - lo)});
  }
  return a;
}

template <class Real>
std::string wide_str(const Real& v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<Real>::digits10) << v;
  return os.str();
}

}  // namespace detail

// W pieces around each anchor for levels 0..m_max, in the precision of F, with the stripe laws checked.
template <class Map, class Real = std::decay_t<decltype(std::declval<const Map&>().lambda())>>
StripeSet<Real> compute_W(const Map& F, int m_max, const StripeOptions& opt = {}) {
  if (m_max < 1) throw std::invalid_argument("compute_W: m_max must be >= 1");
  if (opt.grid < 2) throw std::invalid_argument("compute_W: grid must have at least 2 samples");
  const auto& g = F.geometry();
  const auto& fr = F.frame();
  StripeSet<Real> S;
  S.m_max = m_max;
  S.frame_level = frame_level(F);
  auto vt = vertical_edge_level(F);
  S.vertical_level = vt.level;
  S.L_geo = std::max(S.frame_level, S.vertical_level);
  const int L = S.L_geo;

  S.xs.resize(opt.grid);
  for (int k = 0; k < opt.grid; ++k) S.xs[k] = g.Rt().x.lo + g.Rt().x.length() * Real(k) / Real(opt.grid - 1);

  auto anchors = opt.anchors;
  if (anchors.empty()) {
    Geometry gd(g.spec());
    Frame frd;
    frd.x = {to_double(fr.x.lo), to_double(fr.x.hi)};
    for (std::size_t k = 0; k < fr.xs.size(); ++k) {
      frd.xs.push_back(to_double(fr.xs[k]));
      frd.top.push_back(to_double(fr.top[k]));
      frd.bottom.push_back(to_double(fr.bottom[k]));
    }
    anchors = detail::default_anchors(gd, frd, opt.random_anchors, opt.seed);
  }

  // one block per (anchor, level); pieces of one level do not depend on other levels
  const std::size_t nl = std::size_t(m_max) + 1;
  std::vector<std::unique_ptr<detail::FiberChain<Map>>> fibers;
  S.chains.resize(anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    Real X = Real(anchors[a][0]), Y = Real(anchors[a][1]);
    if (!fr.contains(X, Y)) {
      std::ostringstream os;
      os << "compute_W: anchor " << detail::point_str(anchors[a][0], anchors[a][1]) << " outside the frame R";
      throw std::invalid_argument(os.str());
    }
    fibers.push_back(std::make_unique<detail::FiberChain<Map>>(F, X, Y, m_max));
    S.chains[a].X = X;
    S.chains[a].Y = Y;
    S.chains[a].levels.resize(nl);
  }
  parallel_blocks(anchors.size() * nl, opt.threads, [&](std::size_t blk) {
    std::size_t a = blk / nl;
    int m = int(blk % nl);
    const auto& ch = *fibers[a];
    auto [t, d] = ch.push(m, ch.X(), Real(0));
    (void)d;
    const auto& b = ch.base(m);
    auto [lo, hi] = detail::bracketing_edges(g, b[0], b[1] + t, opt.search);
    auto& lv = S.chains[a].levels[m];
    lv.level = m;
    lv.is_stripe = !(lo.family == 0 && hi.family == 1);
    lv.lower = detail::pull_piece(ch, g, S.xs, m, lo);
    lv.upper = detail::pull_piece(ch, g, S.xs, m, hi);
  });

  // ---- checks
  Report& rep = S.report;
  rep.title = "stripes";
  const Real tol = Real(opt.tolerance);
  std::ostringstream lvl;
  lvl << "frame edges in W_" << S.frame_level << ", vertical edges leave R at " << S.vertical_level << " (ball radius "
      << vt.ball_radius << " reached at step " << vt.ball_step << ")";
  rep.add("L_geo", true, L, double(m_max), lvl.str());

  // W_0 = dh UK over UK.x for anchors inside UK
  double w0 = 0;
  int w0_n = 0;
  for (auto& c : S.chains) {
    if (!g.UK().contains(c.X, c.Y)) continue;
    ++w0_n;
    const auto& lv = c.levels[0];
    for (std::size_t k = 0; k < S.xs.size(); ++k) {
      bool inside = g.UK().x.contains(S.xs[k]);
      if (bool(lv.lower.valid[k]) != inside || bool(lv.upper.valid[k]) != inside) w0 = 1;
      if (!inside) continue;
      using std::abs;
      w0 = std::max({w0, to_double(abs(lv.lower.y[k] - g.UK().y.lo)), to_double(abs(lv.upper.y[k] - g.UK().y.hi))});
    }
  }
  rep.add("W_0 = dh UK", w0_n > 0 && w0 <= to_double(tol), w0, to_double(tol), std::to_string(w0_n) + " anchors in UK");

  // dh R inside W_{frame_level}: frame samples land on the bottom edge of UK after frame_level steps
  double dhr = 0;
  for (int side = 0; side < 2; ++side) {
    const auto& ys = side == 0 ? fr.top : fr.bottom;
    std::size_t c0 = fr.xs.size() / 2;
    detail::FiberChain<Map> ch(F, fr.xs[c0], ys[c0], S.frame_level);
    for (std::size_t k = 0; k < fr.xs.size(); k += 50) {
      auto [t, d] = ch.push(S.frame_level, fr.xs[k], ys[k] - ys[c0]);
      auto p = ch.reduce(S.frame_level, fr.xs[k], t);
      using std::abs;
      double r = g.UK().x.contains(p[0]) ? to_double(abs(p[1] - g.UK().y.lo) / d) : 1.0;
      dhr = std::max(dhr, r);
    }
  }
  rep.add("dh R subset W_L (source distance)", dhr <= 1e-30, dhr, 1e-30);

  // slopes and monotonicity on every piece
  double max_slope = 0, mono = 0;
  std::string slope_at, mono_at;
  for (std::size_t a = 0; a < S.chains.size(); ++a) {
    const auto& ch = *fibers[a];
    for (auto& lv : S.chains[a].levels) {
      for (const auto* w : {&lv.lower, &lv.upper}) {
        for (std::size_t k = 0; k + 1 < S.xs.size(); ++k) {
          if (!w->valid[k] || !w->valid[k + 1]) continue;
          using std::abs;
          double s = to_double(abs(w->y[k + 1] - w->y[k]) / (S.xs[k + 1] - S.xs[k]));
          if (s > max_slope) {
            max_slope = s;
            slope_at = "anchor " + std::to_string(a) + " level " + std::to_string(lv.level);
          }
        }
        // F^{m+1} of W_m lands on dh UK: W_m is inside W_{m+1}
        if (lv.level >= m_max) continue;
        for (std::size_t k = 0; k < S.xs.size(); k += 64) {
          if (!w->valid[k]) continue;
          auto [t, d] = ch.push(lv.level + 1, S.xs[k], w->y[k] - ch.Y());
          auto p = ch.reduce(lv.level + 1, S.xs[k], t);
          using std::abs;
          Real r = g.UK().x.contains(p[0]) ? std::min(abs(p[1] - g.UK().y.lo), abs(p[1] - g.UK().y.hi)) : Real(1);
          double src = to_double(r / d);
          if (src > mono) {
            mono = src;
            mono_at = "anchor " + std::to_string(a) + " level " + std::to_string(lv.level);
          }
        }
      }
    }
  }
  rep.add("W_m subset W_{m+1} (source distance)", mono <= to_double(tol), mono, to_double(tol), mono_at);
  rep.add("W slopes < 1", max_slope < 1, max_slope, 1, max_slope < 1 ? slope_at : "cone violation at " + slope_at);

  // stripes of level > L: full pieces inside the frame, cover their segments, nested or closure-disjoint
  struct Ref {
    std::size_t chain;
    int level;
  };
  std::vector<Ref> stripes;
  int partial = 0;
  double outside_frame = 0;
  for (std::size_t a = 0; a < S.chains.size(); ++a)
    for (auto& lv : S.chains[a].levels) {
      if (lv.level <= L) continue;
      if (!lv.lower.full() || !lv.upper.full()) {
        ++partial;
        continue;
      }
      for (std::size_t k = 0; k < S.xs.size(); k += 16) {
        double ex = std::max(to_double(fr.bottom_at(S.xs[k]) - lv.lower.y[k]), to_double(lv.upper.y[k] - fr.top_at(S.xs[k])));
        outside_frame = std::max(outside_frame, ex);
      }
      if (lv.is_stripe) stripes.push_back({a, lv.level});
    }
  rep.add("pieces of level > L span R", partial == 0, partial, 0);
  rep.add("W pieces of level > L inside the frame", outside_frame <= 1e-9, outside_frame, 1e-9);

  int uncovered = 0;
  std::string unc_at;
  for (auto& s : stripes) {
    const auto& ch = *fibers[s.chain];
    const auto& lv = S.chains[s.chain].levels[s.level];
    for (std::size_t k = 0; k < S.xs.size(); k += S.xs.size() / 8) {
      for (double f : {0.25, 0.5, 0.75}) {
        Real y = lv.lower.y[k] + Real(f) * (lv.upper.y[k] - lv.lower.y[k]);
        auto [t, d] = ch.push(s.level, S.xs[k], y - ch.Y());
        (void)d;
        auto p = ch.reduce(s.level, S.xs[k], t);
        if (g.UK().contains(p[0], p[1])) {
          ++uncovered;
          unc_at = "anchor " + std::to_string(s.chain) + " level " + std::to_string(s.level);
        }
      }
    }
  }
  rep.add("stripes of level n lie in F^-n(T2 \\ UK)", uncovered == 0, uncovered, 0, unc_at);

  long pairs = 0, violations = 0, nested = 0;
  std::string viol_at;
  for (std::size_t i = 0; i < stripes.size(); ++i)
    for (std::size_t j = 0; j < stripes.size(); ++j) {
      const auto& A = S.chains[stripes[i].chain].levels[stripes[i].level];  // level l
      const auto& B = S.chains[stripes[j].chain].levels[stripes[j].level];  // level k
      if (A.level > B.level || (A.level == B.level && i >= j)) continue;
      ++pairs;
      bool in = true, below = true, above = true;
      for (std::size_t k = 0; k < S.xs.size(); ++k) {
        in = in && B.lower.y[k] >= A.lower.y[k] - tol && B.upper.y[k] <= A.upper.y[k] + tol;
        below = below && B.upper.y[k] < A.lower.y[k] - tol;
        above = above && B.lower.y[k] > A.upper.y[k] + tol;
      }
      if (A.level == B.level && in) {
        // same level: identical or disjoint
        bool same = true;
        for (std::size_t k = 0; k < S.xs.size() && same; ++k) {
          using std::abs;
          same = abs(B.lower.y[k] - A.lower.y[k]) <= tol && abs(B.upper.y[k] - A.upper.y[k]) <= tol;
        }
        in = same;
      }
      if (in) ++nested;
      if (!in && !below && !above) {
        ++violations;
        viol_at = "anchors " + std::to_string(stripes[i].chain) + "/" + std::to_string(stripes[j].chain) + " levels " +
                  std::to_string(A.level) + "/" + std::to_string(B.level);
      }
    }
  std::ostringstream pd;
  pd << pairs << " pairs, " << nested << " nested";
  if (violations) pd << "; first violation " << viol_at;
  rep.add("stripes nested or closure-disjoint", violations == 0 && pairs > 0, double(violations), 0, pd.str());
  return S;
}

// CSV of every piece: chain,level,role,family,k,x,y (valid samples only, full precision).
template <class Real>
void write_w_csv(std::ostream& os, const StripeSet<Real>& S) {
  os << "chain,level,role,family,stripe,k,x,y\n";
  for (std::size_t a = 0; a < S.chains.size(); ++a)
    for (auto& lv : S.chains[a].levels)
      for (int r = 0; r < 2; ++r) {
        const auto& w = r == 0 ? lv.lower : lv.upper;
        for (std::size_t k = 0; k < S.xs.size(); ++k) {
          if (!w.valid[k]) continue;
          os << a << ',' << lv.level << ',' << (r == 0 ? "lower" : "upper") << ',' << w.family << ','
             << int(lv.is_stripe) << ',' << k << ',' << detail::wide_str(S.xs[k]) << ',' << detail::wide_str(w.y[k])
             << '\n';
        }
      }
}

}  // namespace semithick
