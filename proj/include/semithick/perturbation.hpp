#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "anosov_map.hpp"
#include "parallel.hpp"
#include "stripes.hpp"

namespace semithick {

template <class Map>
using map_real_t = std::decay_t<decltype(std::declval<const Map&>().lambda())>;

// C1 graph through nodes with prescribed slopes, piecewise cubic Hermite.
template <class Real>
class HermiteGraph {
 public:
  HermiteGraph() = default;
  HermiteGraph(std::vector<Real> xs, std::vector<Real> ys, std::vector<Real> ds)
      : xs_(std::move(xs)), ys_(std::move(ys)), ds_(std::move(ds)) {
    if (xs_.size() < 2 || ys_.size() != xs_.size() || ds_.size() != xs_.size())
      throw std::invalid_argument("HermiteGraph: need >= 2 nodes with one value and one slope each");
    for (std::size_t i = 0; i + 1 < xs_.size(); ++i)
      if (!(xs_[i] < xs_[i + 1])) throw std::invalid_argument("HermiteGraph: abscissae must increase");
  }

  const std::vector<Real>& xs() const { return xs_; }
  const std::vector<Real>& ys() const { return ys_; }
  const std::vector<Real>& ds() const { return ds_; }
  const Real& x_lo() const { return xs_.front(); }
  const Real& x_hi() const { return xs_.back(); }

  // {value, slope}; x is clamped to the node range.
  std::pair<Real, Real> eval(const Real& x) const {
    std::size_t i = interval_of(x);
    Real h = xs_[i + 1] - xs_[i];
    Real t = (std::clamp(x, xs_.front(), xs_.back()) - xs_[i]) / h;
    Real t2 = t * t, t3 = t2 * t;
    Real y = (2 * t3 - 3 * t2 + 1) * ys_[i] + (t3 - 2 * t2 + t) * h * ds_[i] + (3 * t2 - 2 * t3) * ys_[i + 1] +
             (t3 - t2) * h * ds_[i + 1];
    Real d = (6 * t2 - 6 * t) * (ys_[i] - ys_[i + 1]) / h + (3 * t2 - 4 * t + 1) * ds_[i] + (3 * t2 - 2 * t) * ds_[i + 1];
    return {y, d};
  }
  Real operator()(const Real& x) const { return eval(x).first; }

  // Exact max |y'|: on each interval y' is a quadratic in t.
  Real max_abs_slope() const {
    using std::abs;
    Real m = 0;
    for (std::size_t i = 0; i + 1 < xs_.size(); ++i) {
      Real h = xs_[i + 1] - xs_[i];
      Real q = (ys_[i] - ys_[i + 1]) / h;
      Real a = 6 * q + 3 * ds_[i] + 3 * ds_[i + 1];
      Real b = -6 * q - 4 * ds_[i] - 2 * ds_[i + 1];
      Real c = ds_[i];
      m = std::max({m, abs(c), abs(a + b + c)});
      if (a != 0) {
        Real t = -b / (2 * a);
        if (t > 0 && t < 1) m = std::max(m, abs((a * t + b) * t + c));
      }
    }
    return m;
  }

  Real max_spacing() const {
    Real h = 0;
    for (std::size_t i = 0; i + 1 < xs_.size(); ++i) h = std::max(h, Real(xs_[i + 1] - xs_[i]));
    return h;
  }

 private:
  std::size_t interval_of(const Real& x) const {
    if (x <= xs_.front()) return 0;
    if (x >= xs_.back()) return xs_.size() - 2;
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    return static_cast<std::size_t>(it - xs_.begin()) - 1;
  }

  std::vector<Real> xs_, ys_, ds_;
};

// Region between two graphs phi1 < phi2 with |phi'| < 1 over an abscissa range inside the frame.
template <class Real>
class StripeShape {
 public:
  virtual ~StripeShape() = default;
  virtual Interval<Real> x() const = 0;
  // {phi1, phi1', phi2, phi2'} on the fiber X
  virtual std::array<Real, 4> bounds(const Real& X) const = 0;
  virtual bool contains(const Real& X, const Real& Y) const = 0;
  // y range of the closure over the fibers in [X0, X1]
  virtual Interval<Real> hull(const Real& X0, const Real& X1) const = 0;
  virtual Real min_width() const = 0;
  virtual Real max_slope() const = 0;
  virtual int level() const { return -1; }

  std::array<Real, 2> segment(const Real& X) const {
    auto b = bounds(X);
    return {b[0], b[2]};
  }
};

// Stripe with cubic Hermite boundaries.
template <class Real>
struct RoughStripe final : StripeShape<Real> {
  HermiteGraph<Real> lower, upper;
  Real slope_bound{};  // certified max |phi_j'|
  Real y_min{}, y_max{};
  Real width{};  // sampled minimal width
  int lvl = -1;

  Interval<Real> x() const override { return {lower.x_lo(), lower.x_hi()}; }
  std::array<Real, 4> bounds(const Real& X) const override {
    auto [l, dl] = lower.eval(X);
    auto [u, du] = upper.eval(X);
    return {l, dl, u, du};
  }
  bool contains(const Real& X, const Real& Y) const override {
    if (Y < y_min || Y > y_max || X < lower.x_lo() || X > lower.x_hi()) return false;
    return Y >= lower(X) && Y <= upper(X);
  }
  Interval<Real> hull(const Real&, const Real&) const override { return {y_min, y_max}; }
  Real min_width() const override { return width; }
  Real max_slope() const override { return slope_bound; }
  int level() const override { return lvl; }
};

// Validates the stripe laws against the frame of F.
template <class Map, class Real>
RoughStripe<Real> make_rough_stripe(const Map& F, HermiteGraph<Real> lower, HermiteGraph<Real> upper, int level = -1) {
  if (lower.xs() != upper.xs()) throw std::invalid_argument("rough stripe: lower and upper graphs need the same nodes");
  using std::abs;
  const auto& fr = F.frame();
  RoughStripe<Real> s;
  s.lvl = level;
  s.slope_bound = std::max(lower.max_abs_slope(), upper.max_abs_slope());
  if (!(s.slope_bound < 1)) {
    std::ostringstream os;
    os << "rough stripe: boundary slope reaches " << to_double(s.slope_bound) << ", need |phi'| < 1";
    throw std::invalid_argument(os.str());
  }
  if (lower.x_lo() < fr.x.lo || lower.x_hi() > fr.x.hi)
    throw std::invalid_argument("rough stripe: abscissa range leaves the frame");
  const auto& xs = lower.xs();
  Real ymin = lower.ys().front(), ymax = upper.ys().front();
  s.width = upper.ys().front() - lower.ys().front();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int q = 0; q < 4; ++q) {
      if (q > 0 && i + 1 == xs.size()) break;
      Real X = q == 0 ? xs[i] : xs[i] + (xs[i + 1] - xs[i]) * Real(q) / Real(4);
      Real lo = lower(X), hi = upper(X);
      if (!(lo < hi)) {
        std::ostringstream os;
        os << "rough stripe: graphs cross at " << detail::point_str(to_double(X), to_double(lo));
        throw std::invalid_argument(os.str());
      }
      if (!fr.contains(X, lo) || !fr.contains(X, hi)) {
        std::ostringstream os;
        os << "rough stripe: leaves the frame at " << detail::point_str(to_double(X), to_double(lo));
        throw std::invalid_argument(os.str());
      }
      s.width = std::min(s.width, Real(hi - lo));
      ymin = std::min(ymin, lo);
      ymax = std::max(ymax, hi);
    }
  }
  // between samples a graph moves by at most slope_bound times the distance to the nearest sample
  Real pad = s.slope_bound * lower.max_spacing() / 8 + (abs(ymin) + abs(ymax)) * eps_of<Real>() * 4;
  s.y_min = ymin - pad;
  s.y_max = ymax + pad;
  s.lower = std::move(lower);
  s.upper = std::move(upper);
  return s;
}

namespace detail {

// Slopes of sampled curves by second-order differences on a uniform grid.
template <class Real>
std::vector<Real> grid_slopes(const std::vector<Real>& xs, const std::vector<Real>& ys) {
  std::size_t n = xs.size();
  std::vector<Real> d(n);
  if (n == 2) {
    d[0] = d[1] = (ys[1] - ys[0]) / (xs[1] - xs[0]);
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1]);
  Real h0 = xs[1] - xs[0], h1 = xs[n - 1] - xs[n - 2];
  d[0] = (-3 * ys[0] + 4 * ys[1] - ys[2]) / (2 * h0);
  d[n - 1] = (3 * ys[n - 1] - 4 * ys[n - 2] + ys[n - 3]) / (2 * h1);
  return d;
}

}  // namespace detail

// Stripe between two sampled curves (e.g. W pieces on the compute_W grid).
template <class Map, class Real>
RoughStripe<Real> stripe_from_curves(const Map& F, const std::vector<Real>& xs, const std::vector<Real>& lower,
                                     const std::vector<Real>& upper, int level = -1) {
  HermiteGraph<Real> lo(xs, lower, detail::grid_slopes(xs, lower));
  HermiteGraph<Real> hi(xs, upper, detail::grid_slopes(xs, upper));
  return make_rough_stripe(F, std::move(lo), std::move(hi), level);
}

template <class Map, class Real>
RoughStripe<Real> stripe_from_level(const Map& F, const StripeSet<Real>& S, std::size_t chain, int level) {
  const auto& lv = S.chains.at(chain).levels.at(level);
  if (!lv.is_stripe) throw std::invalid_argument("stripe_from_level: the anchor's level-" + std::to_string(level) +
                                                 " region is not a stripe");
  if (!lv.lower.full() || !lv.upper.full())
    throw std::invalid_argument("stripe_from_level: W pieces do not span the frame at level " + std::to_string(level));
  return stripe_from_curves(F, S.xs, lv.lower.y, lv.upper.y, level);
}

struct StripeResolution {
  int nodes = 1025;           // abscissae of the hull table
  double slope_step = 1e-12;  // central-difference step for boundary slopes, relative to the frame width
  double search = 4000;
};

// Stripe of level k around an anchor, with exact boundaries: phi1, phi2 are the level-k W pieces pulled back along
// the anchor's fiber chain, and membership is decided by pushing the point k steps forward and comparing with the
// two UK edges. Stripes inside RQ bend by orders of magnitude more than their width, so an interpolated boundary
// would need a very fine grid there. A table of exact boundary values gives a per-bin y hull for fast rejection.
template <class Map>
class ChainStripe final : public StripeShape<map_real_t<Map>> {
 public:
  using Real = map_real_t<Map>;

  ChainStripe(std::shared_ptr<const Map> F, const Real& X, const Real& Y, int level, const StripeResolution& res = {})
      : F_(std::move(F)), ch_(checked(F_, X, Y, level), X, Y, level), level_(level), res_(res) {
    if (res.nodes < 3) throw std::invalid_argument("stripe_around: need at least 3 hull nodes");
    const auto& g = F_->geometry();
    const auto& fr = F_->frame();
    const auto& b = ch_.base(level);
    auto [lo, hi] = detail::bracketing_edges(g, b[0], b[1], res.search);
    if (lo.family == 0 && hi.family == 1)
      throw std::invalid_argument("stripe_around: the anchor's level-" + std::to_string(level) +
                                  " image lies in UK, so it is not in a stripe");
    lo_ = lo, hi_ = hi;
    t_lo_ = lo.y - b[1];
    t_hi_ = hi.y - b[1];
    xr_ = fr.x;
    hd_ = xr_.length() * Real(res.slope_step);
    const int n = res.nodes;
    xs_.resize(n);
    for (int i = 0; i < n; ++i) xs_[i] = xr_.lo + xr_.length() * Real(i) / Real(n - 1);
    xs_.back() = xr_.hi;
    std::vector<Real> mids(n - 1);
    for (int i = 0; i + 1 < n; ++i) mids[i] = (xs_[i] + xs_[i + 1]) / 2;
    auto yl = pull(xs_, lo_), yu = pull(xs_, hi_);
    auto ml = pull(mids, lo_), mu = pull(mids, hi_);
    using std::abs;
    width_ = yu[0] - yl[0];
    slope_ = 0;
    for (int i = 0; i < n; ++i) {
      if (!(yl[i] < yu[i])) throw std::runtime_error("stripe_around: boundaries touch at a sampled abscissa");
      width_ = std::min(width_, Real(yu[i] - yl[i]));
      if (i + 1 < n) {
        width_ = std::min(width_, Real(mu[i] - ml[i]));
        Real dx = (xs_[i + 1] - xs_[i]) / 2;
        slope_ = std::max({slope_, Real(abs(ml[i] - yl[i]) / dx), Real(abs(yl[i + 1] - ml[i]) / dx),
                           Real(abs(mu[i] - yu[i]) / dx), Real(abs(yu[i + 1] - mu[i]) / dx)});
      }
    }
    if (!(slope_ < 1)) throw std::runtime_error("stripe_around: boundary slope reaches 1");
    // bin i covers [xs_i, xs_i+1]; pad by the largest half-bin move nearby so curvature stays inside
    bin_.resize(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
      Real m = 0;
      for (int j = std::max(0, i - 1); j <= std::min(n - 2, i + 1); ++j)
        m = std::max({m, Real(abs(ml[j] - yl[j])), Real(abs(yl[j + 1] - ml[j])), Real(abs(mu[j] - yu[j])),
                      Real(abs(yu[j + 1] - mu[j]))});
      Real lo_y = std::min({yl[i], yl[i + 1], ml[i]}), hi_y = std::max({yu[i], yu[i + 1], mu[i]});
      Real pad = 2 * m + (abs(lo_y) + abs(hi_y)) * eps_of<Real>() * 16;
      bin_[i] = {lo_y - pad, hi_y + pad};
    }
    y_all_ = bin_[0];
    for (auto& iv : bin_) y_all_ = {std::min(y_all_.lo, iv.lo), std::max(y_all_.hi, iv.hi)};
  }

  ChainStripe(const ChainStripe&) = delete;
  ChainStripe& operator=(const ChainStripe&) = delete;

  Interval<Real> x() const override { return xr_; }
  Real min_width() const override { return width_; }
  Real max_slope() const override { return slope_; }
  int level() const override { return level_; }
  const Map& map() const { return *F_; }
  std::array<Real, 2> anchor() const { return {ch_.X(), ch_.Y()}; }
  const StripeResolution& resolution() const { return res_; }

  std::array<Real, 4> bounds(const Real& X) const override {
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = cache_.find(X);
      if (it != cache_.end()) return it->second;
    }
    Real a = std::max(xr_.lo, Real(X - hd_)), c = std::min(xr_.hi, Real(X + hd_));
    std::vector<Real> pts{a, X, c};
    auto l = pull(pts, lo_), u = pull(pts, hi_);
    std::array<Real, 4> out{l[1], (l[2] - l[0]) / (c - a), u[1], (u[2] - u[0]) / (c - a)};
    std::lock_guard<std::mutex> lk(mu_);
    if (cache_.size() > (1u << 14)) cache_.clear();
    cache_.emplace(X, out);
    return out;
  }

  bool contains(const Real& X, const Real& Y) const override {
    if (X < xr_.lo || X > xr_.hi) return false;
    if (!bin_[bin_of(X)].contains(Y)) return false;
    Real t = ch_.push(level_, X, Real(Y - ch_.Y())).first;
    return t >= t_lo_ && t <= t_hi_;
  }

  Interval<Real> hull(const Real& X0, const Real& X1) const override {
    if (X1 < xr_.lo || X0 > xr_.hi) return {Real(1), Real(0)};
    std::size_t a = bin_of(std::max(X0, xr_.lo)), b = bin_of(std::min(X1, xr_.hi));
    Interval<Real> h = bin_[a];
    for (std::size_t i = a + 1; i <= b; ++i) h = {std::min(h.lo, bin_[i].lo), std::max(h.hi, bin_[i].hi)};
    return h;
  }

 private:
  static const Map& checked(const std::shared_ptr<const Map>& F, const Real& X, const Real& Y, int level) {
    if (!F) throw std::invalid_argument("stripe_around: missing map");
    if (level < 1) throw std::invalid_argument("stripe_around: level must be positive");
    if (!F->frame().contains(X, Y)) throw std::invalid_argument("stripe_around: anchor outside the frame");
    return *F;
  }

  std::vector<Real> pull(const std::vector<Real>& xs, const detail::EdgeHit<Real>& e) const {
    auto w = detail::pull_piece(ch_, F_->geometry(), xs, level_, e);
    if (!w.full()) throw std::runtime_error("stripe_around: a boundary piece does not span the frame");
    return w.y;
  }

  std::size_t bin_of(const Real& X) const {
    auto it = std::upper_bound(xs_.begin(), xs_.end(), X);
    std::size_t i = it == xs_.begin() ? 0 : std::size_t(it - xs_.begin()) - 1;
    return std::min(i, bin_.size() - 1);
  }

  std::shared_ptr<const Map> F_;
  detail::FiberChain<Map> ch_;
  int level_;
  StripeResolution res_;
  detail::EdgeHit<Real> lo_{}, hi_{};
  Real t_lo_{}, t_hi_{}, hd_{}, width_{}, slope_{};
  Interval<Real> xr_{}, y_all_{};
  std::vector<Real> xs_;
  std::vector<Interval<Real>> bin_;
  mutable std::mutex mu_;
  mutable std::map<Real, std::array<Real, 4>> cache_;
};

// Level-k stripe of F around (X, Y); F is copied and kept alive by the stripe.
template <class Map, class Real = map_real_t<Map>>
std::shared_ptr<const ChainStripe<Map>> stripe_around(const Map& F, const Real& X, const Real& Y, int level,
                                                      const StripeResolution& res = {}) {
  return std::make_shared<const ChainStripe<Map>>(std::make_shared<const Map>(F), X, Y, level, res);
}

// Random roughly horizontal stripe of width at most width_max meeting RQ_0 or RQ_1. Half of the draws hug the band
// with a small sine midline; the others oscillate across it with amplitude up to 3 band heights.
template <class Map>
RoughStripe<map_real_t<Map>> random_stripe(const Map& F, std::mt19937_64& rng, double width_max, int nodes = 65) {
  using Real = map_real_t<Map>;
  const auto& g = F.geometry();
  const double pi = 3.141592653589793;
  const auto& rx = g.Rt().x;
  double x0 = to_double(rx.lo), W = to_double(rx.length());
  int i = int(rng() & 1);
  bool cross = (rng() & 1) != 0;
  auto rq = g.RQ(i);
  double band = to_double(rq.length()), mid0 = to_double(rq.mid());
  int k = 1 + int(rng() % 3);
  double omega = 2 * pi * k / W;
  double amp = (cross ? 0.6 + 2.4 * unit_real(rng) : 0.25 * unit_real(rng)) * band;
  double psi = 2 * pi * unit_real(rng), psi2 = 2 * pi * unit_real(rng);
  double w0 = width_max * (0.3 + 0.7 * unit_real(rng));
  double yc = cross ? mid0 + (2 * unit_real(rng) - 1) * 0.9 * amp : mid0 + (unit_real(rng) - 0.5) * 0.4 * band;
  std::vector<Real> xs(nodes), yl(nodes), dl(nodes), yu(nodes), du(nodes);
  for (int n = 0; n < nodes; ++n) {
    double u = W * n / (nodes - 1);
    double mid = yc + amp * std::sin(omega * u + psi), dmid = amp * omega * std::cos(omega * u + psi);
    double w = w0 * (1 + 0.3 * std::sin(2 * pi * u / W + psi2)) / 1.3;
    double dw = w0 * 0.3 * (2 * pi / W) * std::cos(2 * pi * u / W + psi2) / 1.3;
    xs[n] = n + 1 == nodes ? rx.hi : Real(x0 + u);
    yl[n] = mid - w / 2;
    yu[n] = mid + w / 2;
    dl[n] = dmid - dw / 2;
    du[n] = dmid + dw / 2;
  }
  return make_rough_stripe(F, HermiteGraph<Real>(xs, yl, dl), HermiteGraph<Real>(xs, yu, du));
}

namespace detail {

// Jet of the affine interpolation in y between the jets A at (x, phi1(x)) and B at (x, phi2(x)).
template <class Real>
FiberJet<Real> linear_jet(const FiberJet<Real>& A, const FiberJet<Real>& B, const Real& l, const Real& dl,
                          const Real& u, const Real& du, const Real& Y) {
  Real w = u - l;
  Real a = (B.c - A.c) / w;
  Real Ap = A.cx + A.cy * dl, Bp = B.cx + B.cy * du;
  Real ap = ((Bp - Ap) * w - (B.c - A.c) * (du - dl)) / (w * w);
  Real s = Y - l;
  return {A.c + s * a, Ap - dl * a + s * ap, a};
}

template <class Map, class Real = map_real_t<Map>>
FiberJet<Real> linearized_jet(const Map& F, const StripeShape<Real>& P, const Real& X, const Real& Y) {
  auto [l, dl, u, du] = P.bounds(X);
  return linear_jet(F.correction(X, l), F.correction(X, u), l, dl, u, du, Y);
}

template <class Real>
Jacobian2<Real> jacobian_of(const Real& lam, const FiberJet<Real>& j) {
  return {1 / lam, lam + j.cy, j.cx};
}

template <class Map, class Real = map_real_t<Map>>
Jacobian2<Real> jacobian_at(const Map& F, const Real& X, const Real& Y) {
  return jacobian_of(F.lambda(), F.correction(X, Y));
}

}  // namespace detail

// Quintic smoothstep profile rho: 0 below 0, 1 above 1.
template <class Real>
std::pair<Real, Real> rho_d(const Real& t) {
  if (t <= 0) return {Real(0), Real(0)};
  if (t >= 1) return {Real(1), Real(0)};
  return {smoothstep5(t), smoothstep5_d(t)};
}
inline constexpr double kRhoMaxSlope = 15.0 / 8.0;
// C = 2 C_x with C_x = 1 + max|rho'| max|phi'| and |phi'| < 1.
inline constexpr double kBlendConstant = 2 * (1 + kRhoMaxSlope);

// View of L_Pi(F) for any map exposing lambda() and correction(): the fiber map on each vertical segment of Pi is
// replaced by the affine map with the same endpoint images.
template <class Map>
struct StripeLinearization {
  using Real = map_real_t<Map>;
  const Map& F;
  const StripeShape<Real>& P;

  const Real& lambda() const { return F.lambda(); }
  FiberJet<Real> correction(const Real& X, const Real& Y) const {
    if (!P.contains(X, Y)) return F.correction(X, Y);
    return detail::linearized_jet(F, P, X, Y);
  }
};

struct StripeSampling {
  int nx = 65;  // fibers across the stripe's abscissa range
  int ny = 17;  // points per vertical segment, endpoints included
};

namespace detail {

template <class Real, class Fn>
void for_each_fiber(const StripeShape<Real>& P, const StripeSampling& s, Fn&& fn) {
  auto xr = P.x();
  for (int a = 0; a < s.nx; ++a) {
    Real X = xr.lo + xr.length() * Real(a) / Real(s.nx - 1);
    auto seg = P.segment(X);
    std::vector<Real> ys(s.ny);
    for (int b = 0; b < s.ny; ++b) ys[b] = seg[0] + (seg[1] - seg[0]) * Real(b) / Real(s.ny - 1);
    ys.back() = seg[1];
    fn(X, ys);
  }
}

}  // namespace detail

// dist_Pi(G, H): sup over the stripe sample grid of ||dG - dH||.
template <class MapG, class MapH, class Real = map_real_t<MapG>>
Real stripe_distance(const MapG& G, const MapH& H, const StripeShape<Real>& P, const StripeSampling& s = {}) {
  Real d = 0;
  detail::for_each_fiber(P, s, [&](const Real& X, const std::vector<Real>& ys) {
    for (auto& Y : ys) d = std::max(d, op_norm_diff(detail::jacobian_at(G, X, Y), detail::jacobian_at(H, X, Y)));
  });
  return d;
}

// delta: max over sampled fibers of the op-norm diameter of {dF(p) : p on the fiber's segment of Pi}.
template <class Map, class Real = map_real_t<Map>>
Real vertical_oscillation(const Map& F, const StripeShape<Real>& P, const StripeSampling& s = {}) {
  Real d = 0;
  detail::for_each_fiber(P, s, [&](const Real& X, const std::vector<Real>& ys) {
    std::vector<Jacobian2<Real>> js;
    js.reserve(ys.size());
    for (auto& Y : ys) js.push_back(detail::jacobian_at(F, X, Y));
    for (std::size_t i = 0; i < js.size(); ++i)
      for (std::size_t j = i + 1; j < js.size(); ++j) d = std::max(d, op_norm_diff(js[i], js[j]));
  });
  return d;
}

template <class Map, class Real = map_real_t<Map>>
Report check_delta_lemma(const Map& F, const StripeShape<Real>& P, const StripeSampling& s = {}) {
  Report rep;
  rep.title = "linearization distance";
  StripeLinearization<Map> L{F, P};
  double dist = to_double(stripe_distance(F, L, P, s));
  double delta = to_double(vertical_oscillation(F, P, s));
  double bound = std::sqrt(5.0) * delta + 1e-6;
  std::ostringstream os;
  os << "delta " << delta << ", ratio " << (delta > 0 ? dist / delta : 0.0);
  rep.add("dist_Pi(F, L_Pi F) <= sqrt5 delta", dist <= bound, dist, bound, os.str());
  return rep;
}

enum class PatchKind { linearized, smoothed };

template <class Real>
struct Patch {
  std::shared_ptr<const StripeShape<Real>> stripe;
  PatchKind kind = PatchKind::linearized;
  Real alpha{};  // blend band width, smoothed patches only
};

// A base map with its fiber maps replaced on a list of stripes. Each patch acts on the map built from the patches
// before it, so re-linearizing a stripe composes as the operator would.
template <class Real>
class BasicPerturbedMap {
 public:
  using Point = BasicTorusPoint<Real>;
  using Geo = BasicGeometry<Real>;
  using Base = BasicAnosovMap<Real>;

  explicit BasicPerturbedMap(std::shared_ptr<const Base> base) : base_(std::move(base)) {
    if (!base_) throw std::invalid_argument("PerturbedMap: missing base map");
  }
  explicit BasicPerturbedMap(const Base& base) : BasicPerturbedMap(std::make_shared<const Base>(base)) {}

  BasicPerturbedMap with_patch(Patch<Real> p) const {
    if (!p.stripe) throw std::invalid_argument("PerturbedMap: patch without a stripe");
    BasicPerturbedMap out = *this;
    out.patches_.push_back(std::move(p));
    return out;
  }

  const Base& base() const { return *base_; }
  std::shared_ptr<const Base> base_ptr() const { return base_; }
  const std::vector<Patch<Real>>& patches() const { return patches_; }
  const Geo& geometry() const { return base_->geometry(); }
  const MapBudgets& budgets() const { return base_->budgets(); }
  const LinearModel& linear() const { return base_->linear(); }
  const Real& lambda() const { return base_->lambda(); }
  const BasicFrame<Real>& frame() const { return base_->frame(); }

  // Index of the last patch containing the chart point, or -1.
  int patch_at(const Real& X, const Real& Y) const { return patch_below(patches_.size(), X, Y); }

  FiberJet<Real> correction(const Real& X, const Real& Y) const { return jet_upto(patches_.size(), X, Y); }

  Point apply(const Point& p) const {
    auto xy = geometry().chart_of(p);
    if (patch_at(xy[0], xy[1]) < 0) return base_->apply(p);
    Real c = correction(xy[0], xy[1]).c;
    return geometry().chart().point(apply_linear(linear(), p), Real(0), c);
  }

  Point apply_inverse(const Point& p) const {
    Point z = base_->apply_inverse(p);
    auto xy = geometry().chart_of(z);
    if (patch_at(xy[0], xy[1]) < 0) return z;
    Real Yz = xy[1] + base_->correction(xy[0], xy[1]).c / lambda();
    return geometry().point_of(xy[0], solve_patched(xy[0], Yz, xy[1]));
  }

  // Same contract as the base map. The patched fiber map sends each patch segment onto the base image of that
  // segment, so the base preimage is correct unless it falls into a patch.
  Real fiber_preimage(const Real& X, const Real& Yz, const Real* hint = nullptr) const {
    Real Yb = base_->fiber_preimage(X, Yz, hint);
    if (patch_at(X, Yb) < 0) return Yb;
    return solve_patched(X, Yz, Yb);
  }

  bool fiber_uniform(const Real& X0, const Real& X1, const Real& Y) const {
    if (!base_->fiber_uniform(X0, X1, Y)) return false;
    const auto& g = geometry();
    int band = g.RQ(0).contains(Y) ? 0 : g.RQ(1).contains(Y) ? 1 : -1;
    for (auto& p : patches_) {
      const auto& s = *p.stripe;
      auto h = s.hull(X0, X1);
      if (h.hi < h.lo) continue;
      // a base solve may move the point anywhere inside its RQ band
      Real lo = band < 0 ? Y : g.RQ(band).lo, hi = band < 0 ? Y : g.RQ(band).hi;
      if (hi >= h.lo && lo <= h.hi) return false;
    }
    return true;
  }

  Jacobian2<Real> differential_chart(const Real& X, const Real& Y) const {
    return detail::jacobian_of(lambda(), correction(X, Y));
  }
  Jacobian2<Real> differential(const Point& p) const {
    auto xy = geometry().chart_of(p);
    return differential_chart(xy[0], xy[1]);
  }

  // Correction of the map made of the base and patches [0, n).
  FiberJet<Real> jet_upto(std::size_t n, const Real& X, const Real& Y) const {
    int k = patch_below(n, X, Y);
    if (k < 0) return base_->correction(X, Y);
    const auto& P = patches_[k];
    const auto& s = *P.stripe;
    auto [l, dl, u, du] = s.bounds(X);
    auto L = detail::linear_jet(jet_upto(k, X, l), jet_upto(k, X, u), l, dl, u, du, Y);
    if (P.kind == PatchKind::linearized) return L;
    auto C = jet_upto(k, X, Y);
    auto [r1, dr1] = rho_d(Real((Y - l) / P.alpha));
    auto [r2, dr2] = rho_d(Real((u - Y) / P.alpha));
    Real r = r1 * r2;
    Real ry = (dr1 * r2 - r1 * dr2) / P.alpha;
    Real rx = (-dr1 * dl * r2 + r1 * dr2 * du) / P.alpha;
    Real d = L.c - C.c;
    return {C.c + r * d, C.cx + rx * d + r * (L.cx - C.cx), C.cy + ry * d + r * (L.cy - C.cy)};
  }

 private:
  int patch_below(std::size_t n, const Real& X, const Real& Y) const {
    for (std::size_t k = n; k-- > 0;)
      if (patches_[k].stripe->contains(X, Y)) return int(k);
    return -1;
  }

  // Solve lambda (Y - Yz) + c(X, Y) = 0 on the segment of the outermost patch containing (X, Yb).
  Real solve_patched(const Real& X, const Real& Yz, const Real& Yb) const {
    Real lo{}, hi{};
    bool have = false;
    for (auto& p : patches_) {
      if (!p.stripe->contains(X, Yb)) continue;
      auto seg = p.stripe->segment(X);
      if (!have || seg[0] < lo) lo = seg[0];
      if (!have || seg[1] > hi) hi = seg[1];
      have = true;
    }
    const Real& lam = lambda();
    auto fd = [&](const Real& Y) -> std::pair<Real, Real> {
      auto j = correction(X, Y);
      return {lam * (Y - Yz) + j.c, lam + j.cy};
    };
    if (fd(lo).first >= 0) return lo;
    if (fd(hi).first <= 0) return hi;
    using std::abs;
    Real tol = (abs(lo) + abs(hi)) * eps_of<Real>() * 8;
    return monotone_solve(fd, lo, hi, Real(0), tol);
  }

  std::shared_ptr<const Base> base_;
  std::vector<Patch<Real>> patches_;
};
using PerturbedMap = BasicPerturbedMap<double>;

template <class Real>
BasicPerturbedMap<Real> as_perturbed(const BasicPerturbedMap<Real>& F) {
  return F;
}
template <class Real>
BasicPerturbedMap<Real> as_perturbed(const BasicAnosovMap<Real>& F) {
  return BasicPerturbedMap<Real>(F);
}

namespace detail {

// The fiber map must stay increasing: the image of the lower end lies below the image of the upper end.
template <class Map, class Real>
void check_endpoint_order(const Map& F, const StripeShape<Real>& P) {
  const Real& lam = F.lambda();
  auto xr = P.x();
  for (int i = 0; i < 65; ++i) {
    Real X = xr.lo + xr.length() * Real(i) / Real(64);
    auto seg = P.segment(X);
    Real a = lam * seg[0] + F.correction(X, seg[0]).c, b = lam * seg[1] + F.correction(X, seg[1]).c;
    if (!(a < b)) {
      std::ostringstream os;
      os << "linearize_on_stripe: endpoint images out of order on the fiber at " << point_str(to_double(X), to_double(seg[0]));
      throw std::logic_error(os.str());
    }
  }
}

}  // namespace detail

// L_Pi(F).
template <class Map, class Real = map_real_t<Map>>
BasicPerturbedMap<Real> linearize_on_stripe(const Map& F, std::shared_ptr<const StripeShape<map_real_t<Map>>> P) {
  if (!P) throw std::invalid_argument("linearize_on_stripe: missing stripe");
  detail::check_endpoint_order(F, *P);
  return as_perturbed(F).with_patch({std::move(P), PatchKind::linearized, Real(0)});
}
template <class Map, class Real = map_real_t<Map>>
BasicPerturbedMap<Real> linearize_on_stripe(const Map& F, const RoughStripe<Real>& P) {
  return linearize_on_stripe(F, std::shared_ptr<const StripeShape<Real>>(std::make_shared<const RoughStripe<Real>>(P)));
}

namespace detail {

// Points of the stripe with extra samples inside the two bands of width alpha next to dh Pi.
template <class Real, class Fn>
void for_each_band_point(const StripeShape<Real>& P, const Real& alpha, const StripeSampling& s, Fn&& fn) {
  auto xr = P.x();
  for (int a = 0; a < s.nx; ++a) {
    Real X = xr.lo + xr.length() * Real(a) / Real(s.nx - 1);
    auto seg = P.segment(X);
    for (int b = 0; b < s.ny; ++b) fn(X, seg[0] + (seg[1] - seg[0]) * Real(b) / Real(s.ny - 1));
    for (int b = 1; b < s.ny; ++b) {
      Real d = alpha * Real(b) / Real(s.ny);
      fn(X, seg[0] + d);
      fn(X, seg[1] - d);
    }
  }
}

}  // namespace detail

// F = rho1 rho2 L_Pi(F0) + (1 - rho1 rho2) F0 on Pi, F0 elsewhere. alpha <= 0 selects a quarter of the minimal
// width; alpha is halved until the C0 distance to L_Pi(F0) drops below gamma.
template <class Map, class Real = map_real_t<Map>>
BasicPerturbedMap<Real> smooth_blend(const Map& F0, std::shared_ptr<const StripeShape<map_real_t<Map>>> stripe,
                                     Real alpha, const Real& gamma, const StripeSampling& s = {}, int ladder = 60) {
  if (!stripe) throw std::invalid_argument("smooth_blend: missing stripe");
  const auto& P = *stripe;
  if (!(gamma > 0)) throw std::invalid_argument("smooth_blend: gamma must be positive");
  if (alpha <= 0) alpha = P.min_width() / 4;
  if (!(alpha < P.min_width() / 2)) {
    std::ostringstream os;
    os << "smooth_blend: alpha " << to_double(alpha) << " must be below half the minimal stripe width "
       << to_double(P.min_width());
    throw std::invalid_argument(os.str());
  }
  detail::check_endpoint_order(F0, P);
  auto base = as_perturbed(F0);
  StripeLinearization<Map> L{F0, P};
  Real achieved = 0;
  for (int step = 0; step <= ladder; ++step, alpha /= 2) {
    auto F = base.with_patch({stripe, PatchKind::smoothed, alpha});
    achieved = 0;
    using std::abs;
    detail::for_each_band_point(P, alpha, s, [&](const Real& X, const Real& Y) {
      achieved = std::max(achieved, Real(abs(F.correction(X, Y).c - L.correction(X, Y).c)));
    });
    if (achieved < gamma) return F;
  }
  std::ostringstream os;
  os << "smooth_blend: C0 distance to L_Pi(F0) is still " << to_double(achieved) << " >= gamma " << to_double(gamma)
     << " after " << ladder << " halvings of alpha";
  throw std::runtime_error(os.str());
}
template <class Map, class Real = map_real_t<Map>>
BasicPerturbedMap<Real> smooth_blend(const Map& F0, const RoughStripe<Real>& P, Real alpha, const Real& gamma,
                                     const StripeSampling& s = {}, int ladder = 60) {
  return smooth_blend(F0, std::shared_ptr<const StripeShape<Real>>(std::make_shared<const RoughStripe<Real>>(P)),
                      alpha, gamma, s, ladder);
}

// Measured constants of a smoothed patch: dist_C1(F0, F) on Pi against dist_Pi(F0, L_Pi F0), the C0 distance to
// L_Pi(F0), C1 matching across dh Pi and locality.
template <class Map, class Real = map_real_t<Map>>
Report check_blend(const Map& F0, const BasicPerturbedMap<Real>& F, const StripeShape<Real>& P, const Real& gamma,
                   const StripeSampling& s = {}) {
  using std::abs;
  Report rep;
  rep.title = "smoothed linearization";
  if (F.patches().empty() || F.patches().back().kind != PatchKind::smoothed)
    throw std::invalid_argument("check_blend: F must end with a smoothed patch");
  const Real alpha = F.patches().back().alpha;
  StripeLinearization<Map> L{F0, P};
  const Real& lam = F0.lambda();
  Real c0 = 0, c1 = 0, to_L = 0;
  detail::for_each_band_point(P, alpha, s, [&](const Real& X, const Real& Y) {
    auto a = F.correction(X, Y), b = F0.correction(X, Y);
    c0 = std::max(c0, Real(abs(a.c - b.c)));
    c1 = std::max(c1, op_norm_diff(detail::jacobian_of(lam, a), detail::jacobian_of(lam, b)));
    to_L = std::max(to_L, Real(abs(a.c - L.correction(X, Y).c)));
  });
  double dist_pi = to_double(stripe_distance(F0, L, P, s));
  double dist_c1 = to_double(std::max(c0, c1));
  double ratio = dist_pi > 0 ? dist_c1 / dist_pi : 0.0;
  std::ostringstream os;
  os << "dist_C1 " << dist_c1 << ", dist_Pi " << dist_pi << ", alpha " << to_double(alpha);
  rep.add("dist_C1(F0, F) <= C dist_Pi(F0, L_Pi F0)", dist_c1 <= kBlendConstant * dist_pi + 1e-12, ratio,
          kBlendConstant, os.str());
  rep.add("C0 distance to L_Pi(F0) < gamma", to_L < gamma, to_double(to_L), to_double(gamma));

  // one-sided derivatives at dh Pi: just inside, F has the jet of F0
  Real jump = 0, outside = 0;
  auto xr = P.x();
  for (int a = 0; a < s.nx; ++a) {
    Real X = xr.lo + xr.length() * Real(a) / Real(s.nx - 1);
    auto seg = P.segment(X);
    Real eps = alpha * Real(1e-6);
    for (Real Y : {Real(seg[0] + eps), Real(seg[1] - eps)}) {
      auto u = F.correction(X, Y), v = F0.correction(X, Y);
      jump = std::max({jump, Real(abs(u.cx - v.cx)), Real(abs(u.cy - v.cy))});
    }
    const auto& g = F.geometry();
    Real out_eps = P.min_width() * Real(1e-3);
    for (Real Y : {Real(seg[0] - out_eps), Real(seg[1] + out_eps)}) {
      if (P.contains(X, Y)) continue;
      auto p = g.point_of(X, Y);
      auto a1 = F.apply(p), b1 = F0.apply(p);
      outside = std::max(outside, Real(abs(a1.u - b1.u) + abs(a1.v - b1.v)));
    }
  }
  rep.add("C1 across dh Pi", jump <= Real(1e-8), to_double(jump), 1e-8);
  rep.add("F = F0 outside Pi", outside == 0, to_double(outside), 0);
  return rep;
}

// Double-precision interface to a map of any precision, for the class predicate suite.
template <class Map>
struct DoubleView {
  using Real = map_real_t<Map>;
  const Map& F;

  TorusPoint apply(const TorusPoint& p) const {
    auto q = F.apply(BasicTorusPoint<Real>{Real(p.u), Real(p.v)});
    return {to_double(q.u), to_double(q.v)};
  }
  Jacobian2<double> differential(const TorusPoint& p) const {
    auto j = F.differential(BasicTorusPoint<Real>{Real(p.u), Real(p.v)});
    return {to_double(j.a1), to_double(j.a2), to_double(j.delta)};
  }
};

struct LevelsOptions {
  StripeOptions stripes{};         // W computation for each stage (anchors, grid)
  StripeResolution resolution{};   // boundary accuracy of the linearized stripes
  StripeSampling sampling{17, 9};  // per-stripe sample grid for the stage checks
  int class_grid = 100;            // grid of check_delta_init per stage
  double w_tolerance = 1e-30;      // sampled curve equality of W_k, chart units
  double affine_tolerance = 1e-40; // relative, re-linearization of an affine fiber map
};

template <class Real>
struct StageSummary {
  int level = 0;
  int independent = 0;  // distinct stripes linearized at this stage
  int dependent = 0;    // stripes inside a stripe of a level in (N, level)
  double w_change = 0;  // max movement of the sampled W_j, j <= level
  double oscillation = 0;  // max vertical oscillation delta of F_{level-1} on the new stripes
  double closeness = 0;    // max dist_Pi(F_level, F0) on the new stripes
};

template <class Real>
struct LevelsResult {
  BasicPerturbedMap<Real> map;
  std::vector<StageSummary<Real>> stages;
  StripeSet<Real> stripes;  // W of the final map to level N1
  Report report;
};

namespace detail {

template <class Real>
bool same_stripe(const StripeShape<Real>& a, const StripeShape<Real>& b, double tol) {
  using std::abs;
  auto xr = a.x();
  for (int i = 0; i <= 16; ++i) {
    Real X = xr.lo + xr.length() * Real(i) / Real(16);
    auto s = a.segment(X), t = b.segment(X);
    if (abs(s[0] - t[0]) > Real(tol) || abs(s[1] - t[1]) > Real(tol)) return false;
  }
  return true;
}

template <class Real>
bool interiors_meet(const StripeShape<Real>& a, const StripeShape<Real>& b) {
  auto xr = a.x();
  for (int i = 0; i <= 16; ++i) {
    Real X = xr.lo + xr.length() * Real(i) / Real(16);
    auto s = a.segment(X), t = b.segment(X);
    if (s[0] < t[1] && t[0] < s[1]) return true;
  }
  return false;
}

// Largest |delta c| / (1 + |c|) between two maps on the stripe sample grid.
template <class MapA, class MapB, class Real = map_real_t<MapA>>
Real relative_gap(const MapA& A, const MapB& B, const StripeShape<Real>& P, const StripeSampling& s) {
  using std::abs;
  Real d = 0;
  for_each_fiber(P, s, [&](const Real& X, const std::vector<Real>& ys) {
    for (auto& Y : ys) {
      auto a = A.correction(X, Y), b = B.correction(X, Y);
      Real sc = 1 + abs(a.c) + abs(a.cx) + abs(a.cy);
      d = std::max({d, Real(abs(a.c - b.c) / sc), Real(abs(a.cx - b.cx) / sc), Real(abs(a.cy - b.cy) / sc)});
    }
  });
  return d;
}

template <class Real>
double w_change(const StripeSet<Real>& A, const StripeSet<Real>& B, int upto, std::string& where) {
  double worst = 0;
  for (std::size_t c = 0; c < A.chains.size(); ++c)
    for (int m = 0; m <= upto; ++m) {
      const auto& a = A.chains[c].levels[m];
      const auto& b = B.chains[c].levels[m];
      for (int side = 0; side < 2; ++side) {
        const auto& u = side ? a.upper : a.lower;
        const auto& v = side ? b.upper : b.lower;
        if (u.family != v.family || u.valid != v.valid) {
          where = "chain " + std::to_string(c) + " level " + std::to_string(m) + ": piece changed";
          return INFINITY;
        }
        for (std::size_t k = 0; k < u.y.size(); ++k) {
          if (!u.valid[k]) continue;
          double d = to_double(abs(u.y[k] - v.y[k]));
          if (d > worst) {
            worst = d;
            where = "chain " + std::to_string(c) + " level " + std::to_string(m);
          }
        }
      }
    }
  return worst;
}

}  // namespace detail

// F_{N1} of the level-by-level linearization: F_N = F0 and F_k linearizes F_{k-1} on its independent stripes of
// level k. Stripes are the ones around the stripe anchors. Each stage is checked: W_j for j <= k unchanged,
// earlier stripes untouched, stripes already linearized are fixed points of the operator, class predicates,
// closeness to F0 and unit distortion on the new stripes.
template <class Real>
LevelsResult<Real> linearize_levels(const BasicAnosovMap<Real>& F0, int N, int N1, const LevelsOptions& opt = {}) {
  const int L = std::max(frame_level(F0), vertical_edge_level(F0).level);
  if (!(N > L)) throw std::invalid_argument("linearize_levels: need N > L = " + std::to_string(L));
  if (N1 < N) throw std::invalid_argument("linearize_levels: need N1 >= N");
  auto base = std::make_shared<const BasicAnosovMap<Real>>(F0);
  LevelsResult<Real> R{BasicPerturbedMap<Real>(base), {}, {}, {}};
  R.report.title = "level linearization";
  if (N1 == N) {
    R.report.add("N1 = N: F_N1 = F0", R.map.patches().empty(), 0, 0);
    return R;
  }
  const AnosovMap ref(F0.geometry().spec(), F0.budgets());
  const double delta_init = F0.budgets().delta_init;

  auto S = compute_W(R.map, N + 1, opt.stripes);
  for (auto& it : S.report.items)
    if (!it.pass) R.report.add("W(F_" + std::to_string(N) + "): " + it.name, false, it.value, it.bound, it.detail);
  std::vector<std::pair<int, std::shared_ptr<const StripeShape<Real>>>> done;  // (level, stripe)

  for (int k = N + 1; k <= N1; ++k) {
    const std::string tag = "stage " + std::to_string(k) + ": ";
    StageSummary<Real> st;
    st.level = k;
    std::vector<std::shared_ptr<const StripeShape<Real>>> fresh, dependent;
    for (std::size_t c = 0; c < S.chains.size(); ++c) {
      const auto& ch = S.chains[c];
      if (!ch.levels[k].is_stripe) continue;
      std::shared_ptr<const StripeShape<Real>> P = stripe_around(R.map, ch.X, ch.Y, k, opt.resolution);
      if (ch.dependent(k, N)) {
        dependent.push_back(P);
        continue;
      }
      bool dup = false;
      for (auto& q : fresh) {
        if (detail::same_stripe(*P, *q, opt.w_tolerance)) {
          dup = true;
          break;
        }
        if (detail::interiors_meet(*P, *q))
          throw std::logic_error("linearize_levels: independent stripes of level " + std::to_string(k) + " overlap");
      }
      for (auto& [lv, q] : done)
        if (detail::interiors_meet(*P, *q))
          throw std::logic_error("linearize_levels: a level-" + std::to_string(k) +
                                 " stripe classified independent meets a linearized stripe of level " +
                                 std::to_string(lv));
      if (!dup) fresh.push_back(P);
    }
    st.independent = int(fresh.size());
    st.dependent = int(dependent.size());

    // dependent stripes already carry affine fiber maps, so linearizing them changes nothing
    {
      Real gap = 0;
      for (auto& P : dependent) gap = std::max(gap, detail::relative_gap(R.map, linearize_on_stripe(R.map, P), *P, opt.sampling));
      R.report.add(tag + "dependent stripes are fixed by L_Pi", gap <= Real(opt.affine_tolerance), to_double(gap),
                   opt.affine_tolerance, std::to_string(dependent.size()) + " stripes");
    }

    auto prev = R.map;
    for (auto& P : fresh) st.oscillation = std::max(st.oscillation, to_double(vertical_oscillation(prev, *P, opt.sampling)));
    for (auto& P : fresh) {
      detail::check_endpoint_order(R.map, *P);
      R.map = R.map.with_patch({P, PatchKind::linearized, Real(0)});
    }

    // earlier stripes: bit-identical fiber maps, and fixed points of L_Pi
    {
      long changed = 0;
      Real gap = 0;
      for (auto& [lv, P] : done) {
        detail::for_each_fiber(*P, opt.sampling, [&](const Real& X, const std::vector<Real>& ys) {
          for (auto& Y : ys) {
            auto a = R.map.correction(X, Y), b = prev.correction(X, Y);
            if (a.c != b.c || a.cx != b.cx || a.cy != b.cy) ++changed;
          }
        });
        gap = std::max(gap, detail::relative_gap(R.map, linearize_on_stripe(R.map, P), *P, opt.sampling));
      }
      R.report.add(tag + "earlier stripes untouched", changed == 0, double(changed), 0,
                   std::to_string(done.size()) + " stripes");
      R.report.add(tag + "earlier stripes are fixed by L_Pi", gap <= Real(opt.affine_tolerance), to_double(gap),
                   opt.affine_tolerance);
    }

    // W_j(F_k) = W_j(F_{k-1}) for j <= k; the set computed here feeds the next stage
    auto S2 = compute_W(R.map, k < N1 ? k + 1 : k, opt.stripes);
    std::string where;
    st.w_change = detail::w_change(S, S2, k, where);
    R.report.add(tag + "W_j unchanged for j <= " + std::to_string(k), st.w_change <= opt.w_tolerance, st.w_change,
                 opt.w_tolerance, where);
    for (auto& it : S2.report.items)
      if (!it.pass) R.report.add(tag + "W(F_k): " + it.name, false, it.value, it.bound, it.detail);
    S = std::move(S2);

    // new stripes: delta_init-close to F0 in dist_Pi and affine on every vertical segment
    {
      Real close = 0, distortion = 0;
      for (auto& P : fresh) {
        close = std::max(close, stripe_distance(R.map, F0, *P, opt.sampling));
        detail::for_each_fiber(*P, opt.sampling, [&](const Real& X, const std::vector<Real>& ys) {
          Real lo = 1e300, hi = 0;
          // interior points: at the endpoints membership is decided up to rounding
          for (std::size_t i = 1; i + 1 < ys.size(); ++i) {
            const Real& Y = ys[i];
            Real a2 = R.map.differential_chart(X, Y).a2;
            lo = std::min(lo, a2);
            hi = std::max(hi, a2);
          }
          distortion = std::max(distortion, Real(hi / lo - 1));
        });
      }
      st.closeness = to_double(close);
      std::ostringstream os;
      os << "delta " << st.oscillation;
      R.report.add(tag + "dist_Pi(F_k, F0) <= delta_init on new stripes", close <= Real(delta_init), st.closeness,
                   delta_init, os.str());
      R.report.add(tag + "unit distortion inside new stripes", distortion <= Real(opt.affine_tolerance),
                   to_double(distortion), opt.affine_tolerance);
    }

    // class predicates; grid points rarely fall in thin stripes, so stripe midpoints are added
    {
      std::vector<TorusPoint> extra;
      for (auto& P : fresh)
        for (int a = 0; a < 9; ++a) {
          Real X = P->x().lo + P->x().length() * Real(a + 0.5) / 9;
          auto seg = P->segment(X);
          auto p = R.map.geometry().point_of(X, (seg[0] + seg[1]) / 2);
          extra.push_back({to_double(p.u), to_double(p.v)});
        }
      DoubleView<BasicPerturbedMap<Real>> view{R.map};
      R.report.merge(check_delta_init(ref, view, delta_init, opt.class_grid, extra), tag);
    }

    for (auto& P : fresh) done.emplace_back(k, P);
    R.stages.push_back(st);
  }
  R.stripes = std::move(S);
  return R;
}

}  // namespace semithick
