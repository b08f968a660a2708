#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "numeric.hpp"
#include "report.hpp"

namespace semithick {

// a_1 = first, a_i = coeff / i^2 for i >= 2.  first == coeff is the plain inverse-square rule.
template <class Real>
struct BasicGapRule {
  Real first = 0;
  Real coeff = 0;

  static BasicGapRule inverse_square(const Real& a) { return {a, a}; }

  Real a(int i) const {
    if (i == 1) return first;
    return coeff / (Real(i) * Real(i));
  }

  // sum_{i <= n} 1/i^2, summed small terms first
  static Real zeta2_partial(int n) {
    Real s = 0;
    for (int i = n; i >= 1; --i) s += 1 / (Real(i) * Real(i));
    return s;
  }

  Real partial(int n) const {
    if (n <= 0) return 0;
    return first + coeff * (zeta2_partial(n) - 1);
  }

  // sum_{i > n} a_i, closed form
  Real tail(int n) const {
    if (n <= 0) return total();
    Real z = pi_of<Real>() * pi_of<Real>() / 6;
    return coeff * (z - zeta2_partial(n));
  }

  Real total() const { return first + tail(1); }

  template <class Other>
  BasicGapRule<Other> as() const {
    return {Other(first), Other(coeff)};
  }
};
using GapRule = BasicGapRule<double>;

enum class MemberKind { in, in_gap, unresolved };

struct Membership {
  MemberKind kind = MemberKind::unresolved;
  int step = 0;       // gap step for in_gap
  long long index = 0;  // gap index within the step, left to right
};

template <class Real>
class BasicCantorSet {
 public:
  BasicCantorSet() = default;

  // mass_after_first: |base| - a_1 when known exactly (avoids cancellation); <= 0 means derive it.
  // resolution: levels stop once ell_k < resolution * |base| (<= 0: a few ulps); below that cylinders map affinely.
  BasicCantorSet(Interval<Real> base, BasicGapRule<Real> rule, int depth, Real mass_after_first = Real(-1),
                 double resolution = -1)
      : base_(base), rule_(rule), depth_(depth), resolution_(resolution) {
    if (depth < 1) throw std::invalid_argument("build_cantor: depth must be >= 1");
    if (depth > 24) throw std::invalid_argument("build_cantor: depth above 24 is not realizable");
    if (!(base.hi > base.lo)) throw std::invalid_argument("build_cantor: empty base interval");
    if (rule.first < 0 || rule.coeff < 0) throw std::invalid_argument("build_cantor: negative gap");
    if (rule.coeff / 4 > rule.first) throw std::invalid_argument("build_cantor: gap rule not decreasing");
    Real len = base.length();
    Real total = rule.total();
    if (!(total < len)) {
      std::ostringstream os;
      os << "build_cantor: gap rule sum " << to_double(total) << " is not below |base| = " << to_double(len);
      throw std::invalid_argument(os.str());
    }
    using std::ldexp;
    rem1_ = mass_after_first > 0 ? mass_after_first : len - rule.first;

    ell_.push_back(len);
    gap_.push_back(0);
    Real floor_len = resolution > 0 ? len * Real(resolution) : len * eps_of<Real>() * 4;
    Real sum_after_first = 0;
    for (int k = 1; k < 4000; ++k) {
      if (k >= 2) sum_after_first += rule.a(k);
      Real l = ldexp(rem1_ - sum_after_first, -k);
      gap_.push_back(ldexp(rule.a(k), -(k - 1)));
      ell_.push_back(l);
      if (l < floor_len && k > depth + 1) break;
    }
    max_level_ = static_cast<int>(ell_.size()) - 1;
    if (max_level_ < depth + 1) throw std::invalid_argument("build_cantor: depth beyond numeric resolution");

    gaps_.resize(depth);
    for (int i = 1; i <= depth; ++i) {
      std::size_t count = std::size_t(1) << (i - 1);
      auto& row = gaps_[i - 1];
      row.resize(count);
      for (std::size_t j = 0; j < count; ++j) {
        Real left = cover_left(j, i - 1);
        row[j] = {left + ell_[i], left + (ell_[i] + gap_[i])};
      }
    }
  }

  const Interval<Real>& base() const { return base_; }
  const BasicGapRule<Real>& rule() const { return rule_; }
  int depth() const { return depth_; }
  int max_level() const { return max_level_; }
  // length of a level-k cover interval, k in [0, max_level]
  const Real& ell(int k) const { return ell_.at(k); }
  // individual gap length at step k >= 1
  const Real& gap(int k) const { return gap_.at(k); }
  const std::vector<Interval<Real>>& gaps(int step) const { return gaps_.at(step - 1); }
  const Real& mass_after_first() const { return rem1_; }

  // Left end of the level-n cover interval whose word is the n low bits of `bits`, first symbol most significant.
  Real cover_left(std::size_t bits, int n) const {
    Real x = base_.lo;
    for (int k = 1; k <= n; ++k) {
      if ((bits >> (n - k)) & 1u) x += (ell_[k] + gap_[k]);
    }
    return x;
  }

  Real cover_left(const std::vector<int>& w) const {
    if (static_cast<int>(w.size()) > max_level_) throw std::invalid_argument("cylinder: word beyond resolution");
    Real x = base_.lo;
    for (std::size_t k = 1; k <= w.size(); ++k) {
      if (w[k - 1]) x += (ell_[k] + gap_[k]);
    }
    return x;
  }

  Interval<Real> cylinder(const std::vector<int>& w) const {
    if (static_cast<int>(w.size()) > depth_) {
      std::ostringstream os;
      os << "cylinder: word length " << w.size() << " exceeds depth " << depth_;
      throw std::invalid_argument(os.str());
    }
    return cylinder_any(w);
  }

  // Right ends use the canonical form (last 0-branch ancestor) so that equal endpoints compare equal.
  Interval<Real> cylinder_any(const std::vector<int>& w) const {
    if (static_cast<int>(w.size()) > max_level_) throw std::invalid_argument("cylinder: word beyond resolution");
    Real x = base_.lo;
    Real e = base_.hi;
    for (std::size_t k = 1; k <= w.size(); ++k) {
      if (w[k - 1])
        x += (ell_[k] + gap_[k]);
      else
        e = x + ell_[k];
    }
    return {x, e};
  }

  // Gap-tree bounds for Leb(C cap I_w): realized gaps inside I_w counted, analytic lengths summed.
  std::pair<Real, Real> cylinder_measure(const std::vector<int>& w) const {
    using std::ldexp;
    const int n = static_cast<int>(w.size());
    Interval<Real> iv = cylinder(w);
    Real removed = 0;
    for (int i = n + 1; i <= depth_; ++i) {
      const auto& row = gaps_[i - 1];
      auto first = std::lower_bound(row.begin(), row.end(), iv.lo,
                                    [](const Interval<Real>& g, const Real& x) { return g.lo < x; });
      std::size_t count = 0;
      for (auto it = first; it != row.end() && it->hi <= iv.hi; ++it) ++count;
      removed += Real(count) * gap_[i];
    }
    Real upper = ell_[n] - removed;
    Real lower = upper - ldexp(rule_.tail(depth_), -n);
    return {lower, upper};
  }

  // upper = |base| - sum_{i<=D} a_i, lower = upper - tail(D)
  std::pair<Real, Real> measure_bounds() const {
    Real upper = rem1_ - (rule_.partial(depth_) - rule_.first);
    Real lower = upper - rule_.tail(depth_);
    return {lower, upper};
  }

  Real measure() const { return measure_bounds().first; }

  // Gap-tree bounds for Leb(C cap I) over a cover interval I, by summing realized gaps inside I.
  std::pair<Real, Real> measure_in(const Interval<Real>& iv, int level) const {
    using std::ldexp;
    Real removed = 0;
    for (int i = level + 1; i <= depth_; ++i) {
      const auto& row = gaps_[i - 1];
      auto first = std::lower_bound(row.begin(), row.end(), iv.lo,
                                    [](const Interval<Real>& g, const Real& x) { return g.lo < x; });
      for (auto it = first; it != row.end() && it->hi <= iv.hi; ++it) removed += it->length();
    }
    Real upper = iv.length() - removed;
    Real lower = upper - ldexp(rule_.tail(depth_), -level);
    return {lower, upper};
  }

  Membership membership(const Real& x) const { return membership(x, depth_); }

  Membership membership(const Real& x, int depth) const {
    if (x < base_.lo || x > base_.hi) throw std::out_of_range("membership: point outside base");
    depth = std::min(depth, depth_);
    if (x == base_.lo || x == base_.hi) return {MemberKind::in, 0, 0};
    Real s = base_.lo;
    long long idx = 0;
    for (int k = 0; k < depth; ++k) {
      Real gl = s + ell_[k + 1];
      Real gr = s + (ell_[k + 1] + gap_[k + 1]);
      if (x == gl || x == gr) return {MemberKind::in, 0, 0};
      if (x > gl && x < gr) return {MemberKind::in_gap, k + 1, idx};
      if (x > gr) {
        s = gr;
        idx = 2 * idx + 1;
      } else {
        idx = 2 * idx;
      }
      if (x == s + ell_[k + 1]) return {MemberKind::in, 0, 0};
    }
    return {MemberKind::unresolved, 0, 0};
  }

  template <class Other>
  BasicCantorSet<Other> as() const {
    return BasicCantorSet<Other>(base_.template as<Other>(), rule_.template as<Other>(), depth_, Other(rem1_),
                                 resolution_);
  }

 private:
  Interval<Real> base_{};
  BasicGapRule<Real> rule_{};
  int depth_ = 0;
  double resolution_ = -1;
  int max_level_ = 0;
  Real rem1_ = 0;
  std::vector<Real> ell_;
  std::vector<Real> gap_;
  std::vector<std::vector<Interval<Real>>> gaps_;
};
using CantorSet = BasicCantorSet<double>;

template <class Real>
inline BasicCantorSet<Real> build_cantor(Interval<Real> base, BasicGapRule<Real> rule, int depth) {
  return BasicCantorSet<Real>(base, rule, depth);
}

enum class Half { left, right };

// Expanding map of one half of the Cantor set onto all of it; cubic gap profile
// G(t) = 2t + kappa*l*S(t/l), S = 3u^2 - 2u^3, boundary derivative exactly 2.
template <class Real>
class BasicBowenMap {
 public:
  BasicBowenMap() = default;
  BasicBowenMap(std::shared_ptr<const BasicCantorSet<Real>> c, Half half) : c_(std::move(c)), half_(half) {
    if (c_->depth() < 2) throw std::invalid_argument("build_bowen_map: cantor depth must be >= 2");
  }

  const BasicCantorSet<Real>& cantor() const { return *c_; }
  Half half() const { return half_; }

  Interval<Real> source() const {
    const auto& c = *c_;
    if (half_ == Half::left) return {c.base().lo, c.base().lo + c.ell(1)};
    return {c.base().lo + (c.ell(1) + c.gap(1)), c.base().hi};
  }
  Interval<Real> target() const { return c_->base(); }

  // Profile parameter for a source gap of step k+1 mapped onto the step-k gap.
  Real kappa(int k) const { return c_->gap(k) / c_->gap(k + 1) - 2; }

  std::pair<Real, Real> eval_d(const Real& y) const {
    const auto& c = *c_;
    Interval<Real> src = source();
    if (y < src.lo || y > src.hi) throw std::out_of_range("bowen eval: point outside source");
    // (s, e): current source cover, (t, te): its image cover; right ends kept canonical
    Real s = src.lo, e = src.hi;
    Real t = c.base().lo, te = c.base().hi;
    const int kmax = c.max_level();
    for (int k = 1;; ++k) {
      if (y == s) return {t, Real(2)};
      if (y == e) return {te, Real(2)};
      if (k + 1 > kmax) {
        Real slope = c.ell(k - 1) / c.ell(k);
        return {t + (y - s) * slope, slope};
      }
      Real sl = s + c.ell(k + 1);
      if (y < sl) {
        e = sl;
        te = t + c.ell(k);
        continue;
      }
      if (y == sl) return {t + c.ell(k), Real(2)};
      Real sr = s + (c.ell(k + 1) + c.gap(k + 1));
      if (y < sr) {
        Real gs = c.gap(k + 1);
        Real kap = kappa(k);
        Real tau = (y - sl) / gs;
        Real g = gs * (2 * tau + kap * smoothstep3(tau));
        return {t + c.ell(k) + g, 2 + kap * smoothstep3_d(tau)};
      }
      s = sr;
      t = t + (c.ell(k) + c.gap(k));
    }
  }

  Real eval(const Real& y) const { return eval_d(y).first; }
  Real deriv(const Real& y) const { return eval_d(y).second; }

  // Maximal interval around y on which the map is one smooth formula (a gap or a bottom-level cylinder).
  Interval<Real> piece(const Real& y) const {
    const auto& c = *c_;
    Interval<Real> src = source();
    if (y < src.lo || y > src.hi) throw std::out_of_range("bowen piece: point outside source");
    Real s = src.lo, e = src.hi;
    const int kmax = c.max_level();
    for (int k = 1;; ++k) {
      if (k + 1 > kmax) return {s, e};
      Real sl = s + c.ell(k + 1);
      if (y < sl) {
        e = sl;
        continue;
      }
      Real sr = s + (c.ell(k + 1) + c.gap(k + 1));
      if (y <= sr) return {sl, sr};
      s = sr;
    }
  }

  Real inverse(const Real& z) const {
    const auto& c = *c_;
    if (z < c.base().lo || z > c.base().hi) throw std::out_of_range("bowen inverse: point outside target");
    Interval<Real> src = source();
    Real s = src.lo, e = src.hi;
    Real t = c.base().lo, te = c.base().hi;
    const int kmax = c.max_level();
    for (int k = 1;; ++k) {
      if (z == t) return s;
      if (z == te) return e;
      if (k + 1 > kmax) return s + (z - t) * (c.ell(k) / c.ell(k - 1));
      Real tl = t + c.ell(k);
      if (z < tl) {
        te = tl;
        e = s + c.ell(k + 1);
        continue;
      }
      if (z == tl) return s + c.ell(k + 1);
      Real tr = t + (c.ell(k) + c.gap(k));
      if (z < tr) {
        Real gs = c.gap(k + 1);
        Real kap = kappa(k);
        Real rhs = z - tl;
        auto fd = [&](const Real& u) {
          Real tau = u / gs;
          return std::pair<Real, Real>{gs * (2 * tau + kap * smoothstep3(tau)), 2 + kap * smoothstep3_d(tau)};
        };
        Real u = monotone_solve(fd, Real(0), gs, rhs, gs * eps_of<Real>() * 4);
        return s + c.ell(k + 1) + u;
      }
      s = s + (c.ell(k + 1) + c.gap(k + 1));
      t = tr;
    }
  }

 private:
  std::shared_ptr<const BasicCantorSet<Real>> c_;
  Half half_ = Half::left;
};
using BowenMap = BasicBowenMap<double>;

template <class Real>
inline BasicBowenMap<Real> build_bowen_map(const BasicCantorSet<Real>& c, Half half) {
  return BasicBowenMap<Real>(std::make_shared<const BasicCantorSet<Real>>(c), half);
}

// Vertical map on RQ_i = Q_i widened by `margin`: f_L near the outer quarter of each margin,
// the Bowen map on Q_i, and a zero-mean derivative correction in between.
template <class Real>
class BasicVerticalMap {
 public:
  static constexpr double kPlateau = 0.25;

  BasicVerticalMap() = default;
  BasicVerticalMap(BasicBowenMap<Real> bow, Real y_fix, Real lambda, Real margin)
      : bow_(std::move(bow)), y_fix_(y_fix), lambda_(lambda), margin_(margin) {
    if (!(lambda > 2)) throw std::invalid_argument("extend_to_RQ: affine dilation must exceed 2");
    if (!(margin > 0)) throw std::invalid_argument("extend_to_RQ: margin must be positive (any positive margin suffices)");
    ramp_ = margin_ * Real(1 - kPlateau);
    Interval<Real> q = bow_.source();
    Interval<Real> tg = bow_.target();
    using std::abs;
    // source endpoints carry rounding of order eps * |y|, which f_L amplifies by lambda
    Real tol = (tg.length() + lambda * (abs(q.lo) + abs(q.hi))) * eps_of<Real>() * 64;
    if (abs(f_lin(q.lo) - tg.lo) > tol || abs(f_lin(q.hi) - tg.hi) > tol) {
      std::ostringstream os;
      os << "extend_to_RQ: affine map does not match Cantor endpoints (mismatch "
         << to_double(abs(f_lin(q.lo) - tg.lo)) << ", " << to_double(abs(f_lin(q.hi) - tg.hi)) << ")";
      throw std::invalid_argument(os.str());
    }
  }

  const BasicBowenMap<Real>& bowen() const { return bow_; }
  const Real& y_fix() const { return y_fix_; }
  const Real& lambda() const { return lambda_; }
  const Real& margin() const { return margin_; }
  Interval<Real> core() const { return bow_.source(); }
  Interval<Real> domain() const { return core().widened(margin_); }

  Real f_lin(const Real& y) const { return y_fix_ + lambda_ * (y - y_fix_); }

  // Smooth piece of the extended map containing y.
  Interval<Real> piece(const Real& y) const {
    Interval<Real> q = core();
    if (y >= q.lo && y <= q.hi) return bow_.piece(y);
    if (y < q.lo) return y >= q.lo - ramp_ ? Interval<Real>{q.lo - ramp_, q.lo} : Interval<Real>{q.lo - margin_, q.lo - ramp_};
    return y <= q.hi + ramp_ ? Interval<Real>{q.hi, q.hi + ramp_} : Interval<Real>{q.hi + ramp_, q.hi + margin_};
  }

  // {f - f_L, (f - f_L)'}, zero outside the domain
  std::pair<Real, Real> correction_d(const Real& y) const {
    Interval<Real> q = core();
    if (y >= q.lo && y <= q.hi) {
      auto [f, d] = bow_.eval_d(y);
      return {f - f_lin(y), d - lambda_};
    }
    Real v = y < q.lo ? q.lo - y : y - q.hi;
    if (v >= ramp_) return {Real(0), Real(0)};
    Real u = 1 - v / ramp_;
    Real pi = ramp_integral(u);
    Real p = ramp_profile(u);
    Real sign = y < q.lo ? Real(-1) : Real(1);
    return {sign * (lambda_ - 2) * ramp_ * pi, -(lambda_ - 2) * p};
  }

  std::pair<Real, Real> eval_d(const Real& y) const {
    auto [c, cd] = correction_d(y);
    return {f_lin(y) + c, lambda_ + cd};
  }
  Real eval(const Real& y) const { return eval_d(y).first; }
  Real deriv(const Real& y) const { return eval_d(y).second; }

  Real inverse(const Real& z) const {
    Interval<Real> q = core();
    Interval<Real> tg = bow_.target();
    if (z >= tg.lo && z <= tg.hi) return bow_.inverse(z);
    Real y = y_fix_ + (z - y_fix_) / lambda_;
    Real lo = z < tg.lo ? q.lo - ramp_ : q.hi;
    Real hi = z < tg.lo ? q.lo : q.hi + ramp_;
    if (y <= q.lo - ramp_ || y >= q.hi + ramp_) return y;
    auto fd = [this](const Real& s) { return eval_d(s); };
    return monotone_solve(fd, lo, hi, z, ramp_ * eps_of<Real>() * 4);
  }

  // P(u) = S(u) - 3u(1-u), zero mean on [0,1], P(1) = 1
  static Real ramp_profile(const Real& u) { return u * (u * (6 - 2 * u) - 3); }
  // integral of P from 0 to u
  static Real ramp_integral(const Real& u) { return u * u * (u * (2 - u / 2) - Real(1.5)); }

 private:
  BasicBowenMap<Real> bow_;
  Real y_fix_ = 0;
  Real lambda_ = 0;
  Real margin_ = 0;
  Real ramp_ = 0;
};
using VerticalMap = BasicVerticalMap<double>;

// Cantor and Bowen invariants used by `verify`.
template <class Real>
inline Report verify_cantor(const BasicCantorSet<Real>& c, int max_word = 8) {
  Report rep;
  rep.title = "cantor";
  double len = to_double(c.base().length());
  double total = to_double(c.rule().total());
  rep.add("gap sum below |Q|", total < len, total, len);
  auto [lo, hi] = c.measure_bounds();
  rep.add("measure bounds ordered and positive", lo > 0 && lo <= hi, to_double(lo), to_double(hi));
  double worst = 0;
  int words = 0;
  for (int n = 1; n <= std::min(max_word, c.depth()); ++n) {
    for (unsigned b = 0; b < (1u << n); ++b) {
      std::vector<int> w(n);
      for (int k = 0; k < n; ++k) w[k] = int((b >> (n - 1 - k)) & 1u);
      auto [wl, wu] = c.cylinder_measure(w);
      double target = std::ldexp(1.0, -n);
      worst = std::max({worst, std::abs(to_double(wu / hi) - target), std::abs(to_double(wl / lo) - target)});
      ++words;
    }
  }
  rep.add("cylinder measure law (" + std::to_string(words) + " words)", worst <= 1e-12, worst, 1e-12);
  double a1 = to_double(c.rule().first), g1 = to_double(c.gaps(1).front().length());
  rep.add("first gap equals a_1", std::abs(a1 - g1) <= 1e-12 * len, std::abs(a1 - g1), 1e-12 * len);

  double dev = 0, min_in = 1e300;
  int n = 0;
  for (Half half : {Half::left, Half::right}) {
    BasicBowenMap<Real> f(std::make_shared<const BasicCantorSet<Real>>(c), half);
    auto src = f.source();
    for (int step = 2; step <= c.depth() && n < 2000; ++step) {
      for (auto& gp : c.gaps(step)) {
        if (gp.lo < src.lo || gp.hi > src.hi) continue;
        dev = std::max({dev, std::abs(to_double(f.deriv(gp.lo)) - 2), std::abs(to_double(f.deriv(gp.hi)) - 2)});
        n += 2;
        for (int j = 1; j < 8; ++j) min_in = std::min(min_in, to_double(f.deriv(gp.lo + gp.length() * Real(j) / 8)));
        if (n >= 2000) break;
      }
    }
  }
  rep.add("Bowen derivative 2 at endpoints", dev <= 1e-9, dev, 1e-9, std::to_string(n) + " endpoints");
  rep.add("Bowen derivative >= 2 in gaps", min_in >= 2 - 1e-12, min_in, 2);
  return rep;
}

}  // namespace semithick
