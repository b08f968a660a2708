#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "anosov_map.hpp"
#include "parallel.hpp"

namespace semithick {

// ---------- orbits ----------

struct OrbitRecord {
  TorusPoint seed{};
  long length = 0;                    // iterates tested: F^0 .. F^length
  std::optional<long> entry_time;     // first k with F^k(seed) in S
  bool unresolved = false;            // entered the depth-D cover of S, never resolved In
  std::optional<long> cover_time;     // first k with an unresolved membership test
  std::optional<long> exit_uk_time;   // first k with F^k(seed) outside UK
  std::vector<TorusPoint> samples;    // filled when requested
};

// Forward orbit with an S-membership test at every iterate k = 0..T; stops at the first In.
template <class Map>
OrbitRecord iterate(const Map& F, TorusPoint p, long T, bool store = false) {
  if (T < 0) throw std::invalid_argument("iterate: T must be >= 0");
  const auto& g = F.geometry();
  OrbitRecord rec;
  rec.seed = p;
  for (long k = 0; k <= T; ++k) {
    if (store) rec.samples.push_back(p);
    rec.length = k;
    auto c = g.chart_of(p);
    SMember m = g.s_membership_chart(c[0], c[1]);
    if (!rec.exit_uk_time && !g.UK().contains(c[0], c[1])) rec.exit_uk_time = k;
    if (m == SMember::in) {
      rec.entry_time = k;
      break;
    }
    if (m == SMember::unresolved && !rec.cover_time) rec.cover_time = k;
    if (k < T) p = F.apply(p);
  }
  rec.unresolved = !rec.entry_time && rec.cover_time.has_value();
  return rec;
}

// ---------- basin ----------

struct WilsonInterval {
  double lo = 0, hi = 0;
  double half() const { return (hi - lo) / 2; }
};

// 95% Wilson score interval for k successes out of n.
inline WilsonInterval wilson(long k, long n, double z = 1.959963984540054) {
  if (n <= 0) throw std::invalid_argument("wilson: n must be positive");
  double p = double(k) / double(n), nn = double(n), z2 = z * z;
  double den = 1 + z2 / nn;
  double center = (p + z2 / (2 * nn)) / den;
  double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / den;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct BasinRow {
  long T = 0;
  long in = 0;
  long unresolved = 0;
  double p_in = 0, p_unresolved = 0;
  double ci = 0;  // Wilson half-width for p_in
  WilsonInterval interval;
};

struct BasinResult {
  std::uint64_t seed = 0;
  long n_samples = 0;
  std::vector<BasinRow> rows;
  double leb_s_lower = 0, leb_s_upper = 0;  // area of S from the Cantor measure bounds
  bool monotone = true;                     // p_in(T_{k+1}) >= p_in(T_k) - ci_k
  bool t0_within_ci = false;                // Leb(S) bounds meet the T = 0 interval (when T = 0 is on the ladder)
};

inline constexpr long kBasinBlock = 4096;

// Uniform seeds; one orbit per seed up to max(T); a seed counts In at T when its entry time is <= T.
template <class Map>
BasinResult basin_estimate(const Map& F, long n_samples, std::vector<long> ladder, std::uint64_t seed, int threads = 0) {
  if (n_samples < 1) throw std::invalid_argument("basin_estimate: n_samples must be >= 1");
  if (ladder.empty()) throw std::invalid_argument("basin_estimate: empty T ladder");
  for (long T : ladder)
    if (T < 0) throw std::invalid_argument("basin_estimate: T must be >= 0");
  std::sort(ladder.begin(), ladder.end());
  ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());
  const long T_max = ladder.back();
  const std::size_t nl = ladder.size();
  const std::size_t n_blocks = std::size_t((n_samples + kBasinBlock - 1) / kBasinBlock);

  std::vector<std::vector<long>> in_c(n_blocks, std::vector<long>(nl)), un_c(n_blocks, std::vector<long>(nl));
  parallel_blocks(n_blocks, threads, [&](std::size_t b) {
    auto rng = block_rng(seed, b);
    long lo = long(b) * kBasinBlock, hi = std::min(n_samples, lo + kBasinBlock);
    for (long s = lo; s < hi; ++s) {
      double u = unit_real(rng), v = unit_real(rng);
      auto rec = iterate(F, TorusPoint{u, v}, T_max);
      for (std::size_t j = 0; j < nl; ++j) {
        if (rec.entry_time && *rec.entry_time <= ladder[j])
          ++in_c[b][j];
        else if (rec.cover_time && *rec.cover_time <= ladder[j])
          ++un_c[b][j];
      }
    }
  });

  BasinResult res;
  res.seed = seed;
  res.n_samples = n_samples;
  const auto& g = F.geometry();
  auto mb = g.cantor().measure_bounds();
  res.leb_s_lower = to_double(g.UK().x.length()) * to_double(mb.first);
  res.leb_s_upper = to_double(g.UK().x.length()) * to_double(mb.second);
  for (std::size_t j = 0; j < nl; ++j) {
    BasinRow r;
    r.T = ladder[j];
    for (std::size_t b = 0; b < n_blocks; ++b) {
      r.in += in_c[b][j];
      r.unresolved += un_c[b][j];
    }
    r.p_in = double(r.in) / double(n_samples);
    r.p_unresolved = double(r.unresolved) / double(n_samples);
    r.interval = wilson(r.in, n_samples);
    r.ci = r.interval.half();
    res.rows.push_back(r);
  }
  for (std::size_t j = 0; j + 1 < nl; ++j)
    if (res.rows[j + 1].p_in < res.rows[j].p_in - res.rows[j].ci) res.monotone = false;
  if (res.rows.front().T == 0) {
    const auto& iv = res.rows.front().interval;
    res.t0_within_ci = res.leb_s_lower <= iv.hi && res.leb_s_upper >= iv.lo;
  }
  return res;
}

// ---------- symbolic statistics on the horseshoe ----------

struct FrequencyRow {
  std::string word;
  long count = 0;
  double freq = 0, expected = 0, bound = 0;
  bool pass = false;
};

struct FrequencyTable {
  long T = 0;
  int k_max = 0;
  std::vector<FrequencyRow> rows;
  std::vector<int> head;      // first itinerary symbols
  double max_shift_error = 0;  // |F(point) - point of the shifted word| in the vertical chart coordinate
  bool pass() const {
    for (auto& r : rows)
      if (!r.pass) return false;
    return true;
  }
};

namespace detail {

// Which half of Q holds Y, with a small tolerance; -1 when Y lies in the first gap or off Q.
template <class Geo>
int q_symbol(const Geo& g, double X, double Y, double tol) {
  if (!(X >= g.UK().x.lo - tol && X <= g.UK().x.hi + tol)) return -1;
  double qtol = tol * to_double(g.Q().length());
  for (int i = 0; i < 2; ++i) {
    auto q = g.Qi(i);
    if (Y >= to_double(q.lo) - qtol && Y <= to_double(q.hi) + qtol) return i;
  }
  return -1;
}

inline FrequencyTable tabulate(const std::vector<std::uint8_t>& it, int k_max) {
  FrequencyTable tab;
  tab.T = long(it.size());
  tab.k_max = k_max;
  const long T = tab.T;
  for (int k = 1; k <= k_max; ++k) {
    std::vector<long> cnt(std::size_t(1) << k);
    unsigned code = 0, mask = (1u << k) - 1;
    for (long t = 0; t < T; ++t) {
      code = ((code << 1) | it[t]) & mask;
      if (t >= k - 1) ++cnt[code];
    }
    long windows = std::max(0L, T - k + 1);
    for (unsigned w = 0; w < cnt.size(); ++w) {
      FrequencyRow r;
      for (int j = k - 1; j >= 0; --j) r.word.push_back(((w >> j) & 1u) ? '1' : '0');
      r.count = cnt[w];
      r.freq = windows > 0 ? double(cnt[w]) / double(windows) : 0;
      r.expected = std::ldexp(1.0, -k);
      r.bound = 4 * std::sqrt(r.expected / double(T));
      r.pass = std::abs(r.freq - r.expected) <= r.bound;
      tab.rows.push_back(std::move(r));
    }
  }
  for (long t = 0; t < std::min<long>(T, 64); ++t) tab.head.push_back(it[t]);
  return tab;
}

}  // namespace detail

// Itinerary of a horseshoe orbit prescribed by a symbol stream. At step t the point sits at the left end of the
// depth-D cylinder of s_t..s_{t+D-1}; F is applied with the map's own formula, the symbol is read back from the
// geometry, and the image is compared with the left end of the shifted cylinder.
template <class Map, class SymbolFn>
FrequencyTable symbolic_frequencies(const Map& F, SymbolFn&& sym, long T, int k_max, double X0) {
  if (T < 1) throw std::invalid_argument("cylinder_frequencies: T must be >= 1");
  if (k_max < 1 || k_max > 20) throw std::invalid_argument("cylinder_frequencies: k_max must be in 1..20");
  const auto& g = F.geometry();
  const auto& c = g.cantor();
  const int D = c.depth();
  std::vector<std::uint8_t> s(std::size_t(T + D));
  for (long t = 0; t < T + D; ++t) s[t] = std::uint8_t(sym(t) ? 1 : 0);
  auto left_of = [&](long t, int len) {
    double x = to_double(c.base().lo);
    for (int k = 1; k <= len; ++k)
      if (s[t + k - 1]) x += to_double(c.ell(k)) + to_double(c.gap(k));
    return x;
  };
  std::vector<std::uint8_t> it(static_cast<std::size_t>(T));
  double X = X0, worst = 0;
  for (long t = 0; t < T; ++t) {
    double Y = left_of(t, D);
    int i = detail::q_symbol(g, X, Y, 1e-12);
    if (i < 0 || i != s[t]) {
      std::ostringstream os;
      os << "cylinder_frequencies: orbit left UK at step " << t << " " << detail::point_str(X, Y);
      throw std::runtime_error(os.str());
    }
    it[t] = std::uint8_t(i);
    auto im = F.local_image(i, X, Y);
    worst = std::max(worst, std::abs(im[1] - left_of(t + 1, D - 1)));
    X = im[0];
  }
  auto tab = detail::tabulate(it, k_max);
  tab.max_shift_error = worst;
  return tab;
}

// Periodic word repeated forever.
inline auto periodic_symbols(std::vector<int> word) {
  if (word.empty()) throw std::invalid_argument("periodic_symbols: empty word");
  return [w = std::move(word)](long t) { return w[std::size_t(t % long(w.size()))]; };
}

// Fair coin flips from a seeded generator, memoized so the stream can be read in order.
class BernoulliSymbols {
 public:
  explicit BernoulliSymbols(std::uint64_t seed) : rng_(block_rng(seed, 0)) {}
  int operator()(long t) {
    while (long(bits_.size()) <= t) {
      auto r = rng_();
      for (int k = 0; k < 64; ++k) bits_.push_back(std::uint8_t((r >> k) & 1u));
    }
    return bits_[std::size_t(t)];
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::uint8_t> bits_;
};

// Itinerary of an actual orbit started at a torus point (no re-anchoring); fails when the orbit leaves UK.
template <class Map>
FrequencyTable cylinder_frequencies(const Map& F, TorusPoint seed, long T, int k_max) {
  if (T < 1) throw std::invalid_argument("cylinder_frequencies: T must be >= 1");
  const auto& g = F.geometry();
  std::vector<std::uint8_t> it(static_cast<std::size_t>(T));
  TorusPoint p = seed;
  for (long t = 0; t < T; ++t) {
    auto c = g.chart_of(p);
    int i = detail::q_symbol(g, c[0], c[1], 1e-9);
    if (i < 0) {
      std::ostringstream os;
      os << "cylinder_frequencies: orbit left UK at step " << t << " " << detail::point_str(c[0], c[1]);
      throw std::runtime_error(os.str());
    }
    it[t] = std::uint8_t(i);
    p = F.apply(p);
  }
  return detail::tabulate(it, k_max);
}

// ---------- vertical segments ----------

// Fiber segment {X} x [y0, y1] in the lifted p0 chart.
struct VerticalSegment {
  double X = 0, y0 = 0, y1 = 0;
  double length() const { return y1 - y0; }
};

// Max/min over sampled subpoints of the vertical derivative of F^n (product of a2 along each orbit).
template <class Map>
double distortion(const Map& F, const VerticalSegment& s, int n_iter, int samples = 257) {
  if (n_iter < 0) throw std::invalid_argument("distortion: n_iter must be >= 0");
  if (samples < 2) throw std::invalid_argument("distortion: need at least two samples");
  if (n_iter == 0) return 1;
  const auto& g = F.geometry();
  double lo = 1e300, hi = -1e300;
  for (int k = 0; k < samples; ++k) {
    double Y = s.y0 + s.length() * double(k) / double(samples - 1);
    TorusPoint p = g.point_of(s.X, Y);
    double lg = 0;
    for (int n = 0; n < n_iter; ++n) {
      lg += std::log(F.differential(p).a2);
      p = F.apply(p);
    }
    lo = std::min(lo, lg);
    hi = std::max(hi, lg);
  }
  return std::exp(hi - lo);
}

// The level-0 segment (fiber component outside UK) through a chart point outside UK.
template <class Geo>
VerticalSegment level0_segment(const Geo& g, double X, double Y, double search = 4000) {
  if (g.UK().contains(X, Y)) throw std::invalid_argument("level0_segment: point inside UK");
  const auto& uk = g.UK();
  // UK + chart(n) meets the fiber x = X iff chart_x(n) in [X - UK.x.hi, X - UK.x.lo]
  auto ns = lattice_in_box(X - uk.x.hi, X - uk.x.lo, Y - uk.y.hi - search, Y - uk.y.lo + search);
  const Chart ch = Chart::make();
  double up = 1e300, down = -1e300;
  for (auto& n : ns) {
    double cy = ch.to_chart(double(n[0]), double(n[1]))[1];
    if (uk.y.lo + cy >= Y) up = std::min(up, uk.y.lo + cy);
    if (uk.y.hi + cy <= Y) down = std::max(down, uk.y.hi + cy);
  }
  if (up > 1e299 || down < -1e299) throw std::runtime_error("level0_segment: search window too short");
  return {X, down, up};
}

inline constexpr double kCutWindow = 2e4;

// First m with F^m(segment) crossing int UK from bottom to top, or -1 past `cap`. The image length follows
// |F(J)| = lambda |J| + c(top) - c(bottom), c the fiber correction (zero off RH).
template <class Map>
int cut_through_steps(const Map& F, const VerticalSegment& s, int cap = 16) {
  const auto& g = F.geometry();
  const Chart ch = Chart::make();
  const auto& uk = g.UK();
  TorusPoint a = g.point_of(s.X, s.y0), b = g.point_of(s.X, s.y1);
  double len = s.length();
  for (int m = 0; m <= cap; ++m) {
    auto ca = g.chart_of(a);
    // crossings recur every ~1/width(UK) along a fiber, so the first stretch of a long image suffices
    double win = std::min(len, kCutWindow);
    auto ns = lattice_in_box(uk.x.lo - ca[0], uk.x.hi - ca[0], uk.y.hi - win - ca[1], uk.y.lo - ca[1]);
    for (auto& n : ns) {
      double cx = ch.to_chart(double(n[0]), double(n[1]))[0];
      if (uk.x.interior(ca[0] + cx)) return m;
    }
    if (len > kCutWindow) return -1;
    auto cb = g.chart_of(b);
    len = g.lambda() * len + F.correction(cb[0], cb[1]).c - F.correction(ca[0], ca[1]).c;
    a = F.apply(a);
    b = F.apply(b);
  }
  return -1;
}

// ---------- measure inequality ----------

// Chart rectangle [X, X + w] x [Y, Y + h] in the lifted p0 chart.
struct SampleRect {
  double X = 0, Y = 0, w = 0, h = 0;
  double area() const { return w * h; }
};

// Largest operator norm of dF over the RH grids and the linear value lambda elsewhere.
template <class Map>
double grid_lipschitz(const Map& F, int grid = 400) {
  const auto& g = F.geometry();
  double best = to_double(g.lambda());
  for (int i = 0; i < 2; ++i) {
    const auto& R = g.RH(i);
    for (int a = 0; a <= grid; ++a)
      for (int b = 0; b <= grid; ++b) {
        double X = R.x.lo + R.x.length() * a / grid, Y = R.y.lo + R.y.length() * b / grid;
        best = std::max(best, to_double(op_norm(F.differential_chart(X, Y))));
      }
  }
  return best;
}

struct AreaEstimate {
  double area = 0, sigma = 0;
  bool exact = false;  // linear region: area preserved exactly
};

// Monte-Carlo area of F(rect): uniform points in a padded box around the image, kept when F^-1 lands in rect.
template <class Map>
AreaEstimate image_area(const Map& F, const SampleRect& r, long n_mc, std::mt19937_64& rng) {
  const auto& g = F.geometry();
  if (r.area() <= 0) return {0, 0, true};
  const auto& Rt = g.Rt();
  bool off = r.X > Rt.x.hi || r.X + r.w < Rt.x.lo || r.Y > Rt.y.hi || r.Y + r.h < Rt.y.lo;
  if (off && r.w < 0.2 && r.h < 0.2) return {r.area(), 0, true};
  const auto& ch = g.chart();
  TorusPoint c0 = g.point_of(r.X + r.w / 2, r.Y + r.h / 2);
  TorusPoint fc = F.apply(c0);
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  const int edge = 512;
  for (int k = 0; k <= edge; ++k) {
    double t = double(k) / edge;
    for (auto [X, Y] : {std::pair{r.X + t * r.w, r.Y}, std::pair{r.X + t * r.w, r.Y + r.h}, std::pair{r.X, r.Y + t * r.h},
                        std::pair{r.X + r.w, r.Y + t * r.h}}) {
      auto d = lift_diff(F.apply(g.point_of(X, Y)), fc);
      auto cc = ch.to_chart(d[0], d[1]);
      x0 = std::min(x0, cc[0]);
      x1 = std::max(x1, cc[0]);
      y0 = std::min(y0, cc[1]);
      y1 = std::max(y1, cc[1]);
    }
  }
  double px = 0.1 * (x1 - x0), py = 0.1 * (y1 - y0);
  x0 -= px, x1 += px, y0 -= py, y1 += py;
  long hit = 0;
  for (long k = 0; k < n_mc; ++k) {
    double X = x0 + unit_real(rng) * (x1 - x0), Y = y0 + unit_real(rng) * (y1 - y0);
    auto z = F.apply_inverse(ch.point(fc, X, Y));
    auto d = lift_diff(z, c0);
    auto cc = ch.to_chart(d[0], d[1]);
    if (std::abs(cc[0]) <= r.w / 2 && std::abs(cc[1]) <= r.h / 2) ++hit;
  }
  double box = (x1 - x0) * (y1 - y0), p = double(hit) / double(n_mc);
  return {box * p, box * std::sqrt(p * (1 - p) / double(n_mc)), false};
}

// Half the rectangles anywhere on the torus, half across an RQ band where the map is nonlinear.
template <class Geo>
std::vector<SampleRect> random_rects(const Geo& g, int n, std::uint64_t seed) {
  auto rng = block_rng(seed, 0);
  std::vector<SampleRect> rects;
  for (int k = 0; k < n; ++k) {
    if (k % 2) {
      rects.push_back({-0.5 + unit_real(rng), -0.5 + unit_real(rng), 1e-3 + 0.01 * unit_real(rng),
                       1e-3 + 0.01 * unit_real(rng)});
    } else {
      double w = to_double(g.Rt().x.length()) * (0.05 + 0.2 * unit_real(rng));
      double x = to_double(g.Rt().x.lo) + unit_real(rng) * (to_double(g.Rt().x.length()) - w);
      const auto& rq = g.RQ(k % 4 / 2);
      double h = to_double(rq.length()) * (0.1 + 0.8 * unit_real(rng));
      rects.push_back({x, to_double(rq.lo) + unit_real(rng) * (to_double(rq.length()) - h), w, h});
    }
  }
  return rects;
}

// area(F(A)) <= Lip^2 area(A) on each rectangle, allowing 3 sigma of Monte-Carlo noise.
template <class Map>
Report lipschitz_measure_check(const Map& F, const std::vector<SampleRect>& rects, long n_mc, double lip,
                               std::uint64_t seed, int threads = 0) {
  Report rep;
  rep.title = "Lipschitz measure inequality";
  std::vector<AreaEstimate> est(rects.size());
  parallel_blocks(rects.size(), threads, [&](std::size_t k) {
    auto rng = block_rng(seed, k);
    est[k] = image_area(F, rects[k], n_mc, rng);
  });
  long bad = 0, exact = 0;
  double worst = 0;
  std::string first;
  for (std::size_t k = 0; k < rects.size(); ++k) {
    double bound = lip * lip * rects[k].area();
    double excess = est[k].area - 3 * est[k].sigma - bound;
    if (est[k].exact) ++exact;
    double ratio = bound > 0 ? est[k].area / bound : 0;
    worst = std::max(worst, ratio);
    if (excess > 0) {
      ++bad;
      if (first.empty()) first = "rect " + std::to_string(k);
    }
  }
  rep.add("area(F(A)) <= Lip^2 area(A) + 3 sigma", bad == 0, double(bad), 0, first);
  rep.add("largest area(F(A)) / (Lip^2 area(A))", worst <= 1, worst, 1, std::to_string(exact) + " rects in the linear region");
  return rep;
}

}  // namespace semithick
