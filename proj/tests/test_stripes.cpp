#include <gtest/gtest.h>

#include <sstream>

#include "semithick/stripes.hpp"

using namespace semithick;

namespace {

const HorseshoeSpec& spec() {
  static const HorseshoeSpec s = make_horseshoe_spec({});
  return s;
}

const BasicAnosovMap<Wide>& W() {
  static const BasicAnosovMap<Wide> f(spec());
  return f;
}

const AnosovMap& F() {
  static const AnosovMap f(spec());
  return f;
}

const StripeSet<Wide>& small_set() {
  static const StripeSet<Wide> s = [] {
    StripeOptions o;
    o.grid = 256;
    o.threads = 1;
    return compute_W(W(), 5, o);
  }();
  return s;
}

}  // namespace

TEST(Levels, FrameLevelOracle) {
  // oracle: the frame branches sit at stable parameter t ~ -160 (top) and ~ +55 (bottom) from p0; t / lambda^n must
  // fall in [XL, XR] = [-1.07e-5, 6.93e-3]: -160 / lambda ~ -1.06e-2 misses, -160 / lambda^2 ~ -7e-7 hits
  const auto& g = F().geometry();
  EXPECT_NEAR(g.frame_top_branch()[0], -160, 5);
  EXPECT_NEAR(g.frame_bottom_branch()[0], 55, 5);
  EXPECT_EQ(frame_level(F()), 2);
  EXPECT_EQ(frame_level(W()), 2);
}

TEST(Levels, VerticalEdgesLeaveR) {
  auto v = vertical_edge_level(F());
  EXPECT_EQ(v.level, 1);
  EXPECT_GT(v.ball_radius, 0.3);
  ASSERT_GE(v.reach.size(), 2u);
  // off R the fiber map near q is linear: the reach shrinks by exactly lambda per step
  for (std::size_t n = 1; n < v.reach.size(); ++n) EXPECT_NEAR(v.reach[n] * F().lambda() / v.reach[n - 1], 1, 1e-9);
  EXPECT_EQ(vertical_edge_level(W()).level, v.level);
}

TEST(ComputeW, Preconditions) {
  EXPECT_THROW(compute_W(W(), 0), std::invalid_argument);
  StripeOptions o;
  o.anchors = {{0.3, 0.3}};
  EXPECT_THROW(compute_W(W(), 2, o), std::invalid_argument);
}

TEST(ComputeW, ReportPasses) {
  const auto& S = small_set();
  EXPECT_EQ(S.L_geo, 2);
  for (auto& it : S.report.items) EXPECT_TRUE(it.pass) << it.name << " " << it.value << " " << it.detail;
  ASSERT_NE(S.report.find("stripes nested or closure-disjoint"), nullptr);
  EXPECT_EQ(S.report.find("stripes nested or closure-disjoint")->value, 0);
}

TEST(ComputeW, LevelZeroIsUKBoundary) {
  const auto& S = small_set();
  const auto& g = W().geometry();
  int seen = 0;
  for (auto& c : S.chains) {
    if (!g.UK().contains(c.X, c.Y)) continue;
    ++seen;
    const auto& lv = c.levels[0];
    EXPECT_FALSE(lv.is_stripe);
    EXPECT_EQ(lv.lower.family, 0);
    EXPECT_EQ(lv.upper.family, 1);
    for (std::size_t k = 0; k < S.xs.size(); ++k) {
      ASSERT_EQ(bool(lv.lower.valid[k]), g.UK().x.contains(S.xs[k]));
      if (!lv.lower.valid[k]) continue;
      EXPECT_LT(abs(lv.lower.y[k] - g.UK().y.lo), Wide(1e-45));
      EXPECT_LT(abs(lv.upper.y[k] - g.UK().y.hi), Wide(1e-45));
    }
  }
  EXPECT_GE(seen, 3);
}

TEST(ComputeW, EachLevelHasOnePieceOfEachFamily) {
  // on a fiber the nearest edge above and below are of opposite kinds: inside a copy of UK bottom/top, outside top/bottom
  for (auto& c : small_set().chains) {
    ASSERT_EQ(c.levels.size(), 6u);
    for (auto& lv : c.levels) {
      EXPECT_NE(lv.lower.family, lv.upper.family);
      EXPECT_EQ(lv.is_stripe, lv.lower.family == 1);
      for (std::size_t k = 0; k < lv.lower.y.size(); ++k)
        if (lv.lower.valid[k] && lv.upper.valid[k]) EXPECT_LT(lv.lower.y[k], lv.upper.y[k]);
    }
  }
}

TEST(ComputeW, PiecesLandOnUKEdgesUnderDoubleMap) {
  // independent oracle: the double map iterated m times from a sampled W_m point reaches dh UK; the double
  // rounding of the start is amplified by the vertical expansion, so the residual is checked in image units
  const auto& S = small_set();
  const auto& g = F().geometry();
  double worst = 0;
  int n = 0;
  for (auto& c : S.chains)
    for (int m = 1; m <= 2; ++m)
      for (const auto* w : {&c.levels[m].lower, &c.levels[m].upper})
        for (std::size_t k = 0; k < S.xs.size(); k += 17) {
          if (!w->valid[k]) continue;
          auto p = g.point_of(to_double(S.xs[k]), to_double(w->y[k]));
          for (int j = 0; j < m; ++j) p = F().apply(p);
          auto ch = g.chart_of(p);
          ASSERT_TRUE(g.UK().x.contains(ch[0]));
          worst = std::max(worst, std::min(std::abs(ch[1]), std::abs(ch[1] - g.y1())));
          ++n;
        }
  EXPECT_GT(n, 100);
  EXPECT_LT(worst, 1e-6);
}

TEST(ComputeW, ChainStripesAreNestedAndShrink) {
  // stripes around one anchor at levels l < k: Pi_k inside Pi_l, so widths do not increase
  const auto& S = small_set();
  int pairs = 0;
  for (auto& c : S.chains)
    for (int l = S.L_geo + 1; l <= S.m_max; ++l)
      for (int k = l + 1; k <= S.m_max; ++k) {
        const auto& A = c.levels[l];
        const auto& B = c.levels[k];
        if (!A.is_stripe || !B.is_stripe) continue;
        ++pairs;
        for (std::size_t i = 0; i < S.xs.size(); i += 8) {
          EXPECT_GE(B.lower.y[i], A.lower.y[i]);
          EXPECT_LE(B.upper.y[i], A.upper.y[i]);
        }
        EXPECT_TRUE(c.dependent(k, l - 1));
      }
  EXPECT_GT(pairs, 5);
}

TEST(ComputeW, ThreadCountDoesNotChangeCurves) {
  StripeOptions o;
  o.grid = 64;
  o.random_anchors = 1;
  o.threads = 1;
  auto a = compute_W(W(), 3, o);
  o.threads = 3;
  auto b = compute_W(W(), 3, o);
  std::ostringstream sa, sb;
  write_w_csv(sa, a);
  write_w_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(ComputeW, EightLevelsGiveNinePolylinesPerFamily) {
  StripeOptions o;
  o.grid = 32;
  o.random_anchors = 0;
  o.anchors = {{to_double(W().geometry().UK().x.mid()) * 0.9, to_double(W().geometry().y1()) * 0.55}};
  auto S = compute_W(W(), 8, o);
  ASSERT_EQ(S.chains.size(), 1u);
  int fam[2] = {0, 0};
  for (auto& lv : S.chains[0].levels) {
    ++fam[lv.lower.family];
    ++fam[lv.upper.family];
  }
  EXPECT_EQ(fam[0], 9);
  EXPECT_EQ(fam[1], 9);
  std::ostringstream os;
  write_w_csv(os, S);
  std::string first;
  std::istringstream is(os.str());
  std::getline(is, first);
  EXPECT_EQ(first, "chain,level,role,family,stripe,k,x,y");
}
