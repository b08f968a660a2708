#include <gtest/gtest.h>

#include <random>
#include <set>

#include "semithick/torus_linear.hpp"

using namespace semithick;

namespace {

// Independent oracle: repeated 2x2 integer multiplication.
std::array<Int, 4> naive_power(int n) {
  std::array<Int, 4> m{1, 0, 0, 1};
  for (int i = 0; i < n; ++i) m = {2 * m[0] + m[1], m[0] + m[1], 2 * m[2] + m[3], m[2] + m[3]};
  return m;
}

}  // namespace

TEST(LinearModel, SmallPowers) {
  auto m1 = make_linear_model(1);
  EXPECT_EQ(m1.a, 2);
  EXPECT_EQ(m1.b, 1);
  EXPECT_EQ(m1.c, 1);
  EXPECT_EQ(m1.d, 1);
  auto m2 = make_linear_model(2);
  EXPECT_EQ(m2.a, 5);
  EXPECT_EQ(m2.b, 3);
  EXPECT_EQ(m2.c, 3);
  EXPECT_EQ(m2.d, 2);
  EXPECT_EQ(make_linear_model(5).trace(), 123);
}

TEST(LinearModel, MatchesRepeatedMultiplication) {
  for (int n = 1; n <= 30; ++n) {
    auto m = make_linear_model(n);
    auto o = naive_power(n);
    EXPECT_EQ(m.a, o[0]);
    EXPECT_EQ(m.b, o[1]);
    EXPECT_EQ(m.c, o[2]);
    EXPECT_EQ(m.d, o[3]);
    EXPECT_EQ(m.det(), 1);
  }
}

TEST(LinearModel, EigenData) {
  const double g = (3 + std::sqrt(5.0)) / 2;
  for (int n = 1; n <= 12; ++n) {
    auto m = make_linear_model(n);
    EXPECT_NEAR(m.lambda_u / std::pow(g, n), 1.0, 1e-9);
    EXPECT_NEAR(m.lambda_u * m.lambda_s, 1.0, 1e-12);
    EXPECT_NEAR(m.e_u[0] * m.e_s[0] + m.e_u[1] * m.e_s[1], 0.0, 1e-12);
    // eigenvector check on the integer matrix
    double mu0 = m.a * m.e_u[0] + m.b * m.e_u[1], mu1 = m.c * m.e_u[0] + m.d * m.e_u[1];
    EXPECT_NEAR(mu0 / m.lambda_u, m.e_u[0], 1e-12);
    EXPECT_NEAR(mu1 / m.lambda_u, m.e_u[1], 1e-12);
  }
}

TEST(LinearModel, OverflowNamesMaximum) {
  EXPECT_NO_THROW(make_linear_model(kMaxNInit));
  try {
    make_linear_model(kMaxNInit + 1);
    FAIL();
  } catch (const std::overflow_error& e) {
    EXPECT_NE(std::string(e.what()).find("45"), std::string::npos);
  }
  EXPECT_THROW(make_linear_model(0), std::invalid_argument);
}

TEST(ApplyLinear, Examples) {
  auto m = make_linear_model(1);
  auto o = apply_linear(m, TorusPoint{0, 0});
  EXPECT_EQ(o.u, 0);
  EXPECT_EQ(o.v, 0);
  auto p = apply_linear(m, TorusPoint{0.5, 0.5});
  EXPECT_DOUBLE_EQ(p.u, 0.5);
  EXPECT_DOUBLE_EQ(p.v, 0.0);
}

TEST(ApplyLinear, InverseRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0, 1);
  for (int n : {1, 3, 10}) {
    auto m = make_linear_model(n);
    for (int i = 0; i < 1000; ++i) {
      TorusPoint p{U(rng), U(rng)};
      auto q = apply_linear_inverse(m, apply_linear(m, p));
      EXPECT_LT(torus_distance(p, q), 1e-12 * m.lambda_u);
    }
  }
}

TEST(ApplyLinear, ChartScaling) {
  // tangent vectors: x scales by 1/lambda, y by lambda
  std::mt19937_64 rng(11);
  std::normal_distribution<double> N(0, 1);
  Chart ch = Chart::make();
  for (int n : {1, 4, 8}) {
    auto m = make_linear_model(n);
    for (int i = 0; i < 1000; ++i) {
      double x = N(rng), y = N(rng);
      auto d = ch.from_chart(x, y);
      double du = m.a * d[0] + m.b * d[1], dv = m.c * d[0] + m.d * d[1];
      auto c = ch.to_chart(du, dv);
      EXPECT_NEAR(c[0], x / m.lambda_u, 1e-10 * (1 + std::abs(x)));
      EXPECT_NEAR(c[1] / m.lambda_u, y, 1e-10 * (1 + std::abs(y)));
    }
  }
}

TEST(Chart, RoundTripAndMetric) {
  Chart ch = Chart::make();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 1000; ++i) {
    TorusPoint a{U(rng), U(rng)}, p{U(rng), U(rng)}, q{U(rng), U(rng)};
    auto c = ch.local(p, a);
    auto back = ch.point(a, c[0], c[1]);
    EXPECT_LT(torus_distance(p, back), 1e-12);
    EXPECT_NEAR(std::hypot(c[0], c[1]), torus_distance(p, a), 1e-12);
    EXPECT_DOUBLE_EQ(torus_distance(p, q), torus_distance(q, p));
    EXPECT_LE(torus_distance(p, q), torus_distance(p, a) + torus_distance(a, q) + 1e-15);
  }
}

TEST(FixedPoints, CountsMatchTraceMinusTwo) {
  for (int n = 1; n <= 8; ++n) {
    auto m = make_linear_model(n);
    auto fp = fixed_points(m);
    EXPECT_EQ(static_cast<Int>(fp.size()), m.trace() - 2) << "N=" << n;
    std::set<std::pair<Int, Int>> uniq;
    for (auto& r : fp) uniq.insert({r.nu, r.nv});
    EXPECT_EQ(uniq.size(), fp.size());
  }
  EXPECT_EQ(fixed_points(make_linear_model(1)).size(), 1u);
  EXPECT_EQ(fixed_points(make_linear_model(2)).size(), 5u);
}

TEST(FixedPoints, ExactlyFixed) {
  for (int n = 1; n <= 10; ++n) {
    auto m = make_linear_model(n);
    for (auto& r : fixed_points(m)) {
      // exact integer check: (M - I) (nu, nv) = 0 mod den
      __int128 ru = static_cast<__int128>(m.a - 1) * r.nu + static_cast<__int128>(m.b) * r.nv;
      __int128 rv = static_cast<__int128>(m.c) * r.nu + static_cast<__int128>(m.d - 1) * r.nv;
      EXPECT_EQ(static_cast<Int>(ru % r.den), 0);
      EXPECT_EQ(static_cast<Int>(rv % r.den), 0);
      auto p = r.point();
      double tol = n <= 8 ? 1e-12 : 1e-12 * m.lambda_u / 64;
      EXPECT_LT(torus_distance(apply_linear(m, p), p), tol);
    }
  }
}

TEST(EpsilonNet, Radius) {
  double r1 = epsilon_net_radius(make_linear_model(1), 256);
  EXPECT_NEAR(r1, std::sqrt(2.0) / 2, 1e-12);
  double r3 = epsilon_net_radius(make_linear_model(3), 256);
  double r5 = epsilon_net_radius(make_linear_model(5), 256);
  EXPECT_LT(r5, r3);
  EXPECT_GE(r5, 0);
  double prev = r1;
  for (int n = 2; n <= 8; ++n) {
    double r = epsilon_net_radius(make_linear_model(n), 256);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(EpsilonNet, BruteForceOracle) {
  // 10^6 grid points against the explicit fixed-point list
  for (int n : {3, 5}) {
    auto m = make_linear_model(n);
    auto fp = fixed_points(m);
    std::vector<TorusPoint> pts;
    for (auto& r : fp) pts.push_back(r.point());
    const int G = 1000;
    double worst = 0;
    for (int i = 0; i < G; ++i) {
      for (int j = 0; j < G; ++j) {
        TorusPoint z{double(i) / G, double(j) / G};
        double best = 1;
        for (auto& p : pts) best = std::min(best, torus_distance(z, p));
        worst = std::max(worst, best);
      }
    }
    double r = epsilon_net_radius(m, G);
    EXPECT_NEAR(r, worst, 1e-12) << "N=" << n;
  }
}

TEST(DenseLine, TargetOnLine) {
  auto m = make_linear_model(3);
  Chart ch = Chart::make();
  TorusPoint base{0.1, 0.2};
  auto t = ch.point(base, 0.0, 0.3);
  auto h = dense_line_near_point(m, base, Direction::unstable, t, 1e-9);
  EXPECT_EQ(h.winding, 0);
  EXPECT_LT(torus_distance(h.point, t), 1e-12);
  EXPECT_NEAR(h.param, 0.3, 1e-12);
  auto t2 = ch.point(base, -0.2, 0.0);
  auto h2 = dense_line_near_point(m, base, Direction::stable, t2, 1e-9);
  EXPECT_EQ(h2.winding, 0);
  EXPECT_NEAR(h2.param, -0.2, 1e-12);
}

TEST(DenseLine, GenericTargets) {
  auto m = make_linear_model(10);
  Chart ch = Chart::make();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 200; ++i) {
    TorusPoint base{U(rng), U(rng)}, target{U(rng), U(rng)};
    for (auto dir : {Direction::stable, Direction::unstable}) {
      auto h = dense_line_near_point(m, base, dir, target, 1e-3);
      EXPECT_LT(h.distance, 1e-3);
      EXPECT_LT(torus_distance(h.point, target), 1e-3);
      auto e = dir == Direction::unstable ? ch.e_u() : ch.e_s();
      TorusPoint walk = wrap(base.u + h.param * e[0], base.v + h.param * e[1]);
      EXPECT_LT(torus_distance(walk, h.point), 1e-9);
    }
  }
}

TEST(DenseLine, PointOnLineModLattice) {
  auto m = make_linear_model(10);
  Chart ch = Chart::make();
  TorusPoint base{0.3, 0.7}, target{0.81, 0.05};
  for (auto dir : {Direction::stable, Direction::unstable}) {
    auto h = dense_line_near_point(m, base, dir, target, 1e-3);
    // walk param along the direction from base and compare with the returned point
    auto e = dir == Direction::unstable ? ch.e_u() : ch.e_s();
    TorusPoint walk = wrap(base.u + h.param * e[0], base.v + h.param * e[1]);
    EXPECT_LT(torus_distance(walk, h.point), 1e-10);
  }
}

TEST(DenseLine, CapFailureReportsBest) {
  auto m = make_linear_model(1);
  try {
    dense_line_near_point(m, TorusPoint{0, 0}, Direction::unstable, TorusPoint{0.37, 0.61}, 1e-12, 10);
    FAIL();
  } catch (const DenseLineError& e) {
    EXPECT_GT(e.best_distance, 0);
  }
  EXPECT_THROW(dense_line_near_point(m, {}, Direction::stable, {}, 0.0), std::invalid_argument);
}
