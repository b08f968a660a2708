// Acceptance run: twelve criteria, one PASS/FAIL line each. Tolerances and time budgets are pinned below.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semithick/dynamics.hpp"
#include "semithick/model_io.hpp"
#include "semithick/perturbation.hpp"
#include "semithick/stripes.hpp"

using namespace semithick;
namespace fs = std::filesystem;

namespace {

constexpr double kBudget1 = 1, kBudget2 = 1, kBudget3 = 5, kBudget4 = 120, kBudget5 = 30, kBudget6 = 60,
                 kBudget7 = 60, kBudget8 = 120, kBudget9 = 60, kBudget10 = 300, kBudget11 = 120, kBudget12 = 300;

constexpr double kCylinderTol = 1e-12;
constexpr double kEndpointTol = 1e-9;
constexpr double kGapTol = 1e-12;
constexpr int kEndpoints = 1000;
constexpr int kFinitGrid = 1000;  // 1000 x 500 points per stripe, 1e6 in total
constexpr double kMinDilation = 1.2;
constexpr long kJacobianPoints = 100000;
constexpr double kJacobianStep = 1e-7;
constexpr double kJacobianTol = 1e-6;
constexpr double kJacobianResolution = 1e-25;
constexpr int kDeltaStripes = 50;
constexpr double kDeltaRatio = 2.2360679774997896964 + 1e-6;  // sqrt 5 + 1e-6
constexpr int kBlendStripes = 20;
constexpr double kBlendRatio = 5.75;  // 2 (1 + max |rho'|), quintic rho
constexpr double kGamma = 1e-6;
constexpr double kStripeWidth = 1e-9;
constexpr int kStripeGrid = 4096;
constexpr int kStripeExtraLevels = 5;
constexpr long kBirkhoffT = 1000000;
constexpr int kBirkhoffWords = 5;
constexpr double kBirkhoffSigmas = 4;
constexpr long kBasinSamples = 1000000;
const std::vector<long> kBasinLadder{0, 4, 16, 64, 256};
constexpr int kLipRects = 100;
constexpr long kLipMc = 100000;
constexpr double kLipSigmas = 3;
constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string g6(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

const Model& model() {
  static const Model m = build_model(Config{});
  return m;
}

// ---------- 1 ----------

Outcome fixed_point_counts() {
  const Int expected[] = {1, 5, 16, 45, 121};
  std::ostringstream os;
  bool ok = true;
  for (int n = 1; n <= 5; ++n) {
    // oracle: integer power of [[2,1],[1,1]], |det(M^n - I)| = trace - 2
    Int a = 1, b = 0, c = 0, d = 1;
    for (int k = 0; k < n; ++k) {
      Int a2 = 2 * a + c, b2 = 2 * b + d, c2 = a + c, d2 = b + d;
      a = a2, b = b2, c = c2, d = d2;
    }
    Int oracle = a + d - 2;
    auto m = make_linear_model(n);
    auto fps = fixed_points(m);
    // each point is fixed exactly: M (nu, nv) = (nu, nv) mod den
    bool fixed = true;
    for (auto& p : fps)
      if (mod_pos(m.a * p.nu + m.b * p.nv - p.nu, p.den) != 0 || mod_pos(m.c * p.nu + m.d * p.nv - p.nv, p.den) != 0)
        fixed = false;
    bool distinct = true;
    for (std::size_t i = 0; i < fps.size() && distinct; ++i)
      for (std::size_t j = i + 1; j < fps.size(); ++j)
        if (fps[i].nu * fps[j].den == fps[j].nu * fps[i].den && fps[i].nv * fps[j].den == fps[j].nv * fps[i].den) {
          distinct = false;
          break;
        }
    bool here = Int(fps.size()) == oracle && oracle == expected[n - 1] && fixed && distinct;
    ok = ok && here;
    os << (n > 1 ? " " : "") << fps.size();
  }
  return {ok, "counts " + os.str()};
}

// ---------- 2 ----------

Outcome cylinder_law() {
  const auto& c = model().map->geometry().cantor();
  auto [lo, hi] = c.measure_bounds();
  double worst = 0;
  int words = 0;
  for (int n = 1; n <= 8; ++n)
    for (unsigned bits = 0; bits < (1u << n); ++bits) {
      std::vector<int> w(n);
      for (int k = 0; k < n; ++k) w[k] = int((bits >> (n - 1 - k)) & 1u);
      auto [wl, wu] = c.cylinder_measure(w);
      double target = std::ldexp(1.0, -n);
      worst = std::max({worst, std::abs(wl / lo - target), std::abs(wu / hi - target)});
      ++words;
    }
  return {words == 510 && worst <= kCylinderTol, std::to_string(words) + " words, max error " + g6(worst)};
}

// ---------- 3 ----------

Outcome bowen_derivative() {
  const auto& g = model().map->geometry();
  auto cp = std::make_shared<const CantorSet>(g.cantor());
  const BowenMap f[2] = {BowenMap(cp, Half::left), BowenMap(cp, Half::right)};
  const int D = cp->depth();
  auto rng = block_rng(kSeed, 3);
  double dev = 0, min_in = 1e300;
  int n = 0;
  while (n < kEndpoints) {
    // endpoints of a random cylinder of length 2..D; the first symbol picks the half
    int len = 2 + int(rng() % unsigned(D - 1));
    std::vector<int> w(len);
    for (auto& s : w) s = int(rng() & 1u);
    auto iv = cp->cylinder(w);
    const auto& fm = f[w[0]];
    for (double y : {iv.lo, iv.hi}) {
      if (!fm.source().contains(y)) continue;
      dev = std::max(dev, std::abs(fm.deriv(y) - 2));
      ++n;
    }
    // a random gap of the same step inside the same half
    const auto& gaps = cp->gaps(len);
    const auto& gp = gaps[rng() % gaps.size()];
    for (const auto& h : f)
      if (h.source().contains(gp.lo) && h.source().contains(gp.hi))
        for (int j = 1; j < 16; ++j) min_in = std::min(min_in, h.deriv(gp.lo + gp.length() * j / 16));
  }
  return {dev <= kEndpointTol && min_in >= 2 - kGapTol,
          std::to_string(n) + " endpoints, max |f' - 2| " + g6(dev) + ", min f' in gaps " + g6(min_in)};
}

// ---------- 4 ----------

Outcome finit_suite() {
  auto rep = verify_finit(*model().map, kFinitGrid);
  int items = 0;
  bool ok = true;
  double dil = 0, cone = 0;
  for (auto& it : rep.items) {
    if (it.name.empty() || it.name[0] < '1' || it.name[0] > '7') continue;
    ++items;
    ok = ok && it.pass;
    if (it.name[0] == '6') dil = it.value;
    if (it.name[0] == '7') cone = it.value;
  }
  ok = ok && items == 7 && dil >= kMinDilation && cone > 0;
  return {ok, std::to_string(items) + " items, min dilation " + g6(dil) + ", cone margin " + g6(cone)};
}

// ---------- 5 ----------

Outcome jacobian_cross_check() {
  const auto& F = *model().map;
  const auto& g = F.geometry();
  HorseshoeSpec s = model().spec;
  s.params.cantor_resolution = kJacobianResolution;
  BasicAnosovMap<Wide> W(s, model().config.budgets);
  double worst_off = 0, worst_on = 0;
  int on = 0;
  // RH_i, where the fiber map is nonlinear: step scaled to the local smooth piece
  auto local = [&](int i, double X, double Y) {
    Wide WX(X), WY(Y);
    auto J = W.differential_chart(WX, WY);
    Wide hy = W.geometry().vertical(i).piece(WY).length() * Wide(kJacobianStep);
    auto N = W.numeric_differential_local(i, WX, WY, Wide(kJacobianStep), hy);
    worst_on = std::max(worst_on, to_double(op_norm(N[0] - J.a1, N[1], N[2] - J.delta, N[3] - J.a2) / op_norm(J)));
    ++on;
  };
  for (long k = 0; k < kJacobianPoints; ++k) {
    auto rng = block_rng(kSeed + 5, std::uint64_t(k));
    double u = unit_real(rng), v = unit_real(rng);
    if (k % 4 >= 2) {
      int i = int(k % 4) - 2;
      local(i, g.RH(i).x.lo + u * g.RH(i).x.length(), g.RQ(i).lo + v * g.RQ(i).length());
      continue;
    }
    // uniform torus points, and uniform points of the R~ window
    TorusPoint p = k % 4 == 0 ? TorusPoint{u, v}
                              : g.point_of(g.Rt().x.lo + u * g.Rt().x.length(), g.Rt().y.lo + v * g.Rt().y.length());
    auto c = g.chart_of(p);
    if (int i = g.rh_index(c[0], c[1]); i >= 0) {
      local(i, c[0], c[1]);
      continue;
    }
    auto J = F.differential(p);
    auto N = F.numeric_differential(p, kJacobianStep, kJacobianStep);
    worst_off = std::max(worst_off, op_norm(N[0] - J.a1, N[1], N[2] - J.delta, N[3] - J.a2) / op_norm(J));
  }
  return {std::max(worst_off, worst_on) <= kJacobianTol,
          std::to_string(kJacobianPoints) + " points (" + std::to_string(on) + " in RH), max relative error " +
              g6(worst_off) + " off RH, " + g6(worst_on) + " in RH"};
}

// ---------- 6 ----------

Outcome delta_lemma() {
  const auto& F = *model().map;
  double worst = 0;
  int zero = 0;
  bool ok = true;
  for (int k = 0; k < kDeltaStripes; ++k) {
    auto rng = block_rng(kSeed + 6, std::uint64_t(k));
    auto P = random_stripe(F, rng, kStripeWidth);
    double delta = vertical_oscillation(F, P);
    StripeLinearization<AnosovMap> L{F, P};
    double dist = stripe_distance(F, L, P);
    if (delta <= 0) {
      ++zero;
      ok = ok && dist == 0;
      continue;
    }
    worst = std::max(worst, dist / delta);
  }
  ok = ok && worst <= kDeltaRatio && zero < kDeltaStripes;
  return {ok, std::to_string(kDeltaStripes) + " stripes, max dist_Pi / delta " + g6(worst)};
}

// ---------- 7 ----------

Outcome blend_constant() {
  const auto& F = *model().map;
  double worst = 0, to_L = 0;
  bool ok = true;
  for (int k = 0; k < kBlendStripes; ++k) {
    auto rng = block_rng(kSeed + 7, std::uint64_t(k));
    auto P = random_stripe(F, rng, kStripeWidth);
    auto G = smooth_blend(F, P, 0.0, kGamma);
    auto rep = check_blend(F, G, P, kGamma);
    const auto* amp = rep.find("dist_C1(F0, F) <= C dist_Pi(F0, L_Pi F0)");
    const auto* c0 = rep.find("C0 distance to L_Pi(F0) < gamma");
    if (!amp || !c0) return {false, "blend report is missing an item"};
    worst = std::max(worst, amp->value);
    to_L = std::max(to_L, c0->value);
    ok = ok && amp->value <= kBlendRatio && c0->value < kGamma;
  }
  return {ok, std::to_string(kBlendStripes) + " stripes, max C1 amplification " + g6(worst) + ", max C0 to L_Pi " +
                  g6(to_L) + " (gamma " + g6(kGamma) + ")"};
}

// ---------- 8 ----------

Outcome stripe_laws() {
  BasicAnosovMap<Wide> W(model().spec, model().config.budgets);
  int L = std::max(frame_level(W), vertical_edge_level(W).level);
  StripeOptions o;
  o.grid = kStripeGrid;
  o.seed = kSeed;
  auto S = compute_W(W, L + kStripeExtraLevels, o);
  const auto* nest = S.report.find("stripes nested or closure-disjoint");
  const auto* slope = S.report.find("W slopes < 1");
  bool ok = S.report.pass() && nest && nest->value == 0 && slope && slope->value < 1;
  std::string first;
  for (auto& it : S.report.items)
    if (!it.pass && first.empty()) first = ", first failure: " + it.name;
  return {ok, "levels 0.." + std::to_string(L + kStripeExtraLevels) + ", " + std::to_string(S.chains.size()) +
                  " chains, nesting violations " + (nest ? g6(nest->value) : "?") + ", max slope " +
                  (slope ? g6(slope->value) : "?") + first};
}

// ---------- 9 ----------

Outcome birkhoff() {
  const auto& F = *model().map;
  const auto& g = F.geometry();
  double X0 = g.UK().x.lo + 0.3 * g.UK().x.length();
  std::string detail;
  for (int strike = 0; strike < 2; ++strike) {
    BernoulliSymbols sym(kSeed + 9 + std::uint64_t(strike));
    auto tab = symbolic_frequencies(F, std::ref(sym), kBirkhoffT, kBirkhoffWords, X0);
    double worst = 0;
    bool ok = tab.rows.size() == 62;
    for (auto& r : tab.rows) {
      double p = std::ldexp(1.0, -int(r.word.size()));
      double z = std::abs(r.freq - p) / std::sqrt(p / double(kBirkhoffT));
      worst = std::max(worst, z);
      ok = ok && z <= kBirkhoffSigmas;
    }
    detail += (strike ? "; retry " : "") + std::to_string(tab.rows.size()) + " words, max |freq - 2^-|w|| / sqrt(2^-|w|/T) " + g6(worst);
    if (ok) return {true, detail};
  }
  return {false, detail};
}

// ---------- 10 ----------

Outcome basin() {
  auto r = basin_estimate(*model().map, kBasinSamples, kBasinLadder, kSeed + 10);
  if (r.rows.size() != kBasinLadder.size() || r.rows.front().T != 0) return {false, "unexpected ladder"};
  const auto& r0 = r.rows.front();
  bool within = r0.interval.lo <= r.leb_s_lower && r.leb_s_lower <= r0.interval.hi;
  bool mono = true;
  for (std::size_t j = 0; j + 1 < r.rows.size(); ++j)
    if (r.rows[j + 1].p_in < r.rows[j].p_in - r.rows[j].ci) mono = false;
  std::ostringstream os;
  os << "Leb(S) >= " << g6(r.leb_s_lower) << " vs p_in(0) = " << g6(r0.p_in) << " [" << g6(r0.interval.lo) << ", "
     << g6(r0.interval.hi) << "], p_in(T):";
  for (auto& row : r.rows) os << " " << row.T << ":" << g6(row.p_in);
  os << ", headline p_in(256) = " << g6(r.rows.back().p_in);
  return {within && mono, os.str()};
}

// ---------- 11 ----------

Outcome lipschitz_measure() {
  const auto& F = *model().map;
  double lip = grid_lipschitz(F);
  auto rects = random_rects(F.geometry(), kLipRects, kSeed + 11);
  std::vector<AreaEstimate> est(rects.size());
  parallel_blocks(rects.size(), 0, [&](std::size_t k) {
    auto rng = block_rng(kSeed + 11, k);
    est[k] = image_area(F, rects[k], kLipMc, rng);
  });
  int bad = 0;
  double worst = -1e300;
  for (std::size_t k = 0; k < rects.size(); ++k) {
    double bound = lip * lip * rects[k].area();
    double z = est[k].sigma > 0 ? (est[k].area - bound) / est[k].sigma : (est[k].area > bound ? 1e300 : -1e300);
    worst = std::max(worst, z);
    if (z > kLipSigmas) ++bad;
  }
  return {bad == 0, std::to_string(kLipRects) + " rects, Lip " + g6(lip) + ", violations beyond 3 sigma " +
                        std::to_string(bad)};
}

// ---------- 12 ----------

struct Cli {
  std::string exe;
  fs::path dir;

  int run(const std::string& args, const std::string& stdout_name) const {
    std::string cmd = "\"" + exe + "\" " + args + " > \"" + (dir / stdout_name).string() + "\" 2>/dev/null";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
  std::string file(const std::string& name) const { return read_file(dir / name); }
};

Outcome determinism(const std::string& exe, const fs::path& work) {
  fs::create_directories(work);
  Cli cli{exe, work};
  auto q = [&](const std::string& name) { return "\"" + (work / name).string() + "\""; };
  std::vector<std::string> mismatched;
  int runs = 0;
  bool rc_ok = true;
  // each command twice: once with --threads 1, once with --threads 3; outputs and stdout must be identical
  auto twice = [&](const std::string& tag, const std::string& args, const std::vector<std::string>& outs,
                   int expect_rc = 0) {
    std::vector<std::string> got[2];
    for (int r = 0; r < 2; ++r) {
      std::string sfx = "." + std::to_string(r);
      std::string a = args;
      for (auto& o : outs) {
        auto pos = a.find("@" + o);
        if (pos != std::string::npos) a.replace(pos, o.size() + 1, q(o + sfx));
      }
      int rc = cli.run("--threads " + std::to_string(r == 0 ? 1 : 3) + " " + a, tag + ".stdout" + sfx);
      ++runs;
      if (rc != expect_rc) {
        rc_ok = false;
        mismatched.push_back(tag + " exit " + std::to_string(rc));
      }
      got[r].push_back(cli.file(tag + ".stdout" + sfx));
      for (auto& o : outs) got[r].push_back(cli.file(o + sfx));
      // the CLI echoes its output paths; the run suffix is ours, not the program's
      for (auto& text : got[r])
        for (auto& o : outs) {
          std::string from = (work / (o + sfx)).string(), to = (work / o).string();
          for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
            text.replace(pos, from.size(), to);
        }
    }
    if (got[0] != got[1]) mismatched.push_back(tag);
  };
  const std::string m = q("model.json.0");
  twice("build", "build -o @model.json --report @build_report.json", {"model.json", "build_report.json"});
  twice("verify", "verify -m " + m + " --grid 300 --class-grid 100 --report @verify.json", {"verify.json"});
  twice("basin", "basin -m " + m + " -n 100000 --ladder 0,4,16 -o @basin.csv", {"basin.csv"});
  twice("orbit", "orbit -m " + m + " --mode points -u 0.31 -v 0.77 -T 400 -o @orbit.csv", {"orbit.csv"});
  twice("freq", "orbit -m " + m + " --mode frequencies -T 200000 -o @freq.csv", {"freq.csv"});
  twice("stripes", "stripes -m " + m + " --levels 4 --grid 128 -o @w.csv", {"w.csv"});
  twice("delta", "perturb -m " + m + " --mode delta --stripes 12 -o @delta.csv", {"delta.csv"});
  twice("blend", "perturb -m " + m + " --mode blend --stripes 6 -o @blend.csv", {"blend.csv"});
  // the class-membership item of linearize_levels fails at computable levels, so exit 1 is the expected status
  twice("levels", "perturb -m " + m + " --mode levels --N 3 --N1 4 --grid 48 --anchors 1 --class-grid 20 -o "
                  "@levels.csv --save @perturbed.json",
        {"levels.csv", "perturbed.json"}, 1);
  twice("render", "render -m " + m + " --what entry -T 16 --width 96 --height 64 -o @entry.raw", {"entry.raw"});
  std::string detail = std::to_string(runs) + " runs";
  if (!mismatched.empty()) {
    detail += ", differing:";
    for (auto& s : mismatched) detail += " " + s;
  }
  return {mismatched.empty() && rc_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli_path, workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--cli", cli_path, "semithick executable (criterion 12)")->required();
  app.add_option("--workdir", workdir, "Scratch directory for criterion 12");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double budget;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "fixed-point counts", kBudget1, fixed_point_counts},
      {2, "cylinder measure law", kBudget2, cylinder_law},
      {3, "Bowen map derivative", kBudget3, bowen_derivative},
      {4, "F_init suite on 1e6 points", kBudget4, finit_suite},
      {5, "analytic vs central-difference Jacobian", kBudget5, jacobian_cross_check},
      {6, "linearization closeness on thin stripes", kBudget6, delta_lemma},
      {7, "smoothed linearization constant", kBudget7, blend_constant},
      {8, "stripe laws to level L+5", kBudget8, stripe_laws},
      {9, "cylinder statistics of Bernoulli orbits", kBudget9, birkhoff},
      {10, "basin estimate sanity", kBudget10, basin},
      {11, "Lipschitz measure inequality", kBudget11, lipschitz_measure},
      {12, "determinism across runs and --threads", kBudget12, [&] { return determinism(cli_path, workdir); }},
  };

  model();  // built once, outside the timed sections
  int failed = 0;
  for (auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    double t = seconds_since(t0);
    bool in_time = t < c.budget;
    bool pass = out.pass && in_time;
    if (!pass) ++failed;
    std::printf("[%s] %2d %s: %s; %.2f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), t, c.budget, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  std::printf("%s\n", failed ? "acceptance: FAILED" : "acceptance: all criteria passed");
  return failed ? 1 : 0;
}
