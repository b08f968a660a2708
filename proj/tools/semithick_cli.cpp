#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semithick/dynamics.hpp"
#include "semithick/model_io.hpp"
#include "semithick/perturbation.hpp"
#include "semithick/stripes.hpp"

using namespace semithick;

namespace {

// Shortest round-trip decimal; locale independent so outputs are byte-stable.
std::string num(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// stdout when path is empty or "-".
class Sink {
 public:
  explicit Sink(const std::string& path) : path_(path) {}
  std::ostream& os() { return buf_; }
  void close() {
    if (path_.empty() || path_ == "-")
      std::cout << buf_.str() << std::flush;
    else
      write_file(path_, buf_.str());
  }

 private:
  std::string path_;
  std::ostringstream buf_;
};

void print_report(const Report& rep) {
  std::cout << "# " << rep.title << "\n";
  for (auto& it : rep.items) {
    std::cout << (it.pass ? "PASS  " : "FAIL  ") << it.name;
    if (std::isfinite(it.value)) std::cout << "  value=" << num(it.value);
    if (std::isfinite(it.bound)) std::cout << "  bound=" << num(it.bound);
    if (!it.detail.empty()) std::cout << "  (" << it.detail << ")";
    std::cout << "\n";
  }
}

void write_reports(const std::string& path, const std::vector<Report>& reps) {
  if (path.empty()) return;
  Json j;
  j["format"] = "semithick-report";
  j["version"] = 1;
  bool all = true;
  auto& arr = j["reports"] = Json::array();
  for (auto& r : reps) {
    all = all && r.pass();
    arr.push_back(r.to_json());
  }
  j["pass"] = all;
  write_file(path, dump(j));
}

int status(bool pass) { return int(pass ? ExitCode::ok : ExitCode::check_failed); }

struct Common {
  std::string model;
  int threads = 0;
};

// ---------- build ----------

struct BuildArgs {
  std::string config, out, report;
};

int cmd_build(const BuildArgs& a) {
  Config c = a.config.empty() ? Config{} : load_config(a.config);
  Model m = build_model(c);
  std::string out = a.out.empty() ? c.outputs.model : a.out;
  std::string rep = a.report.empty() ? c.outputs.report : a.report;
  write_file(out, model_text(m));

  const auto& g = m.map->geometry();
  auto mb = g.cantor().measure_bounds();
  Json r;
  r["format"] = "semithick-build-report";
  r["version"] = 1;
  r["model"] = out;
  r["fingerprint"] = m.fingerprint();
  r["fixed_points"] = fixed_points(g.linear()).size();
  r["lambda"] = g.lambda();
  r["Q_length"] = to_double(g.Q().length());
  r["gap_sum"] = to_double(g.cantor().rule().total());
  r["cantor_measure"] = Json::array({to_double(mb.first), to_double(mb.second)});
  r["leb_S"] = Json::array({to_double(g.UK().x.length()) * to_double(mb.first),
                            to_double(g.UK().x.length()) * to_double(mb.second)});
  r["kappa"] = g.kappa();
  r["UK"] = rect_json(g.UK());
  write_file(rep, dump(r));
  std::cout << "model " << out << " (" << m.fingerprint() << ")\nreport " << rep << "\n";
  return 0;
}

// ---------- verify ----------

struct VerifyArgs {
  int grid = -1, class_grid = -1, cantor_words = -1;
  bool measure = false;
  std::string report;
};

int cmd_verify(const Common& c, const VerifyArgs& a) {
  Model m = load_model(c.model);
  const auto& F = *m.map;
  const auto& run = m.config.run;
  std::vector<Report> reps;
  reps.push_back(verify_finit(F, a.grid > 0 ? a.grid : run.verify_grid));
  reps.push_back(check_delta_init(F, F, m.config.budgets.delta_init, a.class_grid > 0 ? a.class_grid : run.class_grid));
  reps.push_back(verify_cantor(F.geometry().cantor(), a.cantor_words > 0 ? a.cantor_words : run.cantor_words));
  reps.push_back(verify_geometry(F));
  if (a.measure) {
    auto rects = random_rects(F.geometry(), run.lipschitz_rects, run.seed);
    reps.push_back(lipschitz_measure_check(F, rects, run.lipschitz_mc, grid_lipschitz(F), run.seed, c.threads));
  }
  bool all = true;
  for (auto& r : reps) {
    print_report(r);
    all = all && r.pass();
  }
  write_reports(a.report, reps);
  std::cout << (all ? "all checks passed\n" : "some checks failed\n");
  return status(all);
}

// ---------- basin ----------

struct BasinArgs {
  long samples = -1;
  std::vector<long> ladder;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

int cmd_basin(const Common& c, const BasinArgs& a) {
  Model m = load_model(c.model);
  const auto& run = m.config.run;
  long n = a.samples >= 0 ? a.samples : run.basin_samples;
  auto ladder = a.ladder.empty() ? run.basin_ladder : a.ladder;
  auto res = basin_estimate(*m.map, n, ladder, a.seed_set ? a.seed : run.seed, c.threads);
  Sink s(a.out);
  s.os() << "T,samples,in,unresolved,p_in,ci_lo,ci_hi,ci_half,p_unresolved,leb_s_lower,leb_s_upper\n";
  for (auto& r : res.rows)
    s.os() << r.T << "," << res.n_samples << "," << r.in << "," << r.unresolved << "," << num(r.p_in) << ","
           << num(r.interval.lo) << "," << num(r.interval.hi) << "," << num(r.ci) << "," << num(r.p_unresolved) << ","
           << num(res.leb_s_lower) << "," << num(res.leb_s_upper) << "\n";
  s.close();
  std::cerr << "monotone in T up to CI: " << (res.monotone ? "yes" : "no");
  if (res.rows.front().T == 0) std::cerr << "; Leb(S) within T=0 interval: " << (res.t0_within_ci ? "yes" : "no");
  std::cerr << "\n";
  return 0;
}

// ---------- orbit ----------

struct OrbitArgs {
  std::string mode = "points";
  double u = 0.1234, v = 0.5678, x0 = std::nan("");
  long T = -1;
  int k = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

int cmd_orbit(const Common& c, const OrbitArgs& a) {
  Model m = load_model(c.model);
  const auto& F = *m.map;
  const auto& g = F.geometry();
  const auto& run = m.config.run;
  Sink s(a.out);
  if (a.mode == "points") {
    long T = a.T >= 0 ? a.T : 1000;
    auto rec = iterate(F, wrap(a.u, a.v), T, true);
    s.os() << "k,u,v,x,y,member\n";
    for (std::size_t k = 0; k < rec.samples.size(); ++k) {
      auto p = rec.samples[k];
      auto ch = g.chart_of(p);
      auto mem = g.s_membership_chart(ch[0], ch[1]);
      s.os() << k << "," << num(p.u) << "," << num(p.v) << "," << num(ch[0]) << "," << num(ch[1]) << ","
             << (mem == SMember::in ? "in" : mem == SMember::out ? "out" : "unresolved") << "\n";
    }
    s.close();
    return 0;
  }
  long T = a.T > 0 ? a.T : run.orbit_T;
  int k = a.k > 0 ? a.k : run.word_length;
  double X0 = std::isfinite(a.x0) ? a.x0 : to_double(g.UK().x.lo + 0.3 * g.UK().x.length());
  BernoulliSymbols sym(a.seed_set ? a.seed : run.seed);
  auto tab = symbolic_frequencies(F, std::ref(sym), T, k, X0);
  s.os() << "word,length,count,freq,expected,bound,pass\n";
  for (auto& r : tab.rows)
    s.os() << r.word << "," << r.word.size() << "," << r.count << "," << num(r.freq) << "," << num(r.expected) << ","
           << num(r.bound) << "," << (r.pass ? 1 : 0) << "\n";
  s.close();
  std::cerr << "max shift error " << num(tab.max_shift_error) << "\n";
  return status(tab.pass());
}

// ---------- stripes ----------

struct StripesArgs {
  int levels = 8, grid = 256, random_anchors = 4;
  std::vector<double> anchor;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out, report;
};

int cmd_stripes(const Common& c, const StripesArgs& a) {
  Model m = load_model(c.model);
  BasicAnosovMap<Wide> W(m.spec, m.config.budgets);
  StripeOptions o;
  o.grid = a.grid;
  o.random_anchors = a.random_anchors;
  o.seed = a.seed_set ? a.seed : m.config.run.seed;
  o.threads = c.threads;
  for (std::size_t i = 0; i + 1 < a.anchor.size(); i += 2) o.anchors.push_back({a.anchor[i], a.anchor[i + 1]});
  auto S = compute_W(W, a.levels, o);
  Sink s(a.out);
  write_w_csv(s.os(), S);
  s.close();
  print_report(S.report);
  write_reports(a.report, {S.report});
  return status(S.report.pass());
}

// ---------- perturb ----------

struct PerturbArgs {
  std::string mode = "delta";
  int stripes = -1;
  double width = 1e-9, gamma = 1e-6;
  int N = 3, N1 = 5, grid = 96, anchors = 4, class_grid = 100;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out, report, save, input;
};

int cmd_perturb(const Common& c, const PerturbArgs& a) {
  Model m = load_model(c.model);
  const auto& F = *m.map;
  const std::uint64_t seed = a.seed_set ? a.seed : m.config.run.seed;
  Sink s(a.out);
  std::vector<Report> reps;
  bool all = true;
  if (a.mode == "delta" || a.mode == "blend") {
    const bool delta = a.mode == "delta";
    const int n = a.stripes > 0 ? a.stripes : delta ? 50 : 20;
    std::vector<Report> per(n);
    std::vector<double> alpha(n, 0.0);
    parallel_blocks(std::size_t(n), c.threads, [&](std::size_t k) {
      auto rng = block_rng(seed, k);
      auto P = random_stripe(F, rng, a.width);
      if (delta) {
        per[k] = check_delta_lemma(F, P);
      } else {
        auto G = smooth_blend(F, P, 0.0, a.gamma);
        alpha[k] = G.patches().back().alpha;
        per[k] = check_blend(F, G, P, a.gamma);
      }
    });
    if (delta) {
      s.os() << "stripe,delta,dist,ratio,bound_ratio,pass\n";
      Report rep;
      rep.title = "L_Pi closeness on random stripes";
      double worst = 0;
      for (int k = 0; k < n; ++k) {
        const auto& it = per[k].items.back();
        double d = it.bound / std::sqrt(5.0), ratio = d > 0 ? it.value / d : 0;
        worst = std::max(worst, ratio);
        s.os() << k << "," << num(d) << "," << num(it.value) << "," << num(ratio) << "," << num(std::sqrt(5.0)) << ","
               << (per[k].pass() ? 1 : 0) << "\n";
        rep.merge(per[k], "stripe " + std::to_string(k) + ": ");
      }
      rep.add("max dist_Pi / delta <= sqrt5", rep.pass(), worst, std::sqrt(5.0));
      reps.push_back(rep);
    } else {
      s.os() << "stripe,alpha,ratio,bound_ratio,to_L,gamma,jump,pass\n";
      Report rep;
      rep.title = "smoothed linearization on random stripes";
      double worst = 0;
      for (int k = 0; k < n; ++k) {
        const auto& P = per[k];
        double ratio = P.items[0].value, toL = P.items[1].value, jump = P.items[2].value;
        worst = std::max(worst, ratio);
        s.os() << k << "," << num(alpha[k]) << "," << num(ratio) << "," << num(kBlendConstant) << "," << num(toL) << ","
               << num(a.gamma) << "," << num(jump) << "," << (P.pass() ? 1 : 0) << "\n";
        rep.merge(P, "stripe " + std::to_string(k) + ": ");
      }
      rep.add("max dist_C1 / dist_Pi <= C", rep.pass(), worst, kBlendConstant);
      reps.push_back(rep);
    }
  } else if (a.mode == "levels") {
    BasicAnosovMap<Wide> W(m.spec, m.config.budgets);
    LevelsOptions o;
    o.stripes.grid = a.grid;
    o.stripes.random_anchors = a.anchors;
    o.stripes.seed = seed;
    o.stripes.threads = c.threads;
    o.class_grid = a.class_grid;
    auto R = linearize_levels(W, a.N, a.N1, o);
    s.os() << "level,independent,dependent,w_change,oscillation,closeness\n";
    for (auto& st : R.stages)
      s.os() << st.level << "," << st.independent << "," << st.dependent << "," << num(st.w_change) << ","
             << num(st.oscillation) << "," << num(st.closeness) << "\n";
    reps.push_back(R.report);
    if (!a.save.empty()) write_file(a.save, dump(perturbed_to_json(R.map, m)));
  } else if (a.mode == "check") {
    if (a.input.empty()) throw ArtifactError(ExitCode::usage, "perturb --mode check needs --input");
    auto text = read_file(a.input);
    auto G = perturbed_from_json<Wide>(parse_json(text, "perturbed " + a.input, ExitCode::corrupt), m,
                                       "perturbed " + a.input);
    DoubleView<BasicPerturbedMap<Wide>> V{G};
    reps.push_back(check_delta_init(F, V, m.config.budgets.delta_init, a.class_grid));
    s.os() << "patches\n" << G.patches().size() << "\n";
  }
  s.close();
  for (auto& r : reps) {
    print_report(r);
    all = all && r.pass();
  }
  write_reports(a.report, reps);
  return status(all);
}

// ---------- render ----------

struct RenderArgs {
  std::string what = "s", out;
  int width = 512, height = 512;
  long T = 64;
};

int cmd_render(const Common& c, const RenderArgs& a) {
  if (a.out.empty()) throw ArtifactError(ExitCode::usage, "render needs --out");
  Model m = load_model(c.model);
  const auto& F = *m.map;
  const auto& g = F.geometry();
  std::vector<std::uint8_t> px(std::size_t(a.width) * std::size_t(a.height));
  parallel_blocks(std::size_t(a.height), c.threads, [&](std::size_t row) {
    for (int col = 0; col < a.width; ++col) {
      double fx = (col + 0.5) / a.width, fy = 1 - (double(row) + 0.5) / a.height;
      std::uint8_t v = 0;
      if (a.what == "s") {
        // chart window R~, rows top to bottom
        const auto& R = g.Rt();
        double X = R.x.lo + fx * R.x.length(), Y = R.y.lo + fy * R.y.length();
        auto mem = g.s_membership_chart(X, Y);
        v = mem == SMember::in ? 255 : mem == SMember::unresolved ? 128 : 0;
      } else {
        auto rec = iterate(F, TorusPoint{fx, fy}, a.T);
        if (rec.entry_time) v = std::uint8_t(255 - (200 * *rec.entry_time) / std::max<long>(a.T, 1));
      }
      px[row * std::size_t(a.width) + std::size_t(col)] = v;
    }
  });
  std::string data = std::to_string(a.width) + " " + std::to_string(a.height) + " 255\n";
  data.append(reinterpret_cast<const char*>(px.data()), px.size());
  write_file(a.out, data);
  return 0;
}

constexpr const char* kExitCodes =
    "Exit status: 0 ok, 1 a requested check failed, 2 usage or invalid config, 3 file IO, 4 unsupported artifact "
    "version, 5 corrupt or tampered artifact, 6 construction precondition failed.";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build and check the semi-thick horseshoe Anosov model."};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(kExitCodes);
  Common common;
  app.add_option("--threads", common.threads, "Worker cap (0: all cores); outputs do not depend on it")
      ->check(CLI::NonNegativeNumber);

  auto model_opt = [&](CLI::App* sub) {
    sub->add_option("-m,--model", common.model, "Model artifact written by build")->required();
  };

  BuildArgs ba;
  auto* build = app.add_subcommand("build", "Construct the model from a config and write the artifact and a report");
  build->add_option("-c,--config", ba.config, "JSON config (version 1); defaults when omitted");
  build->add_option("-o,--out", ba.out, "Model artifact path (default: outputs.model)");
  build->add_option("--report", ba.report, "Build report path (default: outputs.report)");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the F_init items, class predicates, Cantor and geometry checks");
  model_opt(verify);
  verify->add_option("--grid", va.grid, "F_init grid per stripe (grid x grid/2)")->check(CLI::PositiveNumber);
  verify->add_option("--class-grid", va.class_grid, "Class predicate grid")->check(CLI::PositiveNumber);
  verify->add_option("--cantor-words", va.cantor_words, "Longest word for the Cantor measure law")
      ->check(CLI::Range(1, 16));
  verify->add_flag("--measure", va.measure, "Also run the Lipschitz measure inequality on random rectangles");
  verify->add_option("--report", va.report, "JSON report path");

  BasinArgs bs;
  auto* basin = app.add_subcommand("basin", "Monte-Carlo estimate of the basin of S along a T ladder");
  model_opt(basin);
  basin->add_option("-n,--samples", bs.samples, "Uniform seeds (>= 1)")->check(CLI::PositiveNumber);
  basin->add_option("--ladder", bs.ladder, "Comma-separated T values")->delimiter(',');
  auto* bseed = basin->add_option("--seed", bs.seed, "RNG seed (default: run.seed of the model)");
  basin->add_option("-o,--out", bs.out, "CSV path (default stdout)");
  basin->footer(
      "CSV columns: T, samples, in (seeds entered S by T), unresolved (entered the depth-D cover only), p_in, "
      "ci_lo, ci_hi, ci_half (95% Wilson), p_unresolved, leb_s_lower, leb_s_upper (area of S from Cantor bounds).");

  OrbitArgs oa;
  auto* orbit = app.add_subcommand("orbit", "Single orbit, or symbol frequencies of a Bernoulli horseshoe orbit");
  model_opt(orbit);
  orbit->add_option("--mode", oa.mode, "points | frequencies")->check(CLI::IsMember({"points", "frequencies"}));
  orbit->add_option("-u", oa.u, "Torus seed u (points)");
  orbit->add_option("-v", oa.v, "Torus seed v (points)");
  orbit->add_option("-T,--steps", oa.T, "Iterates (default 1000 for points, run.orbit_T for frequencies)")
      ->check(CLI::NonNegativeNumber);
  orbit->add_option("-k,--word-length", oa.k, "Longest word (frequencies)")->check(CLI::Range(1, 20));
  orbit->add_option("--x0", oa.x0, "Starting chart abscissa (frequencies)");
  auto* oseed = orbit->add_option("--seed", oa.seed, "Symbol stream seed (default: run.seed)");
  orbit->add_option("-o,--out", oa.out, "CSV path (default stdout)");
  orbit->footer(
      "points CSV: k, u, v (torus), x, y (p0 chart), member (in | out | unresolved); stops at the first entry "
      "into S. frequencies CSV: word, length, count, freq, expected (2^-length), bound (4 sqrt(expected/T)), pass.");

  StripesArgs sa;
  auto* stripes = app.add_subcommand("stripes", "W-curve polylines of levels 0..L around anchor fibers");
  model_opt(stripes);
  stripes->add_option("--levels", sa.levels, "Highest level L")->check(CLI::Range(1, 40));
  stripes->add_option("--grid", sa.grid, "Abscissae across the frame")->check(CLI::Range(2, 1 << 16));
  stripes->add_option("--random-anchors", sa.random_anchors, "Random anchors added to the defaults")
      ->check(CLI::NonNegativeNumber);
  stripes->add_option("--anchor", sa.anchor, "Anchor X,Y (replaces the defaults; repeatable)")
      ->delimiter(',')
      ->expected(2, 1 << 20);
  auto* sseed = stripes->add_option("--seed", sa.seed, "Seed of the random anchors");
  stripes->add_option("-o,--out", sa.out, "CSV path (default stdout)");
  stripes->add_option("--report", sa.report, "JSON report path");
  stripes->footer(
      "CSV columns: chain (anchor index), level, role (lower | upper), family (0 bottom, 1 top edge of UK), stripe "
      "(1 when the level is a stripe), k (abscissa index), x, y (p0 chart, 50-digit decimals). Each level gives one "
      "lower and one upper polyline.");

  PerturbArgs pa;
  auto* perturb = app.add_subcommand("perturb", "Linearization on stripes: delta law, smoothed blend, level stages");
  model_opt(perturb);
  perturb->add_option("--mode", pa.mode, "delta | blend | levels | check")
      ->check(CLI::IsMember({"delta", "blend", "levels", "check"}));
  perturb->add_option("--stripes", pa.stripes, "Random stripes (delta: 50, blend: 20)")->check(CLI::PositiveNumber);
  perturb->add_option("--width", pa.width, "Largest random stripe width")->check(CLI::PositiveNumber);
  perturb->add_option("--gamma", pa.gamma, "C0 target for the blend")->check(CLI::PositiveNumber);
  perturb->add_option("--N", pa.N, "levels: last untouched level");
  perturb->add_option("--N1", pa.N1, "levels: last linearized level");
  perturb->add_option("--grid", pa.grid, "levels: W grid")->check(CLI::Range(2, 1 << 16));
  perturb->add_option("--anchors", pa.anchors, "levels: random anchors")->check(CLI::NonNegativeNumber);
  perturb->add_option("--class-grid", pa.class_grid, "levels, check: class predicate grid")->check(CLI::PositiveNumber);
  auto* pseed = perturb->add_option("--seed", pa.seed, "Stripe / anchor seed (default: run.seed)");
  perturb->add_option("--save", pa.save, "levels: write the perturbed map artifact");
  perturb->add_option("--input", pa.input, "check: perturbed map artifact to test");
  perturb->add_option("-o,--out", pa.out, "CSV path (default stdout)");
  perturb->add_option("--report", pa.report, "JSON report path");
  perturb->footer(
      "delta CSV: stripe, delta (vertical oscillation), dist (dist_Pi(F, L_Pi F)), ratio, bound_ratio (sqrt 5), "
      "pass. blend CSV: stripe, alpha, ratio (dist_C1 / dist_Pi), bound_ratio (2 (1 + max|rho'|)), to_L (C0 "
      "distance to L_Pi F), gamma, jump (derivative jump at the stripe edge), pass. levels CSV: level, "
      "independent, dependent, w_change, oscillation, closeness.");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Grayscale raster: S in the R~ window, or entry times on the torus");
  model_opt(render);
  render->add_option("--what", ra.what, "s | entry")->check(CLI::IsMember({"s", "entry"}));
  render->add_option("--width", ra.width, "Pixels")->check(CLI::Range(1, 1 << 14));
  render->add_option("--height", ra.height, "Pixels")->check(CLI::Range(1, 1 << 14));
  render->add_option("-T,--steps", ra.T, "entry: iterate cap")->check(CLI::NonNegativeNumber);
  render->add_option("-o,--out", ra.out, "Raster path")->required();
  render->footer(
      "Raster: one text line \"width height 255\" then width*height bytes, rows top to bottom. s: 255 in S, 128 "
      "unresolved at Cantor depth D, 0 outside. entry: 255 - 200 t/T for entry time t, 0 when no entry.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : int(ExitCode::usage);
  }

  bs.seed_set = bseed->count() > 0;
  oa.seed_set = oseed->count() > 0;
  sa.seed_set = sseed->count() > 0;
  pa.seed_set = pseed->count() > 0;
  try {
    if (*build) return cmd_build(ba);
    if (*verify) return cmd_verify(common, va);
    if (*basin) return cmd_basin(common, bs);
    if (*orbit) return cmd_orbit(common, oa);
    if (*stripes) return cmd_stripes(common, sa);
    if (*perturb) return cmd_perturb(common, pa);
    if (*render) return cmd_render(common, ra);
  } catch (const ArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(e.code());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ExitCode::usage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ExitCode::check_failed);
  }
  return int(ExitCode::usage);
}
