#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "anosov_map.hpp"
#include "perturbation.hpp"

namespace semithick {

using Json = nlohmann::ordered_json;

// Process exit status of the command-line tool.
enum class ExitCode : int {
  ok = 0,
  check_failed = 1,  // a requested check ran and failed
  usage = 2,         // bad flags or an invalid config
  io = 3,            // file missing, unreadable or unwritable
  version = 4,       // artifact or config written by another format version
  corrupt = 5,       // malformed or tampered artifact
  build = 6,         // a construction precondition failed
};

class ArtifactError : public std::runtime_error {
 public:
  ArtifactError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

inline constexpr int kConfigVersion = 1;
inline constexpr int kModelVersion = 1;
inline constexpr int kPerturbedVersion = 1;
inline constexpr const char* kModelFormat = "semithick-model";
inline constexpr const char* kPerturbedFormat = "semithick-perturbed";

// Experiment defaults recorded with the model; command-line flags override them.
struct RunSettings {
  std::uint64_t seed = 20240601;
  long basin_samples = 1000000;
  std::vector<long> basin_ladder{0, 4, 16, 64, 256};
  long orbit_T = 1000000;
  int word_length = 5;
  int lipschitz_rects = 100;
  long lipschitz_mc = 100000;
  int verify_grid = 1000;
  int class_grid = 400;
  int cantor_words = 8;
};

struct OutputPaths {
  std::string model = "model.json";
  std::string report = "build_report.json";
};

struct Config {
  HorseshoeParams params{};
  MapBudgets budgets{};
  RunSettings run{};
  OutputPaths outputs{};
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& key, const std::string& msg) {
  throw ArtifactError(ExitCode::usage, "config: " + key + " " + msg);
}

inline void require(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) config_error(key, msg);
}

inline bool finite(double x) { return std::isfinite(x); }

// Object reader that rejects keys it was never asked about.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_, "must be an object");
  }
  ~StrictObject() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto& [k, v] : j_.items())
      if (!seen_.count(k)) config_error(where_ + "." + k, "is not a known key");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw std::invalid_argument("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer() && !it->is_number_unsigned()) throw std::invalid_argument("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && it->template get<long long>() < 0) throw std::invalid_argument("");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::invalid_argument("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      config_error(where_ + "." + key, "has the wrong type");
    }
  }

  void get(const std::string& key, std::optional<double>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      if (it != j_.end()) out.reset();
      return;
    }
    if (!it->is_number()) config_error(where_ + "." + key, "must be a number or null");
    out = it->template get<double>();
  }

  void get(const std::string& key, std::vector<long>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) config_error(where_ + "." + key, "must be an array of integers");
    out.clear();
    for (auto& e : *it) {
      if (!e.is_number_integer()) config_error(where_ + "." + key, "must be an array of integers");
      out.push_back(e.template get<long>());
    }
  }

  const Json* section(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

// Ranges are the preconditions of the constructors that consume each field; a config that passes never trips an
// argument check during the build. Conditions that need derived geometry (the gap-rule sum against |Q|, the a_1
// override against the forced gap) are left to the construction, whose message is passed through.
inline void validate(const Config& c) {
  using detail::finite;
  using detail::require;
  const auto& p = c.params;
  require(p.n_init >= 1 && p.n_init <= 12, "model.n_init", "must lie in 1..12");
  require(finite(p.kappa_fraction) && p.kappa_fraction > 0 && p.kappa_fraction < 1, "model.kappa_fraction",
          "must lie in (0,1)");
  require(finite(p.theta) && p.theta > 0 && p.theta < 1, "model.theta", "must lie in (0,1)");
  if (p.a1_override) require(finite(*p.a1_override) && *p.a1_override > 0, "model.a1", "must be positive");
  if (p.coeff_override) require(finite(*p.coeff_override) && *p.coeff_override > 0, "model.coeff", "must be positive");
  require(p.depth >= 1 && p.depth <= 24, "model.depth", "must lie in 1..24");
  require(finite(p.cantor_resolution), "model.cantor_resolution", "must be finite");
  require(finite(p.max_edge) && p.max_edge > 0 && p.max_edge < 0.5, "model.max_edge", "must lie in (0,0.5)");
  require(finite(p.min_q_distance) && p.min_q_distance > 0 && p.min_q_distance < 0.7,
          "model.min_q_distance", "must lie in (0,0.7)");
  require(finite(p.uk_ratio) && p.uk_ratio > 1 && p.uk_ratio < 2, "model.uk_ratio", "must lie in (1,2)");
  require(finite(p.margin) && p.margin > 0 && p.margin < 0.25, "model.margin", "must lie in (0,0.25)");
  require(finite(p.frame_offset) && p.frame_offset > 0 && p.frame_offset < 0.25, "model.frame_offset",
          "must lie in (0,0.25)");
  require(finite(p.frame_tol) && p.frame_tol > 0 && p.frame_tol < 0.1, "model.frame_tol", "must lie in (0,0.1)");
  const auto& b = c.budgets;
  require(finite(b.cone_budget) && b.cone_budget > 0, "budgets.cone_budget", "must be positive");
  require(finite(b.lipschitz) && b.lipschitz >= 1, "budgets.lipschitz", "must be >= 1");
  require(finite(b.delta_init) && b.delta_init > 0, "budgets.delta_init", "must be positive");
  const auto& r = c.run;
  require(r.basin_samples >= 1, "run.basin_samples", "must be >= 1");
  require(!r.basin_ladder.empty(), "run.basin_ladder", "must not be empty");
  for (long T : r.basin_ladder) require(T >= 0 && T <= 1000000, "run.basin_ladder", "entries must lie in 0..1e6");
  require(r.orbit_T >= 1, "run.orbit_T", "must be >= 1");
  require(r.word_length >= 1 && r.word_length <= 20, "run.word_length", "must lie in 1..20");
  require(r.lipschitz_rects >= 1, "run.lipschitz_rects", "must be >= 1");
  require(r.lipschitz_mc >= 1, "run.lipschitz_mc", "must be >= 1");
  require(r.verify_grid >= 2, "run.verify_grid", "must be >= 2");
  require(r.class_grid >= 2, "run.class_grid", "must be >= 2");
  require(r.cantor_words >= 1 && r.cantor_words <= 16, "run.cantor_words", "must lie in 1..16");
  require(!c.outputs.model.empty(), "outputs.model", "must not be empty");
  require(!c.outputs.report.empty(), "outputs.report", "must not be empty");
}

inline Json params_to_json(const HorseshoeParams& p) {
  Json j;
  j["n_init"] = p.n_init;
  j["kappa_fraction"] = p.kappa_fraction;
  j["theta"] = p.theta;
  j["a1"] = p.a1_override ? Json(*p.a1_override) : Json(nullptr);
  j["coeff"] = p.coeff_override ? Json(*p.coeff_override) : Json(nullptr);
  j["depth"] = p.depth;
  j["cantor_resolution"] = p.cantor_resolution;
  j["max_edge"] = p.max_edge;
  j["min_q_distance"] = p.min_q_distance;
  j["uk_ratio"] = p.uk_ratio;
  j["margin"] = p.margin;
  j["frame_offset"] = p.frame_offset;
  j["frame_tol"] = p.frame_tol;
  return j;
}

inline Json config_to_json(const Config& c) {
  Json j;
  j["version"] = kConfigVersion;
  j["model"] = params_to_json(c.params);
  j["budgets"] = {{"cone_budget", c.budgets.cone_budget},
                  {"lipschitz", c.budgets.lipschitz},
                  {"delta_init", c.budgets.delta_init}};
  const auto& r = c.run;
  j["run"] = {{"seed", r.seed},
              {"basin_samples", r.basin_samples},
              {"basin_ladder", r.basin_ladder},
              {"orbit_T", r.orbit_T},
              {"word_length", r.word_length},
              {"lipschitz_rects", r.lipschitz_rects},
              {"lipschitz_mc", r.lipschitz_mc},
              {"verify_grid", r.verify_grid},
              {"class_grid", r.class_grid},
              {"cantor_words", r.cantor_words}};
  j["outputs"] = {{"model", c.outputs.model}, {"report", c.outputs.report}};
  return j;
}

// Missing keys keep their defaults; unknown keys and a missing or different version are errors.
inline Config config_from_json(const Json& j) {
  if (!j.is_object()) throw ArtifactError(ExitCode::usage, "config: top level must be an object");
  auto v = j.find("version");
  if (v == j.end() || !v->is_number_integer())
    throw ArtifactError(ExitCode::usage, "config: missing integer \"version\"");
  if (v->get<int>() != kConfigVersion)
    throw ArtifactError(ExitCode::version, "config: version " + v->dump() + " is not supported (expected " +
                                               std::to_string(kConfigVersion) + ")");
  Config c;
  {
    detail::StrictObject top(j, "config");
    int ver = 0;
    top.get("version", ver);
    if (auto* s = top.section("model")) {
      detail::StrictObject o(*s, "model");
      auto& p = c.params;
      o.get("n_init", p.n_init);
      o.get("kappa_fraction", p.kappa_fraction);
      o.get("theta", p.theta);
      o.get("a1", p.a1_override);
      o.get("coeff", p.coeff_override);
      o.get("depth", p.depth);
      o.get("cantor_resolution", p.cantor_resolution);
      o.get("max_edge", p.max_edge);
      o.get("min_q_distance", p.min_q_distance);
      o.get("uk_ratio", p.uk_ratio);
      o.get("margin", p.margin);
      o.get("frame_offset", p.frame_offset);
      o.get("frame_tol", p.frame_tol);
    }
    if (auto* s = top.section("budgets")) {
      detail::StrictObject o(*s, "budgets");
      o.get("cone_budget", c.budgets.cone_budget);
      o.get("lipschitz", c.budgets.lipschitz);
      o.get("delta_init", c.budgets.delta_init);
    }
    if (auto* s = top.section("run")) {
      detail::StrictObject o(*s, "run");
      auto& r = c.run;
      o.get("seed", r.seed);
      o.get("basin_samples", r.basin_samples);
      o.get("basin_ladder", r.basin_ladder);
      o.get("orbit_T", r.orbit_T);
      o.get("word_length", r.word_length);
      o.get("lipschitz_rects", r.lipschitz_rects);
      o.get("lipschitz_mc", r.lipschitz_mc);
      o.get("verify_grid", r.verify_grid);
      o.get("class_grid", r.class_grid);
      o.get("cantor_words", r.cantor_words);
    }
    if (auto* s = top.section("outputs")) {
      detail::StrictObject o(*s, "outputs");
      o.get("model", c.outputs.model);
      o.get("report", c.outputs.report);
    }
  }
  validate(c);
  return c;
}

// ---------- files ----------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError(ExitCode::io, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw ArtifactError(ExitCode::io, "error while reading " + path.string());
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError(ExitCode::io, "cannot write " + path.string());
  out << data;
  out.flush();
  if (!out) throw ArtifactError(ExitCode::io, "error while writing " + path.string());
}

// Parse errors of an artifact are corruption; of a config, usage errors.
inline Json parse_json(const std::string& text, const std::string& what, ExitCode on_error) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ArtifactError(on_error, what + ": not valid JSON (" + e.what() + ")");
  }
}

inline Config load_config(const std::filesystem::path& path) {
  return config_from_json(parse_json(read_file(path), "config " + path.string(), ExitCode::usage));
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// FNV-1a over the canonical dump; identifies a model inside derived artifacts.
inline std::string fingerprint(const Json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------- model artifact ----------

inline Json rational_json(const RationalPoint& r) { return Json::array({r.nu, r.nv, r.den}); }
inline Json lattice_json(const Lattice& v) { return Json::array({v[0], v[1]}); }
inline Json interval_json(const Interval<double>& iv) { return Json::array({iv.lo, iv.hi}); }
inline Json rect_json(const ChartRect<double>& r) { return {{"x", interval_json(r.x)}, {"y", interval_json(r.y)}}; }

inline Json spec_to_json(const HorseshoeSpec& s) {
  return {{"p0", rational_json(s.p0)},
          {"p1", rational_json(s.p1)},
          {"q", rational_json(s.q)},
          {"v", lattice_json(s.v)},
          {"edge_left", lattice_json(s.edge_left)},
          {"edge_right", lattice_json(s.edge_right)},
          {"frame_top", lattice_json(s.frame_top)},
          {"frame_bottom", lattice_json(s.frame_bottom)}};
}

// Derived regions in the p0 chart, rounded to double; a loader recomputes them and compares bit for bit.
inline Json regions_to_json(const AnosovMap& F) {
  const auto& g = F.geometry();
  auto mb = g.cantor().measure_bounds();
  Json j;
  j["lambda"] = g.lambda();
  j["x1"] = g.x1();
  j["y1"] = g.y1();
  j["h"] = g.h();
  j["kappa"] = g.kappa();
  j["a1"] = g.a1();
  j["K"] = rect_json(g.K());
  j["UK"] = rect_json(g.UK());
  j["Rt"] = rect_json(g.Rt());
  j["RH0"] = rect_json(g.RH(0));
  j["RH1"] = rect_json(g.RH(1));
  j["Q0"] = interval_json(g.Qi(0));
  j["Q1"] = interval_json(g.Qi(1));
  j["RQ0"] = interval_json(g.RQ(0));
  j["RQ1"] = interval_json(g.RQ(1));
  j["q_chart"] = Json::array({g.q_chart()[0], g.q_chart()[1]});
  j["frame_top_branch"] = Json::array({g.frame_top_branch()[0], g.frame_top_branch()[1]});
  j["frame_bottom_branch"] = Json::array({g.frame_bottom_branch()[0], g.frame_bottom_branch()[1]});
  j["cantor"] = {{"depth", g.cantor().depth()}, {"measure", Json::array({to_double(mb.first), to_double(mb.second)})}};
  return j;
}

// Config section stored in a model: construction inputs only, so the model does not depend on output paths.
inline Json model_config_json(const Config& c) {
  Json j = config_to_json(c);
  j.erase("outputs");
  return j;
}

struct Model {
  Config config;
  HorseshoeSpec spec;
  std::shared_ptr<const AnosovMap> map;
  Json artifact;

  std::string fingerprint() const { return semithick::fingerprint(artifact); }
};

// Full pipeline from a validated config; construction errors surface as ExitCode::build.
inline Model build_model(const Config& c) {
  validate(c);
  Model m;
  m.config = c;
  try {
    m.spec = make_horseshoe_spec(c.params);
    m.map = std::make_shared<const AnosovMap>(m.spec, c.budgets);
  } catch (const std::exception& e) {
    throw ArtifactError(ExitCode::build, e.what());
  }
  Json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["config"] = model_config_json(c);
  j["spec"] = spec_to_json(m.spec);
  j["regions"] = regions_to_json(*m.map);
  m.artifact = std::move(j);
  return m;
}

inline std::string model_text(const Model& m) { return dump(m.artifact); }

// Checks format and version, rebuilds from the stored config and compares the exact spec and every derived region.
inline Model model_from_json(const Json& j, const std::string& what = "model") {
  if (!j.is_object() || !j.contains("format") || j["format"] != kModelFormat)
    throw ArtifactError(ExitCode::corrupt, what + ": not a model artifact");
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw ArtifactError(ExitCode::corrupt, what + ": missing version");
  if (j["version"].get<int>() != kModelVersion)
    throw ArtifactError(ExitCode::version, what + ": artifact version " + j["version"].dump() +
                                               " is not supported (expected " + std::to_string(kModelVersion) + ")");
  for (auto& [k, v] : j.items())
    if (k != "format" && k != "version" && k != "config" && k != "spec" && k != "regions")
      throw ArtifactError(ExitCode::corrupt, what + ": unexpected key " + k);
  if (!j.contains("config") || !j.contains("spec") || !j.contains("regions"))
    throw ArtifactError(ExitCode::corrupt, what + ": missing section");
  Config c;
  try {
    c = config_from_json(j["config"]);
  } catch (const ArtifactError& e) {
    throw ArtifactError(ExitCode::corrupt, what + ": stored " + e.what());
  }
  Model m;
  try {
    m = build_model(c);
  } catch (const ArtifactError& e) {
    throw ArtifactError(ExitCode::corrupt, what + ": stored config no longer builds: " + e.what());
  }
  for (const char* sec : {"spec", "regions"}) {
    const Json& stored = j[sec];
    const Json& fresh = m.artifact[sec];
    if (stored == fresh) continue;
    std::string key = "?";
    if (stored.is_object())
      for (auto& [k, v] : fresh.items())
        if (!stored.contains(k) || stored[k] != v) {
          key = k;
          break;
        }
    throw ArtifactError(ExitCode::corrupt, what + ": " + sec + "." + key + " does not match the rebuilt model");
  }
  return m;
}

inline Model load_model(const std::filesystem::path& path) {
  return model_from_json(parse_json(read_file(path), "model " + path.string(), ExitCode::corrupt),
                         "model " + path.string());
}

// ---------- perturbed maps ----------

template <class Real>
std::string real_str(const Real& x) {
  if constexpr (std::is_same_v<Real, double>) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
  } else {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<Real>::max_digits10) << std::scientific << x;
    return os.str();
  }
}

template <class Real>
Real parse_real(const Json& j, const std::string& what) {
  if (!j.is_string()) throw ArtifactError(ExitCode::corrupt, what + ": expected a decimal string");
  const std::string s = j.get<std::string>();
  if constexpr (std::is_same_v<Real, double>) {
    double x = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x))
      throw ArtifactError(ExitCode::corrupt, what + ": bad number " + s);
    return x;
  } else {
    try {
      Real x(s.c_str());
      if (!isfinite(x)) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw ArtifactError(ExitCode::corrupt, what + ": bad number " + s);
    }
  }
}

template <class Real>
Json reals_json(const std::vector<Real>& v) {
  Json a = Json::array();
  for (auto& x : v) a.push_back(real_str(x));
  return a;
}

template <class Real>
std::vector<Real> parse_reals(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ArtifactError(ExitCode::corrupt, what + ": expected an array");
  std::vector<Real> v;
  for (auto& e : j) v.push_back(parse_real<Real>(e, what));
  return v;
}

template <class Real>
constexpr const char* precision_name() {
  return std::is_same_v<Real, double> ? "double" : "wide";
}

// Base-model reference plus the patch list. Hermite stripes store their nodes; chain stripes store the anchor,
// level, resolution and the number of earlier patches of the map they were computed on.
template <class Real>
Json perturbed_to_json(const BasicPerturbedMap<Real>& F, const Model& base) {
  using Chain = ChainStripe<BasicPerturbedMap<Real>>;
  Json j;
  j["format"] = kPerturbedFormat;
  j["version"] = kPerturbedVersion;
  j["precision"] = precision_name<Real>();
  j["base"] = {{"fingerprint", base.fingerprint()}, {"config", base.artifact["config"]}};
  Json list = Json::array();
  const auto& ps = F.patches();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto& p = ps[k];
    Json e;
    e["kind"] = p.kind == PatchKind::linearized ? "linearized" : "smoothed";
    e["alpha"] = real_str(p.alpha);
    if (auto* r = dynamic_cast<const RoughStripe<Real>*>(p.stripe.get())) {
      auto graph = [](const HermiteGraph<Real>& g) {
        return Json{{"ys", reals_json(g.ys())}, {"ds", reals_json(g.ds())}};
      };
      e["stripe"] = {{"type", "hermite"},
                     {"level", r->lvl},
                     {"xs", reals_json(r->lower.xs())},
                     {"lower", graph(r->lower)},
                     {"upper", graph(r->upper)}};
      if (r->upper.xs() != r->lower.xs())
        throw std::invalid_argument("perturbed_to_json: stripe graphs on different abscissae");
    } else if (auto* c = dynamic_cast<const Chain*>(p.stripe.get())) {
      const auto& sub = c->map().patches();
      if (sub.size() > k) throw std::invalid_argument("perturbed_to_json: chain stripe built on a later map");
      for (std::size_t i = 0; i < sub.size(); ++i)
        if (sub[i].stripe != ps[i].stripe || sub[i].kind != ps[i].kind || sub[i].alpha != ps[i].alpha)
          throw std::invalid_argument("perturbed_to_json: chain stripe map is not a prefix of this map");
      auto a = c->anchor();
      const auto& res = c->resolution();
      e["stripe"] = {{"type", "chain"},
                     {"level", c->level()},
                     {"X", real_str(a[0])},
                     {"Y", real_str(a[1])},
                     {"prefix", sub.size()},
                     {"nodes", res.nodes},
                     {"slope_step", res.slope_step},
                     {"search", res.search}};
    } else {
      throw std::invalid_argument("perturbed_to_json: unsupported stripe type");
    }
    list.push_back(std::move(e));
  }
  j["patches"] = std::move(list);
  return j;
}

template <class Real>
BasicPerturbedMap<Real> perturbed_from_json(const Json& j, const Model& base, const std::string& what = "perturbed") {
  if (!j.is_object() || !j.contains("format") || j["format"] != kPerturbedFormat)
    throw ArtifactError(ExitCode::corrupt, what + ": not a perturbed-map artifact");
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw ArtifactError(ExitCode::corrupt, what + ": missing version");
  if (j["version"].get<int>() != kPerturbedVersion)
    throw ArtifactError(ExitCode::version, what + ": artifact version " + j["version"].dump() + " is not supported");
  if (!j.contains("precision") || j["precision"] != precision_name<Real>())
    throw ArtifactError(ExitCode::corrupt, what + ": precision does not match");
  if (!j.contains("base") || !j["base"].is_object() || j["base"].value("fingerprint", "") != base.fingerprint())
    throw ArtifactError(ExitCode::corrupt, what + ": base model fingerprint does not match");
  if (!j.contains("patches") || !j["patches"].is_array())
    throw ArtifactError(ExitCode::corrupt, what + ": missing patch list");

  using Map = BasicPerturbedMap<Real>;
  auto F0 = std::make_shared<const BasicAnosovMap<Real>>(base.spec, base.config.budgets);
  std::vector<Map> stages{Map(F0)};
  try {
    for (const auto& e : j["patches"]) {
      const std::string kind = e.at("kind").get<std::string>();
      if (kind != "linearized" && kind != "smoothed") throw ArtifactError(ExitCode::corrupt, what + ": bad patch kind");
      Patch<Real> p;
      p.kind = kind == "linearized" ? PatchKind::linearized : PatchKind::smoothed;
      p.alpha = parse_real<Real>(e.at("alpha"), what + ": alpha");
      const Json& s = e.at("stripe");
      const std::string type = s.at("type").get<std::string>();
      if (type == "hermite") {
        auto xs = parse_reals<Real>(s.at("xs"), what + ": xs");
        HermiteGraph<Real> lo(xs, parse_reals<Real>(s.at("lower").at("ys"), what), parse_reals<Real>(s.at("lower").at("ds"), what));
        HermiteGraph<Real> hi(xs, parse_reals<Real>(s.at("upper").at("ys"), what), parse_reals<Real>(s.at("upper").at("ds"), what));
        p.stripe = std::make_shared<const RoughStripe<Real>>(
            make_rough_stripe(*F0, std::move(lo), std::move(hi), s.at("level").get<int>()));
      } else if (type == "chain") {
        std::size_t prefix = s.at("prefix").get<std::size_t>();
        if (prefix >= stages.size()) throw ArtifactError(ExitCode::corrupt, what + ": chain stripe prefix out of range");
        StripeResolution res;
        res.nodes = s.at("nodes").get<int>();
        res.slope_step = s.at("slope_step").get<double>();
        res.search = s.at("search").get<double>();
        p.stripe = std::make_shared<const ChainStripe<Map>>(std::make_shared<const Map>(stages[prefix]),
                                                            parse_real<Real>(s.at("X"), what + ": X"),
                                                            parse_real<Real>(s.at("Y"), what + ": Y"),
                                                            s.at("level").get<int>(), res);
      } else {
        throw ArtifactError(ExitCode::corrupt, what + ": unknown stripe type " + type);
      }
      stages.push_back(stages.back().with_patch(std::move(p)));
    }
  } catch (const ArtifactError&) {
    throw;
  } catch (const std::exception& e) {
    throw ArtifactError(ExitCode::corrupt, what + ": " + e.what());
  }
  return stages.back();
}

}  // namespace semithick
