#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include "semithick/model_io.hpp"

using namespace semithick;

namespace {

const Model& model() {
  static const Model m = build_model(Config{});
  return m;
}

ExitCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ArtifactError& e) {
    return e.code();
  }
  return ExitCode::ok;
}

std::filesystem::path scratch(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / "semithick_model_io";
  std::filesystem::create_directories(d);
  return d / name;
}

}  // namespace

TEST(Config, RoundTripAndDefaults) {
  Config c;
  c.params.coeff_override = 1e-9;
  c.run.seed = 77;
  c.run.basin_ladder = {0, 3};
  Json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  // omitted sections keep their defaults
  EXPECT_EQ(config_to_json(config_from_json(Json{{"version", kConfigVersion}})), config_to_json(Config{}));
}

TEST(Config, UnknownKeysAndVersions) {
  Json j = config_to_json(Config{});
  Json a = j;
  a["model"]["depht"] = 12;
  EXPECT_EQ(code_of([&] { config_from_json(a); }), ExitCode::usage);
  Json b = j;
  b["extra"] = 1;
  EXPECT_EQ(code_of([&] { config_from_json(b); }), ExitCode::usage);
  Json c = j;
  c["version"] = kConfigVersion + 1;
  EXPECT_EQ(code_of([&] { config_from_json(c); }), ExitCode::version);
  Json d = j;
  d.erase("version");
  EXPECT_EQ(code_of([&] { config_from_json(d); }), ExitCode::usage);
}

TEST(Config, InvalidFieldsStopBeforeConstruction) {
  auto bad = [](const char* sec, const char* key, Json v) {
    Json j = config_to_json(Config{});
    j[sec][key] = std::move(v);
    return code_of([&] { config_from_json(j); });
  };
  EXPECT_EQ(bad("model", "kappa_fraction", 1.5), ExitCode::usage);
  EXPECT_EQ(bad("model", "depth", 0), ExitCode::usage);
  EXPECT_EQ(bad("model", "depth", "12"), ExitCode::usage);
  EXPECT_EQ(bad("model", "n_init", 2.5), ExitCode::usage);
  EXPECT_EQ(bad("model", "theta", 1.0), ExitCode::usage);
  EXPECT_EQ(bad("budgets", "delta_init", -0.1), ExitCode::usage);
  EXPECT_EQ(bad("run", "seed", -1), ExitCode::usage);
  EXPECT_EQ(bad("run", "basin_ladder", Json::array()), ExitCode::usage);
  EXPECT_EQ(bad("outputs", "model", ""), ExitCode::usage);
  EXPECT_EQ(bad("model", "coeff", nullptr), ExitCode::ok);
}

TEST(Build, GapSumAtLeastQIsABuildError) {
  Config c;
  c.params.coeff_override = 1e-5;  // a_2 < a_1, but the tail 0.645 c exceeds |Q| - a_1 = 2h ~ 5.7e-7
  try {
    build_model(c);
    FAIL() << "expected a build error";
  } catch (const ArtifactError& e) {
    EXPECT_EQ(e.code(), ExitCode::build);
    EXPECT_NE(std::string(e.what()).find("gap rule sum"), std::string::npos) << e.what();
  }
}

TEST(Build, DeterministicText) {
  EXPECT_EQ(model_text(build_model(Config{})), model_text(model()));
  const auto& r = model().artifact["regions"];
  EXPECT_EQ(r["lambda"].get<double>(), model().map->lambda());
  EXPECT_EQ(model().artifact["config"].contains("outputs"), false);
}

TEST(Load, RoundTripThroughFile) {
  auto p = scratch("model.json");
  write_file(p, model_text(model()));
  auto m = load_model(p);
  EXPECT_EQ(m.fingerprint(), model().fingerprint());
  EXPECT_EQ(model_text(m), model_text(model()));
}

TEST(Load, TamperAndVersionCodes) {
  const Json& good = model().artifact;
  Json a = good;
  double x = a["regions"]["UK"]["x"][0].get<double>();
  a["regions"]["UK"]["x"][0] = std::nextafter(x, 0.0);
  EXPECT_EQ(code_of([&] { model_from_json(a); }), ExitCode::corrupt);
  Json b = good;
  b["spec"]["q"][0] = b["spec"]["q"][0].get<Int>() + 1;
  EXPECT_EQ(code_of([&] { model_from_json(b); }), ExitCode::corrupt);
  Json c = good;
  c["version"] = kModelVersion + 1;
  EXPECT_EQ(code_of([&] { model_from_json(c); }), ExitCode::version);
  Json d = good;
  d["config"]["model"]["theta"] = 0.4;  // consistent with nothing stored
  EXPECT_EQ(code_of([&] { model_from_json(d); }), ExitCode::corrupt);
  Json e = good;
  e["format"] = "other";
  EXPECT_EQ(code_of([&] { model_from_json(e); }), ExitCode::corrupt);

  EXPECT_EQ(code_of([&] { load_model(scratch("missing.json")); }), ExitCode::io);
  auto p = scratch("garbage.json");
  write_file(p, "{\"format\": \"semithick-model\", ");
  EXPECT_EQ(code_of([&] { load_model(p); }), ExitCode::corrupt);
}

TEST(Perturbed, HermitePatchesRoundTrip) {
  const auto& F = *model().map;
  std::mt19937_64 rng(41);
  auto P1 = random_stripe(F, rng, 1e-9);
  auto P2 = random_stripe(F, rng, 1e-9);
  auto G = linearize_on_stripe(F, P1);
  G = smooth_blend(G, P2, 0.0, 1e-6);
  Json j = perturbed_to_json(G, model());
  auto H = perturbed_from_json<double>(j, model());
  ASSERT_EQ(H.patches().size(), 2u);
  EXPECT_EQ(perturbed_to_json(H, model()), j);
  for (const auto* P : {&P1, &P2}) {
    auto xr = P->x();
    for (int a = 0; a <= 8; ++a) {
      double X = xr.lo + xr.length() * a / 8;
      auto s = P->segment(X);
      for (int b = 0; b <= 4; ++b) {
        double Y = s[0] + (s[1] - s[0]) * b / 4;
        auto u = G.correction(X, Y), v = H.correction(X, Y);
        EXPECT_EQ(u.c, v.c);
        EXPECT_EQ(u.cy, v.cy);
      }
    }
  }
  Json k = j;
  k["base"]["fingerprint"] = "0000000000000000";
  EXPECT_EQ(code_of([&] { perturbed_from_json<double>(k, model()); }), ExitCode::corrupt);
  Json w = j;
  w["precision"] = "wide";
  EXPECT_EQ(code_of([&] { perturbed_from_json<double>(w, model()); }), ExitCode::corrupt);
  Json v = j;
  v["patches"][0]["stripe"]["xs"][3] = "nan";
  EXPECT_EQ(code_of([&] { perturbed_from_json<double>(v, model()); }), ExitCode::corrupt);
}

TEST(Perturbed, ChainStripesRoundTrip) {
  BasicAnosovMap<Wide> W(model().spec, model().config.budgets);
  LevelsOptions o;
  o.stripes.grid = 48;
  o.stripes.random_anchors = 1;
  o.stripes.threads = 1;
  o.class_grid = 20;
  auto R = linearize_levels(W, 3, 4, o);
  ASSERT_GT(R.map.patches().size(), 0u);
  Json j = perturbed_to_json(R.map, model());
  EXPECT_EQ(j["patches"][0]["stripe"]["type"], "chain");
  auto H = perturbed_from_json<Wide>(j, model());
  EXPECT_EQ(perturbed_to_json(H, model()), j);
  for (std::size_t k = 0; k < R.map.patches().size(); ++k) {
    const auto& P = *R.map.patches()[k].stripe;
    auto xr = P.x();
    for (int a = 0; a <= 4; ++a) {
      Wide X = xr.lo + xr.length() * a / 4;
      auto s = P.segment(X);
      for (int b = 1; b < 4; ++b) {
        Wide Y = s[0] + (s[1] - s[0]) * b / 4;
        EXPECT_EQ(R.map.correction(X, Y).c, H.correction(X, Y).c);
      }
    }
  }
}
