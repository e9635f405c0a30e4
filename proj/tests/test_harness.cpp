#include "mtf/harness/benchmarks.hpp"
#include "mtf/harness/scenarios.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

using namespace mtf;
using namespace mtf::harness;

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

nlohmann::json shipped_config(const std::string& name) {
  return read_json(std::string(MTF_SOURCE_DIR) + "/configs/" + name + ".json");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtf_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string config_error(const nlohmann::json& j) {
  try {
    (void)parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

/// Root of R sin(L/R) = x_bar: sign change on a dense logarithmic grid, then Newton.
double scanned_radius(double x_bar, double length) {
  const auto f = [&](double r) { return r * std::sin(length / r) - x_bar; };
  const auto df = [&](double r) { return std::sin(length / r) - length / r * std::cos(length / r); };
  const int n = 200000;
  double r_prev = length / kPi;
  for (int k = 1; k <= n; ++k) {
    const double r = length / kPi * std::pow(1e4, static_cast<double>(k) / n);
    if (f(r_prev) < 0.0 && f(r) >= 0.0) {
      double x = 0.5 * (r_prev + r);
      for (int it = 0; it < 20; ++it) x -= f(x) / df(x);
      return x;
    }
    r_prev = r;
  }
  return std::numeric_limits<double>::infinity();
}

/// Points of a circular arc of radius R and length L bending from the X axis toward +Z.
std::vector<Vec3> arc(double radius, double length, int samples) {
  std::vector<Vec3> pts;
  for (int i = 0; i < samples; ++i) {
    const double s = length * i / (samples - 1);
    pts.emplace_back(radius * std::sin(s / radius), 1.0, radius * (1.0 - std::cos(s / radius)));
  }
  return pts;
}

/// Quasi-static film on a coarse mesh, cheap enough for repeated runs.
nlohmann::json small_quasi_static() {
  auto j = shipped_config("mtf_quasi_static");
  j.erase("sweep");
  j["name"] = "small_qs";
  j["geometry"]["mesh"] = {10, 4};
  j["activation"]["peak"] = 7.0;
  j["solver"]["steps"] = 6;
  j["outputs"]["vtk_every"] = 3;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Curvature from the projected length

TEST(Curvature, Examples) {
  const double l = 3.5;
  const auto flat = curvature_from_projection(l, l);
  EXPECT_EQ(flat.curvature, 0.0);
  EXPECT_TRUE(std::isinf(flat.radius));

  const auto curled = curvature_from_projection(1.0, l);
  EXPECT_EQ(curled.radius, 1.0);
  EXPECT_EQ(curled.curvature, 1.0);

  const auto mid = curvature_from_projection(3.0, l);
  EXPECT_NEAR(mid.radius, scanned_radius(3.0, l), 1e-8 * mid.radius);
  EXPECT_NEAR(mid.radius, 3.6965608504019114, 1e-8 * mid.radius);
  EXPECT_NEAR(mid.radius * std::sin(l / mid.radius), 3.0, 1e-9);
}

TEST(Curvature, RejectsImpossibleProjections) {
  EXPECT_THROW(curvature_from_projection(3.6, 3.5), DomainError);
  EXPECT_THROW(curvature_from_projection(-0.1, 3.5), DomainError);
  EXPECT_THROW(curvature_from_projection(1.0, 0.0), DomainError);
  EXPECT_THROW(curvature_from_deflection({Vec3::Zero()}, 3.5), DomainError);
}

TEST(Curvature, AgreesWithScanOracleAndIsMonotone) {
  const double l = 3.5;
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 60; ++k) {
    const double x_bar = l / kPi + (l - l / kPi) * k / 60.0;
    const auto r = curvature_from_projection(x_bar, l);
    EXPECT_NEAR(r.radius, scanned_radius(x_bar, l), 1e-8 * r.radius) << "x_bar " << x_bar;
    EXPECT_LT(r.curvature, previous);
    previous = r.curvature;
  }
}

TEST(Curvature, RecoversCircularArcsUpToAQuarterTurn) {
  const double l = 3.5;
  for (double radius : {2.5, 4.0, 10.0, 100.0}) {
    const auto r = curvature_from_deflection(arc(radius, l, 2001), l);
    EXPECT_NEAR(r.curvature, 1.0 / radius, 1e-9 / radius) << "R " << radius;
  }
}

TEST(Curvature, ReachBeyondAQuarterTurnStaysMonotone) {
  // between a quarter and half a turn the reach is R itself and the arc inversion underestimates;
  // past half a turn the reach branch R = x_bar is exact even when the tip curls behind the clamp
  const double l = 3.5;
  double previous = 0.0;
  for (double turn = 0.55; turn < 1.5; turn += 0.05) {
    const double radius = l / (turn * kPi);
    const auto r = curvature_from_deflection(arc(radius, l, 4001), l);
    EXPECT_NEAR(r.x_bar, radius, 1e-6);
    EXPECT_GT(r.curvature, previous) << "turn " << turn;
    EXPECT_LE(r.curvature, 1.0 / radius * (1.0 + 1e-6));
    if (turn > 1.0) {
      EXPECT_NEAR(r.curvature, 1.0 / radius, 1e-6 / radius);
    }
    previous = r.curvature;
  }
}

// ---------------------------------------------------------------------------
// Stoney estimate

TEST(Stoney, Examples) {
  EXPECT_EQ(stoney_curvature(0.767, 21.0, 1.24, 500.0, 0.018, 0.0), 0.0);
  EXPECT_EQ(stoney_curvature(0.767, 21.0, 1.0, 500.0, 0.018, 0.004), 0.0);
  // film parameters, evaluated independently in double precision
  EXPECT_NEAR(stoney_curvature(0.767, 21.0, 1.24, 500.0, 0.018, 0.004), 0.30252627062276505, 1e-13);
  EXPECT_NEAR(stoney_curvature(0.767, 21.0, 1.24, 1000.0, 0.018, 0.004),
              0.5 * stoney_curvature(0.767, 21.0, 1.24, 500.0, 0.018, 0.004), 1e-15);
  EXPECT_THROW(stoney_curvature(0.767, 21.0, 1.24, 500.0, 0.0, 0.004), DomainError);
  EXPECT_THROW(stoney_curvature(0.767, 21.0, 1.24, 500.0, 0.018, -0.004), DomainError);
}

TEST(Stoney, DecreasesWithSubstrateThickness) {
  double previous = std::numeric_limits<double>::infinity();
  for (double ds = 13.0; ds <= 28.0; ds += 2.5) {
    const double k = stoney_curvature(0.767, 21.0, 1.24, 500.0, ds * 1e-3, 0.004);
    EXPECT_LT(k, previous);
    previous = k;
  }
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"mtf_quasi_static", "mtf_thickness_sweep", "mtf_dynamic", "coupled_s1", "coupled_s1s2",
                           "coupled_spiral", "coupled_s1s2_desk", "coupled_spiral_desk", "ep_wave"}) {
    EXPECT_NO_THROW((void)load_config(std::string(MTF_SOURCE_DIR) + "/configs/" + name + ".json")) << name;
  }
  const auto c = load_config(std::string(MTF_SOURCE_DIR) + "/configs/coupled_s1s2_desk.json");
  EXPECT_EQ(c.kind, ScenarioKind::coupled);
  EXPECT_DOUBLE_EQ(c.solver.damping, 0.0008);
  const auto s = coupling_schedule(c);
  EXPECT_DOUBLE_EQ(s.dt, 5.0);
  EXPECT_EQ(s.substeps, 250);
  EXPECT_EQ(s.steps, 400);
  EXPECT_DOUBLE_EQ(s.dt_e(), 0.02);
  EXPECT_NEAR(c.fiber.norm(), 1.0, 1e-15);

  const auto d = load_config(std::string(MTF_SOURCE_DIR) + "/configs/mtf_dynamic.json");
  EXPECT_TRUE(d.outputs.traces(2.8));
  EXPECT_FALSE(d.outputs.traces(30.0));
  auto j = shipped_config("mtf_dynamic");
  j["outputs"]["quasi_static_trace"] = true;
  EXPECT_TRUE(parse_config(j).outputs.traces(30.0));
  j["outputs"]["quasi_static_trace"] = false;
  EXPECT_FALSE(parse_config(j).outputs.traces(2.8));
}

TEST(Config, RejectionsNameTheField) {
  auto j = shipped_config("mtf_quasi_static");
  j["layers"]["substrate_um"] = -18;
  EXPECT_NE(config_error(j).find("/layers/substrate_um"), std::string::npos) << config_error(j);

  j = shipped_config("mtf_quasi_static");
  j["layers"]["thikness"] = 1;
  EXPECT_NE(config_error(j).find("/layers/thikness"), std::string::npos);

  j = shipped_config("mtf_quasi_static");
  j["activation"]["mode"] = "CO";
  EXPECT_NE(config_error(j).find("/activation/mode"), std::string::npos);

  j = shipped_config("mtf_quasi_static");
  j["activation"]["mode"] = "XX";
  EXPECT_NE(config_error(j).find("must be one of"), std::string::npos);

  j = shipped_config("mtf_quasi_static");
  j["geometry"]["mesh"] = {50, "ten"};
  EXPECT_NE(config_error(j).find("/geometry/mesh/1"), std::string::npos);

  j = shipped_config("mtf_quasi_static");
  j["sweep"]["values"][2] = -1.0;
  EXPECT_NE(config_error(j).find("/sweep/values/2"), std::string::npos);

  j = shipped_config("coupled_s1s2_desk");
  j["sweep"] = {{"parameter", "peak"}, {"values", {1.0}}};
  EXPECT_NE(config_error(j).find("/sweep"), std::string::npos);

  j = shipped_config("coupled_s1s2_desk");
  j["ep"]["stimuli"][0]["edge"] = 7;
  EXPECT_NE(config_error(j).find("/ep/stimuli/0"), std::string::npos) << config_error(j);

  j = shipped_config("mtf_dynamic");
  j["solver"]["end_time"] = 0;
  EXPECT_NE(config_error(j).find("/solver/end_time"), std::string::npos);

  j = shipped_config("mtf_dynamic");
  j["outputs"]["quasi_static_trace"] = "yes";
  EXPECT_NE(config_error(j).find("/outputs/quasi_static_trace"), std::string::npos);

  j = shipped_config("mtf_quasi_static");
  j["schema"] = "mtf-config/0";
  EXPECT_NE(config_error(j).find("/schema"), std::string::npos);
}

TEST(Config, InvalidFileFailsBeforeAnyOutput) {
  const fs::path dir = scratch("invalid");
  const fs::path cfg = fs::temp_directory_path() / "mtf_test_invalid.json";
  auto j = shipped_config("mtf_quasi_static");
  j["layers"]["substrate_um"] = -1;
  write_json(cfg.string(), j);
  EXPECT_THROW(run_scenario(cfg.string(), RunOptions{dir.string(), {}}), ConfigError);
  EXPECT_FALSE(fs::exists(dir));
  std::ofstream(cfg) << "{ not json";
  EXPECT_THROW((void)load_config(cfg.string()), ConfigError);
  EXPECT_THROW((void)load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, OutputDirectoryPrecedence) {
  ::unsetenv("MTF_OUTPUT_DIR");
  EXPECT_EQ(resolve_output_dir("out/a", "a"), fs::path("out/a"));
  ::setenv("MTF_OUTPUT_DIR", "/tmp/root", 1);
  EXPECT_EQ(resolve_output_dir("out/a", "a"), fs::path("/tmp/root/a"));
  EXPECT_EQ(resolve_output_dir("out/a", "a", "/x"), fs::path("/x"));
  ::unsetenv("MTF_OUTPUT_DIR");
}

// ---------------------------------------------------------------------------
// Output files

TEST(Io, CsvRoundTripIsExact) {
  CsvTable t;
  t.columns = {"a", "b", "c"};
  t.add({0.1, 1.0 / 3.0, -2.5e17});
  t.add({1e-300, std::nextafter(1.0, 2.0), -0.0});
  EXPECT_THROW(t.add({1.0}), DomainError);
  const fs::path p = fs::temp_directory_path() / "mtf_test_roundtrip.csv";
  t.write(p.string());
  const CsvTable r = CsvTable::read(p.string());
  EXPECT_EQ(r.columns, t.columns);
  ASSERT_EQ(r.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.rows[i][k], t.rows[i][k]);
  EXPECT_EQ(r.column("b")[1], std::nextafter(1.0, 2.0));
  EXPECT_THROW((void)r.column("d"), DomainError);

  std::ofstream(p) << "a,b\n1,x\n";
  EXPECT_THROW(CsvTable::read(p.string()), DomainError);
  std::ofstream(p) << "a,b\n1,2,3\n";
  EXPECT_THROW(CsvTable::read(p.string()), DomainError);
}

TEST(Io, SummaryValidator) {
  nlohmann::json s = {{"schema", kSummarySchema},
                      {"scenario", "x"},
                      {"kind", "ep"},
                      {"config", nlohmann::json::object()},
                      {"files", {"summary.json"}},
                      {"runs", {{{"label", "ep"}, {"parameters", nlohmann::json::object()}, {"results", {{"t", {1, 2}}}}}}}};
  EXPECT_TRUE(valid_summary(s));
  auto bad = s;
  bad.erase("runs");
  EXPECT_EQ(summary_problems(bad).front(), "/runs must be a nonempty array");
  bad = s;
  bad["runs"][0]["results"]["t"] = {1, "x"};
  EXPECT_EQ(summary_problems(bad).front(), "/runs/0/results/t must hold numbers only");
  bad = s;
  bad["schema"] = "mtf-summary/0";
  EXPECT_FALSE(valid_summary(bad));
  bad = s;
  bad["kind"] = "static";
  EXPECT_FALSE(valid_summary(bad));
  EXPECT_FALSE(valid_summary(nlohmann::json::array()));
}

// ---------------------------------------------------------------------------
// Trace metrics

TEST(Metrics, WindowPeaksCrossingsAndSpeed) {
  const std::vector<double> t{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::vector<double> v{9, 1, 4, 2, 0, 1, 3, 7, 2, 0};
  EXPECT_EQ(window_peaks(t, v, {1.0, 5.0}), (std::vector<double>{4.0, 7.0}));
  EXPECT_EQ(window_peaks(t, v, {5.0, 1.0, 5.0}), (std::vector<double>{4.0, 7.0}));
  EXPECT_EQ(window_peaks(t, v, {0.0}), (std::vector<double>{9.0}));

  EXPECT_DOUBLE_EQ(crossing_time(t, v, 3.0), 1 + 2.0 / 3.0);
  EXPECT_EQ(crossing_time(t, v, 8.0), -1.0);

  EXPECT_NEAR(fitted_speed({1, 2, 4}, {0.5, 1.0, 2.0}), 0.5, 1e-15);
  EXPECT_EQ(fitted_speed({1}, {2}), 0.0);

  Vector x(4);
  x << 1, 2, 3, 4;
  EXPECT_DOUBLE_EQ(spatial_variance(x), 1.25);
  EXPECT_EQ(spatial_variance(Vector::Constant(7, -80.0)), 0.0);
}

// ---------------------------------------------------------------------------
// Poisson benchmark

TEST(Poisson, CoarseAndOnceRefined) {
  const auto coarse = refine(distorted_square_patch(), 2, 2, 2, 2);
  const auto fine = refine(distorted_square_patch(), 2, 2, 4, 4);
  const double e0 = poisson_error(coarse, solve_poisson(coarse));
  const double e1 = poisson_error(fine, solve_poisson(fine));
  EXPECT_TRUE(std::isfinite(e0));
  EXPECT_LT(e1, e0);
}

TEST(Poisson, FittedCoefficientsReproduceTheFitError) {
  // the error functional and the projection identity are independent routes to the same number
  for (int p : {2, 3}) {
    const auto patch = refine(distorted_square_patch(), p, p, 4, 4);
    const auto [c, identity_error] = poisson_l2_fit(patch);
    EXPECT_NEAR(poisson_error(patch, c), identity_error, 1e-6 * identity_error) << "p=" << p;
    EXPECT_LT(identity_error, poisson_error(patch, solve_poisson(patch)));
  }
}

TEST(Poisson, GalerkinOracleIsOptimal) {
  for (int p : {2, 3}) {
    std::vector<int> spans;
    std::vector<double> errors;
    for (int n : {4, 8, 16}) {
      const auto patch = refine(distorted_square_patch(), p, p, n, n);
      spans.push_back(n);
      errors.push_back(poisson_error(patch, solve_poisson_galerkin(patch)));
      EXPECT_LT(errors.back(), poisson_error(patch, solve_poisson(patch)));
    }
    EXPECT_GT(asymptotic_order(spans, errors), p + 0.5);
  }
}

TEST(Poisson, HighDegreeBeatsQuadratic) {
  const auto p7 = refine(distorted_square_patch(), 7, 7, 64, 64);
  const auto p2 = refine(distorted_square_patch(), 2, 2, 64, 64);
  EXPECT_LT(poisson_error(p7, solve_poisson(p7)), poisson_error(p2, solve_poisson(p2)));
}

TEST(Poisson, AsymptoticOrderFit) {
  const std::vector<int> spans{8, 16, 32, 64};
  std::vector<double> errors;
  for (int n : spans) errors.push_back(3.0 * std::pow(1.0 / n, 2.5) * std::exp(0.7 / n));
  EXPECT_NEAR(observed_orders(errors).back(), 2.5, 0.05);
  // log e = log 3 + 2.5 log h + 0.7 h is exactly the fitted model
  EXPECT_NEAR(asymptotic_order(spans, errors), 2.5, 1e-10);
  EXPECT_THROW((void)asymptotic_order({2, 4}, {1.0, 0.5}), DomainError);
}

// ---------------------------------------------------------------------------
// Fundamental period

TEST(Period, CantileverMatchesBeamTheory) {
  // single linear layer with zero Poisson ratio: the plate strip is an Euler-Bernoulli beam
  const double l = 3.5, h = 0.02, e = 1500.0, rho = 0.965;
  LayerStack s;
  s.layers.push_back({h, SaintVenantKirchhoff{e, 0.0}, rho, false});
  ShellModel model(rectangle_patch(l, 2.0, 2, 2, 24, 4), s);
  model.clamp_edge(0);
  const double beta = 1.8751040687119611;
  const double omega = beta * beta / (l * l) * std::sqrt(e * h * h / (12.0 * rho));
  EXPECT_NEAR(fundamental_period(model), 2.0 * kPi / omega, 5e-3 * 2.0 * kPi / omega);
}

// ---------------------------------------------------------------------------
// Scenario runs

TEST(Scenario, QuasiStaticRampIsMonotone) {
  auto j = shipped_config("mtf_quasi_static");
  j.erase("sweep");
  j["activation"]["peak"] = 21.6;
  const fs::path dir = scratch("qs");
  const auto out = run_scenario(parse_config(j), RunOptions{dir.string(), {}});
  EXPECT_TRUE(valid_summary(out.summary));
  EXPECT_EQ(read_json((dir / "summary.json").string()), out.summary);
  const auto k = out.summary["runs"][0]["results"]["curvature"].get<std::vector<double>>();
  ASSERT_EQ(k.size(), 42u);
  EXPECT_NEAR(out.summary["runs"][0]["results"]["stoney_curvature"].get<double>(), 0.30252627062276505, 1e-13);
  EXPECT_GT(k.front(), 0.0);
  for (std::size_t i = 1; i < k.size(); ++i) EXPECT_GE(k[i], k[i - 1]) << "step " << i + 1;
  for (const auto& f : out.summary["files"]) EXPECT_TRUE(fs::exists(dir / f.get<std::string>())) << f;
  const auto trace = CsvTable::read((dir / "peak_21.6_trace.csv").string());
  EXPECT_EQ(trace.rows.size(), 43u);
  EXPECT_EQ(trace.column("curvature").back(), k.back());
}

TEST(Scenario, DynamicTrajectoryHasTipTraces) {
  auto j = shipped_config("mtf_dynamic");
  j.erase("sweep");
  j["outputs"]["quasi_static_trace"] = false;
  const fs::path dir = scratch("dyn");
  const auto out = run_scenario(parse_config(j), RunOptions{dir.string(), {}});
  const auto& r = out.summary["runs"][0]["results"];
  EXPECT_EQ(r["time"].size(), 101u);
  EXPECT_EQ(r["tip_ux"].size(), 101u);
  EXPECT_EQ(r["tip_uz"].size(), 101u);
  EXPECT_DOUBLE_EQ(r["time"].back().get<double>(), 500.0);
  EXPECT_GT(r["max_curvature"].get<double>(), 0.0);
  EXPECT_GT(r["fundamental_period"].get<double>(), 0.0);
  // film bends toward the active layer
  const auto uz = r["tip_uz"].get<std::vector<double>>();
  EXPECT_GT(*std::max_element(uz.begin(), uz.end()), 0.0);
}

TEST(Scenario, SmallRunsOfEveryKindProduceValidSummaries) {
  auto ep = shipped_config("ep_wave");
  ep["ep"]["mesh"] = {12, 8};
  ep["ep"]["end_time"] = 20;
  const auto e = run_scenario(parse_config(ep), RunOptions{scratch("ep").string(), {}});
  EXPECT_TRUE(valid_summary(e.summary));
  EXPECT_EQ(e.summary["runs"][0]["results"]["activation_times"].size(), 6u);

  auto co = shipped_config("coupled_s1s2_desk");
  co["geometry"]["mesh"] = {8, 4};
  co["ep"]["mesh"] = {12, 8};
  co["solver"]["end_time"] = 20;
  co["solver"]["steps"] = 4;
  co["outputs"]["vtk_every"] = 2;
  co["outputs"]["ep_snapshot_every"] = 2;
  const auto c = run_scenario(parse_config(co), RunOptions{scratch("co").string(), {}});
  EXPECT_TRUE(valid_summary(c.summary));
  const auto& r = c.summary["runs"][0]["results"];
  EXPECT_EQ(r["time"].size(), 5u);
  EXPECT_EQ(r["A_sigma_a_peaks"].size(), 2u);
  EXPECT_TRUE(fs::exists(c.directory / "manifest.json"));
}

TEST(Scenario, SweepsReportOneCurvaturePerValue) {
  auto j = small_quasi_static();
  j["sweep"] = {{"parameter", "substrate_um"}, {"values", {14, 28}}};
  const auto out = run_scenario(parse_config(j), RunOptions{scratch("sweep").string(), {}});
  const auto k = out.summary["sweep"]["curvature"].get<std::vector<double>>();
  ASSERT_EQ(k.size(), 2u);
  EXPECT_GT(k[0], k[1]);
  EXPECT_EQ(out.summary["runs"][1]["label"], "ds_28");
}

TEST(Scenario, RerunsAreByteIdenticalAcrossThreadCounts) {
  const auto j = small_quasi_static();
  std::vector<std::map<std::string, std::string>> contents;
  for (const char* threads : {"1", "3", "1"}) {
    ::setenv("MTF_THREADS", threads, 1);
    const fs::path dir = scratch(std::string("det") + threads + std::to_string(contents.size()));
    const auto out = run_scenario(parse_config(j), RunOptions{dir.string(), {}});
    std::map<std::string, std::string> files;
    for (const auto& f : out.summary["files"]) files[f.get<std::string>()] = slurp(dir / f.get<std::string>());
    contents.push_back(std::move(files));
  }
  ::unsetenv("MTF_THREADS");
  EXPECT_EQ(contents[0], contents[1]);
  EXPECT_EQ(contents[0], contents[2]);
  EXPECT_GT(contents[0].size(), 3u);
}
