// Command-line front end: scenario runs, verification suites and post-processing helpers.
// Exit codes: 0 success, 1 solver failure or failed verification, 2 configuration error.

#include "mtf/harness/benchmarks.hpp"
#include "mtf/harness/scenarios.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace mtf;
using namespace mtf::harness;

constexpr int kOk = 0;
constexpr int kSolverFailure = 1;
constexpr int kConfigError = 2;

int run(const std::string& config, const std::string& output, bool quiet) {
  RunOptions opt;
  opt.output_dir = output;
  if (!quiet) opt.log = [](const std::string& m) { std::cerr << m << '\n'; };
  const auto out = run_scenario(config, opt);
  std::cout << "wrote " << out.summary["files"].size() << " files to " << out.directory.string() << '\n';
  return kOk;
}

int verify_cmd(const std::string& suite, const std::string& json_path) {
  const VerifyReport r = verify(suite);
  for (const auto& c : r.checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " : " << c.detail << '\n';
  if (!json_path.empty()) {
    nlohmann::json j = r.data;
    j["passed"] = r.passed();
    write_json(json_path, j);
  }
  std::cout << (r.passed() ? "all checks passed" : "verification failed") << '\n';
  return r.passed() ? kOk : kSolverFailure;
}

int curvature_cmd(const std::string& path, double length) {
  const CsvTable t = CsvTable::read(path);
  const auto has = [&](const char* c) { return std::find(t.columns.begin(), t.columns.end(), c) != t.columns.end(); };
  if (has("x_bar")) {
    // one curvature per row of a scenario trace
    std::cout << "x_bar,radius,curvature\n";
    for (double xb : t.column("x_bar")) {
      const auto r = curvature_from_projection(xb, length);
      std::cout << exact(r.x_bar) << ',' << exact(r.radius) << ',' << exact(r.curvature) << '\n';
    }
    return kOk;
  }
  if (!has("x")) throw ConfigError(path + ": needs an x_bar column or x[,y,z] mid-axis samples");
  const auto x = t.column("x");
  const auto y = has("y") ? t.column("y") : std::vector<double>(x.size(), 0.0);
  const auto z = has("z") ? t.column("z") : std::vector<double>(x.size(), 0.0);
  std::vector<Vec3> axis;
  for (std::size_t i = 0; i < x.size(); ++i) axis.emplace_back(x[i], y[i], z[i]);
  const auto r = curvature_from_deflection(axis, length);
  std::cout << "x_bar " << exact(r.x_bar) << "\nradius " << exact(r.radius) << "\ncurvature " << exact(r.curvature)
            << '\n';
  return kOk;
}

int poisson_cmd(const std::vector<int>& degrees, int levels) {
  bool ok = true;
  for (int p : degrees) {
    const PoissonStudy s = poisson_convergence(p, levels);
    const auto orders = s.orders();
    std::cout << "p = " << p << "\nspans,error,order\n";
    for (std::size_t i = 0; i < s.spans.size(); ++i)
      std::cout << s.spans[i] << ',' << exact(s.errors[i]) << ',' << (i ? fmt(orders[i - 1], 4) : "") << '\n';
    if (s.errors.size() >= 3) std::cout << "asymptotic order " << fmt(asymptotic_order(s.spans, s.errors), 4) << '\n';
    ok = ok && strictly_decreasing(s.errors);
  }
  return ok ? kOk : kSolverFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Isogeometric muscular thin film simulator"};
  app.require_subcommand(1);

  std::string config, output;
  bool quiet = false;
  auto* run_sc = app.add_subcommand("run", "Run a scenario configuration");
  run_sc->add_option("config", config, "Scenario JSON file")->required();
  run_sc->add_option("-o,--output", output, "Output directory (overrides MTF_OUTPUT_DIR and the config)");
  run_sc->add_flag("-q,--quiet", quiet, "No progress messages");

  std::string suite, report;
  auto* verify_sc = app.add_subcommand("verify", "Run a verification suite");
  verify_sc->add_option("suite", suite, "scordelis-lo | tensile | poisson | single-cell | all")
      ->required()
      ->check(CLI::IsMember({"scordelis-lo", "tensile", "poisson", "single-cell", "all"}));
  verify_sc->add_option("--json", report, "Write the report data to this file");

  double mu_a = 0.767, e_p = 21.0, lambda0 = 1.24, mu_s = 500.0, ds = 18.0, da = 4.0;
  auto* stoney_sc = app.add_subcommand("stoney", "Modified Stoney curvature of an active bilayer (1/mm)");
  stoney_sc->add_option("--mu-a", mu_a, "Active layer shear modulus (kPa)")->capture_default_str();
  stoney_sc->add_option("--ep", e_p, "Fiber stiffness E_p (kPa)")->capture_default_str();
  stoney_sc->add_option("--lambda0", lambda0, "Optimal stretch")->capture_default_str();
  stoney_sc->add_option("--mu-s", mu_s, "Substrate shear modulus (kPa)")->capture_default_str();
  stoney_sc->add_option("--ds", ds, "Substrate thickness (um)")->capture_default_str();
  stoney_sc->add_option("--da", da, "Active layer thickness (um)")->capture_default_str();

  std::string trace;
  double length = 3.5;
  auto* curv_sc = app.add_subcommand("curvature", "Curvature from a trace with x_bar or mid-axis x,y,z columns");
  curv_sc->add_option("trace", trace, "CSV file")->required()->check(CLI::ExistingFile);
  curv_sc->add_option("--length", length, "Film length L1 (mm)")->capture_default_str();

  std::vector<int> degrees{2, 3, 4};
  int levels = 5;
  auto* poisson_sc = app.add_subcommand("poisson", "Poisson convergence study on the distorted patch");
  poisson_sc->add_option("--degrees", degrees, "Spline degrees")->delimiter(',')->capture_default_str();
  poisson_sc->add_option("--levels", levels, "Refinement levels (2, 4, 8, ... spans)")
      ->check(CLI::Range(1, 9))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_sc) return run(config, output, quiet);
    if (*verify_sc) return verify_cmd(suite, report);
    if (*stoney_sc) {
      std::cout << exact(stoney_curvature(mu_a, e_p, lambda0, mu_s, ds * 1e-3, da * 1e-3)) << '\n';
      return kOk;
    }
    if (*curv_sc) return curvature_cmd(trace, length);
    if (*poisson_sc) return poisson_cmd(degrees, levels);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  }
  return kOk;
}
