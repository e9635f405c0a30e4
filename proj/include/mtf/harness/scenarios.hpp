#pragma once

// Scenario runner: films under imposed activation (quasi-static ramps and generalized-alpha
// runs), coupled electromechanics and EP-only runs. Each run writes CSV traces, VTK
// snapshots and a summary.json in its output directory.

#include "mtf/harness/config.hpp"
#include "mtf/harness/io.hpp"
#include "mtf/harness/postprocess.hpp"

namespace mtf::harness {

/// Upstroke threshold for activation times (mV).
inline constexpr double kActivationThreshold = -40.0;

inline LayerStack film_layers(const LayersConfig& c, double substrate_um) {
  LayerStack s;
  s.points_per_layer = c.points_per_layer;
  s.layers.push_back({substrate_um * 1e-3, NeoHookean{c.mu_s, std::nullopt}, c.density_s, false});
  s.layers.push_back({c.active_um * 1e-3, NeoHookean{c.mu_a, FiberAnisotropy{c.e_p, c.alpha}}, c.density_a, true});
  return s;
}

/// Film of the configured geometry clamped along X = 0.
inline ShellModel film_model(const ScenarioConfig& c, double substrate_um) {
  const auto& g = c.geometry;
  ShellModel m(rectangle_patch(g.L1, g.L2, g.degrees[0], g.degrees[1], g.mesh[0], g.mesh[1]),
               film_layers(c.layers, substrate_um), c.fiber);
  m.clamp_edge(0);
  return m;
}

inline BSplinePatch ep_patch(const ScenarioConfig& c) {
  return rectangle_patch(c.geometry.L1, c.geometry.L2, c.ep.degrees[0], c.ep.degrees[1], c.ep.mesh[0], c.ep.mesh[1]);
}

/// Basis functions of a patch at a fixed reference point.
struct PointProbe {
  std::string name;
  Vec2 t = Vec2::Zero();
  TensorBasis basis;

  PointProbe(const BSplinePatch& patch, const TrackedPoint& p)
      : name(p.name), t(invert_point(patch, Vec3(p.X, p.Y, 0.0))), basis(tensor_basis(patch, t[0], t[1], 0)) {}

  [[nodiscard]] double scalar(const Vector& coefficients) const {
    double s = 0.0;
    for (std::size_t l = 0; l < basis.size(); ++l) s += basis.n[l] * coefficients[basis.index[l]];
    return s;
  }

  [[nodiscard]] Vec3 vector(const Vector& u) const {
    Vec3 x = Vec3::Zero();
    for (std::size_t l = 0; l < basis.size(); ++l) x += basis.n[l] * u.segment<3>(3 * basis.index[l]);
    return x;
  }
};

inline std::vector<PointProbe> make_probes(const BSplinePatch& patch, const std::vector<TrackedPoint>& points) {
  std::vector<PointProbe> out;
  for (const auto& p : points) out.emplace_back(patch, p);
  return out;
}

/// Population variance of v over the collocation points, summed in index order.
inline double spatial_variance(const Vector& v) {
  if (v.size() == 0) return 0.0;
  const double mean = v.sum() / static_cast<double>(v.size());
  return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

/// Maximum of @p values in each window [b_j, b_{j+1}) between successive stimulus onsets.
inline std::vector<double> window_peaks(const std::vector<double>& time, const std::vector<double>& values,
                                        std::vector<double> onsets) {
  std::sort(onsets.begin(), onsets.end());
  onsets.erase(std::unique(onsets.begin(), onsets.end()), onsets.end());
  std::vector<double> peaks(onsets.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < time.size(); ++k) {
    const auto it = std::upper_bound(onsets.begin(), onsets.end(), time[k]);
    if (it == onsets.begin()) continue;
    auto& p = peaks[static_cast<std::size_t>(it - onsets.begin()) - 1];
    p = std::max(p, values[k]);
  }
  return peaks;
}

/// First upward crossing of @p threshold, linearly interpolated; negative when none.
inline double crossing_time(const std::vector<double>& time, const std::vector<double>& values, double threshold) {
  for (std::size_t k = 1; k < time.size(); ++k)
    if (values[k - 1] < threshold && values[k] >= threshold)
      return time[k - 1] + (threshold - values[k - 1]) / (values[k] - values[k - 1]) * (time[k] - time[k - 1]);
  return -1.0;
}

/// Least-squares slope of x against t.
inline double fitted_speed(const std::vector<double>& t, const std::vector<double>& x) {
  const auto n = static_cast<double>(t.size());
  if (t.size() < 2) return 0.0;
  double st = 0.0, sx = 0.0, stt = 0.0, stx = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sx += x[i];
    stt += t[i] * t[i];
    stx += t[i] * x[i];
  }
  const double den = n * stt - st * st;
  return den > 0.0 ? (n * stx - st * sx) / den : 0.0;
}

struct RunOptions {
  std::string output_dir;  ///< overrides the configured directory and MTF_OUTPUT_DIR
  std::function<void(const std::string&)> log;
};

struct ScenarioOutcome {
  std::filesystem::path directory;
  nlohmann::json summary;
};

namespace detail {

struct RunContext {
  const ScenarioConfig& config;
  std::filesystem::path dir;
  nlohmann::json& files;
  const RunOptions& options;

  [[nodiscard]] std::string file(const std::string& name) const {
    files.push_back(name);
    return (dir / name).string();
  }
  void log(const std::string& msg) const {
    if (options.log) options.log(msg);
  }
};

inline std::string label_of(const std::string& parameter, double value) {
  return parameter + "_" + fmt(value, 10);
}

inline std::vector<std::string> point_columns(const std::vector<PointProbe>& probes,
                                              std::initializer_list<const char*> fields, const std::string& prefix = {}) {
  std::vector<std::string> cols;
  for (const auto& p : probes)
    for (const char* f : fields) cols.push_back(prefix + p.name + "_" + f);
  return cols;
}

inline ActivationFn ramped_activation(const ImposedActivationParams& p, double t, double scale) {
  return [p, t, scale](std::size_t, double lambda) { return imposed_activation(lambda, t, p, scale); };
}

inline nlohmann::json run_quasi_static(const RunContext& ctx, double peak, double substrate_um,
                                       const std::string& label) {
  const auto& c = ctx.config;
  const ShellModel model = film_model(c, substrate_um);
  ImposedActivationParams p = c.activation.imposed;
  p.peak = peak;
  const auto probes = make_probes(model.patch(), c.outputs.points);

  CsvTable trace;
  trace.columns = {"step", "fraction", "x_bar", "curvature"};
  for (auto& col : point_columns(probes, {"ux", "uy", "uz"})) trace.columns.push_back(col);
  std::vector<double> curvature, x_bar;
  const auto observe = [&](int k, const Vector& u) {
    const auto cr = curvature_from_deflection(mid_axis(model, u, c.outputs.curvature_y, c.outputs.axis_samples),
                                              c.geometry.L1);
    curvature.push_back(cr.curvature);
    x_bar.push_back(cr.x_bar);
    std::vector<double> row{static_cast<double>(k), static_cast<double>(k) / c.solver.steps, cr.x_bar, cr.curvature};
    for (const auto& pr : probes) {
      const Vec3 d = pr.vector(u);
      row.insert(row.end(), {d.x(), d.y(), d.z()});
    }
    trace.add(std::move(row));
    if (c.outputs.vtk_every > 0 && k % c.outputs.vtk_every == 0 && k != c.solver.steps)
      write_vtk(ctx.file(label + "_step" + std::to_string(k) + ".vtk"), model, u);
  };
  observe(0, Vector::Zero(model.dofs()));
  const auto res = solve_quasi_static(
      model, c.solver.steps, [&](int, double f) { return ramped_activation(p, 0.0, f); }, c.solver.newton, {},
      [&](int k, const Vector& u) {
        observe(k, u);
        ctx.log(label + ": load step " + std::to_string(k) + "/" + std::to_string(c.solver.steps) +
                ", curvature " + fmt(curvature.back()));
      });
  trace.write(ctx.file(label + "_trace.csv"));
  write_vtk(ctx.file(label + "_final.vtk"), model, res.displacements.back());

  int iterations = 0;
  for (const auto& r : res.reports) iterations += r.iterations;
  const auto& l = c.layers;
  nlohmann::json results = {
      {"curvature", std::vector<double>(curvature.begin() + 1, curvature.end())},
      {"x_bar", std::vector<double>(x_bar.begin() + 1, x_bar.end())},
      {"final_curvature", curvature.back()},
      {"stoney_curvature", stoney_curvature(l.mu_a, l.e_p, p.lambda0, l.mu_s, substrate_um * 1e-3, l.active_um * 1e-3)},
      {"newton_iterations", iterations}};
  for (const auto& pr : probes) {
    const Vec3 d = pr.vector(res.displacements.back());
    results["final_" + pr.name] = {d.x(), d.y(), d.z()};
  }
  return {{"label", label}, {"parameters", {{"peak", peak}, {"substrate_um", substrate_um}}}, {"results", results}};
}

inline nlohmann::json run_dynamic(const RunContext& ctx, double peak, const std::string& label) {
  const auto& c = ctx.config;
  const ShellModel model = film_model(c, c.layers.substrate_um);
  ImposedActivationParams p = c.activation.imposed;
  p.peak = peak;
  const int steps = c.solver.steps;
  const GeneralizedAlphaParams gp{c.solver.rho_inf, c.solver.end_time / steps, c.solver.damping, c.solver.weighting};
  const TimeActivation activation = [p](double t) { return ramped_activation(p, t, 1.0); };
  const auto probes = make_probes(model.patch(), c.outputs.points);
  const auto curvature_of = [&](const Vector& u) {
    return curvature_from_deflection(mid_axis(model, u, c.outputs.curvature_y, c.outputs.axis_samples), c.geometry.L1)
        .curvature;
  };

  CsvTable trace;
  trace.columns = {"step", "time", "curvature"};
  for (auto& col : point_columns(probes, {"ux", "uy", "uz"})) trace.columns.push_back(col);
  std::vector<double> time, curvature;
  std::vector<std::vector<double>> point_trace(3 * probes.size());

  GeneralizedAlpha integrator = make_shell_integrator(model, gp, activation, c.solver.newton);
  const DynamicRun run = run_dynamic(integrator, steps, {}, [&](const DynamicState& s) {
    const double t = integrator.time(s.step);
    time.push_back(t);
    curvature.push_back(curvature_of(s.u));
    std::vector<double> row{static_cast<double>(s.step), t, curvature.back()};
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const Vec3 d = probes[i].vector(s.u);
      for (int k = 0; k < 3; ++k) point_trace[3 * i + static_cast<std::size_t>(k)].push_back(d[k]);
      row.insert(row.end(), {d.x(), d.y(), d.z()});
    }
    trace.add(std::move(row));
    if (c.outputs.vtk_every > 0 && s.step % c.outputs.vtk_every == 0)
      write_vtk(ctx.file(label + "_step" + std::to_string(s.step) + ".vtk"), model, s.u);
    if (s.step > 0) ctx.log(label + ": step " + std::to_string(s.step) + "/" + std::to_string(steps));
  });
  trace.write(ctx.file(label + "_trace.csv"));
  write_vtk(ctx.file(label + "_final.vtk"), model, run.final_state.u);

  nlohmann::json results = {{"time", time},
                            {"curvature", curvature},
                            {"max_curvature", *std::max_element(curvature.begin(), curvature.end())},
                            {"fundamental_period", fundamental_period(model)}};
  for (std::size_t i = 0; i < probes.size(); ++i)
    for (int k = 0; k < 3; ++k)
      results[probes[i].name + "_u" + "xyz"[k]] = point_trace[3 * i + static_cast<std::size_t>(k)];

  if (c.outputs.traces(peak)) {
    // equilibrium at every instant, continued from the previous instant's equilibrium
    CsvTable qs;
    qs.columns = trace.columns;
    std::vector<double> qs_curvature;
    std::vector<std::vector<double>> qs_points(3 * probes.size());
    Vector u = Vector::Zero(model.dofs());
    ReducedSolver solver(model);
    for (int k = 0; k <= steps; ++k) {
      const double t = time[static_cast<std::size_t>(k)];
      const ActivationFn act = activation(t);
      const std::string what = label + " quasi-static instant " + std::to_string(k);
      try {
        newton_solve(model, u, act, c.solver.newton, solver, what);
      } catch (const SolverError&) {
        u = solve_quasi_static(
                model, 20, [&](int, double f) { return ramped_activation(p, t, f); }, c.solver.newton)
                .displacements.back();
      }
      qs_curvature.push_back(curvature_of(u));
      std::vector<double> row{static_cast<double>(k), t, qs_curvature.back()};
      for (std::size_t i = 0; i < probes.size(); ++i) {
        const Vec3 d = probes[i].vector(u);
        for (int j = 0; j < 3; ++j) qs_points[3 * i + static_cast<std::size_t>(j)].push_back(d[j]);
        row.insert(row.end(), {d.x(), d.y(), d.z()});
      }
      qs.add(std::move(row));
    }
    qs.write(ctx.file(label + "_quasi_static.csv"));
    results["qs_curvature"] = qs_curvature;
    results["max_qs_curvature"] = *std::max_element(qs_curvature.begin(), qs_curvature.end());
    for (std::size_t i = 0; i < probes.size(); ++i)
      for (int k = 0; k < 3; ++k)
        results["qs_" + probes[i].name + "_u" + "xyz"[k]] = qs_points[3 * i + static_cast<std::size_t>(k)];
  }
  return {{"label", label}, {"parameters", {{"peak", peak}, {"substrate_um", c.layers.substrate_um}}}, {"results", results}};
}

inline std::vector<double> stimulus_onsets(const StimulusProtocol& p) {
  std::vector<double> t;
  for (const auto& e : p.events) t.push_back(e.start);
  return t;
}

inline nlohmann::json run_coupled(const RunContext& ctx) {
  const auto& c = ctx.config;
  const ShellModel model = film_model(c, c.layers.substrate_um);
  const CouplingSchedule schedule = coupling_schedule(c);
  MonodomainOptions mo;
  mo.dt = schedule.dt_e();
  mo.corners = c.ep.corners;
  const MonodomainSolver ep(make_collocation_grid(ep_patch(c)), c.ep.cell, c.activation.coupled, c.ep.protocol, mo);
  CoupledOptions co;
  co.mechanics = {c.solver.rho_inf, schedule.dt, c.solver.damping, c.solver.weighting};
  co.newton = c.solver.newton;
  write_json(ctx.file("manifest.json"), coupling_manifest(model, ep, schedule, co));

  const auto ep_probes = make_probes(ep.grid().patch, c.outputs.points);
  const auto mech_probes = make_probes(model.patch(), c.outputs.points);
  CsvTable trace;
  trace.columns = {"step", "time", "v_variance"};
  for (auto& col : point_columns(ep_probes, {"v", "sigma_a", "ux", "uy", "uz"})) trace.columns.push_back(col);
  std::vector<double> time, variance;
  std::vector<std::vector<double>> v_at(ep_probes.size()), s_at(ep_probes.size()), d_at(ep_probes.size());

  const auto run = co_simulate(model, ep, schedule, co, [&](const CoupledSample& s) {
    time.push_back(s.time);
    variance.push_back(spatial_variance(s.ep->v));
    const Vector& u = s.mechanics->u;
    std::vector<double> row{static_cast<double>(s.step), s.time, variance.back()};
    for (std::size_t i = 0; i < ep_probes.size(); ++i) {
      v_at[i].push_back(ep_probes[i].scalar(s.ep->v_hat));
      s_at[i].push_back(ep_probes[i].scalar(*s.sigma_hat));
      const Vec3 d = mech_probes[i].vector(u);
      d_at[i].push_back(d.norm());
      row.insert(row.end(), {v_at[i].back(), s_at[i].back(), d.x(), d.y(), d.z()});
    }
    trace.add(std::move(row));
    const std::string tag = "_step" + std::to_string(s.step);
    if (c.outputs.ep_snapshot_every > 0 && s.step % c.outputs.ep_snapshot_every == 0)
      write_snapshot_csv(ctx.file("ep" + tag + ".csv"), ep.grid(), *s.ep);
    if (c.outputs.vtk_every > 0 && s.step % c.outputs.vtk_every == 0) {
      const Vector sigma_hat = *s.sigma_hat;
      write_vtk(ctx.file("shell" + tag + ".vtk"), model, u, 51, 11,
                [&](double t1, double t2) {
                  const Vec2 q = map_parameters(model.patch(), ep.grid().patch, t1, t2);
                  const TensorBasis tb = tensor_basis(ep.grid().patch, q[0], q[1], 0);
                  double x = 0.0;
                  for (std::size_t l = 0; l < tb.size(); ++l) x += tb.n[l] * sigma_hat[tb.index[l]];
                  return x;
                },
                "sigma_a");
    }
    if (s.step > 0 && s.step % 20 == 0)
      ctx.log("coupled: t = " + fmt(s.time) + " ms, v variance " + fmt(variance.back()));
  });
  trace.write(ctx.file("trace.csv"));
  write_vtk(ctx.file("shell_final.vtk"), model, run.mechanics.u);

  const auto onsets = stimulus_onsets(c.ep.protocol);
  nlohmann::json results = {{"time", time},
                            {"v_variance", variance},
                            {"stimulus_onsets", onsets},
                            {"last_stimulus_end", c.ep.protocol.last_end()},
                            {"final_v_variance", variance.back()}};
  for (std::size_t i = 0; i < ep_probes.size(); ++i) {
    const auto& n = ep_probes[i].name;
    results[n + "_v"] = v_at[i];
    results[n + "_sigma_a"] = s_at[i];
    results[n + "_sigma_a_peaks"] = window_peaks(time, s_at[i], onsets);
    results[n + "_displacement"] = d_at[i];
  }
  return {{"label", "coupled"},
          {"parameters", {{"dt", schedule.dt}, {"substeps", schedule.substeps}, {"steps", schedule.steps}}},
          {"results", results}};
}

inline nlohmann::json run_ep(const RunContext& ctx) {
  const auto& c = ctx.config;
  const double dt = c.ep.dt;
  const long steps = std::lround(c.ep.end_time / dt);
  if (std::abs(static_cast<double>(steps) * dt - c.ep.end_time) > 1e-9 * c.ep.end_time)
    throw ConfigError("config: /ep/end_time must be a multiple of /ep/dt");
  MonodomainOptions mo;
  mo.dt = dt;
  mo.corners = c.ep.corners;
  const MonodomainSolver ep(make_collocation_grid(ep_patch(c)), c.ep.cell, c.activation.coupled, c.ep.protocol, mo);
  const auto probes = make_probes(ep.grid().patch, c.outputs.points);
  const long every = std::max(1L, std::lround(1.0 / dt));  // trace rows every millisecond

  CsvTable trace;
  trace.columns = {"step", "time", "v_variance"};
  for (auto& col : point_columns(probes, {"v", "sigma_a"})) trace.columns.push_back(col);
  std::vector<double> time;
  std::vector<std::vector<double>> v_at(probes.size()), s_at(probes.size());
  std::vector<double> sample_time, variance;
  EpState state = ep.rest_state();
  run_protocol(ep, state, steps, [&](const EpState& s) {
    time.push_back(ep.time(s.step));
    for (std::size_t i = 0; i < probes.size(); ++i) v_at[i].push_back(probes[i].scalar(s.v_hat));
    if (s.step % every != 0) return;
    // sigma_a lives on the collocation points; it is projected only for sampled rows
    const Vector sigma_hat = project_activation(ep.grid(), s.sigma);
    sample_time.push_back(time.back());
    variance.push_back(spatial_variance(s.v));
    std::vector<double> row{static_cast<double>(s.step), time.back(), variance.back()};
    for (std::size_t i = 0; i < probes.size(); ++i) {
      s_at[i].push_back(probes[i].scalar(sigma_hat));
      row.insert(row.end(), {v_at[i].back(), s_at[i].back()});
    }
    trace.add(std::move(row));
    if (c.outputs.ep_snapshot_every > 0 && (s.step / every) % c.outputs.ep_snapshot_every == 0)
      write_snapshot_csv(ctx.file("ep_step" + std::to_string(s.step) + ".csv"), ep.grid(), s);
    if (s.step > 0 && (s.step / every) % 100 == 0) ctx.log("ep: t = " + fmt(time.back()) + " ms");
  });
  trace.write(ctx.file("trace.csv"));
  write_snapshot_csv(ctx.file("ep_final.csv"), ep.grid(), state);

  std::vector<double> activation, act_t, act_x;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    activation.push_back(crossing_time(time, v_at[i], kActivationThreshold));
    if (activation.back() >= 0.0) {
      act_t.push_back(activation.back());
      act_x.push_back(c.outputs.points[i].X);
    }
  }
  const double speed = fitted_speed(act_t, act_x);  // mm/ms
  nlohmann::json results = {{"time", sample_time},
                            {"v_variance", variance},
                            {"activation_times", activation},
                            {"wave_speed_mm_per_ms", speed},
                            {"wave_speed_cm_per_s", 100.0 * speed},
                            {"final_v_variance", variance.back()}};
  for (std::size_t i = 0; i < probes.size(); ++i) {
    results[probes[i].name + "_sigma_a"] = s_at[i];
    results[probes[i].name + "_max_v"] = *std::max_element(v_at[i].begin(), v_at[i].end());
  }
  return {{"label", "ep"}, {"parameters", {{"dt", dt}, {"steps", steps}}}, {"results", results}};
}

}  // namespace detail

/// Runs every case of a validated scenario and writes summary.json last.
inline ScenarioOutcome run_scenario(const ScenarioConfig& c, const RunOptions& options = {}) {
  ScenarioOutcome out;
  out.directory = resolve_output_dir(c.outputs.directory, c.name, options.output_dir);
  std::filesystem::create_directories(out.directory);
  nlohmann::json files = nlohmann::json::array();
  const detail::RunContext ctx{c, out.directory, files, options};
  nlohmann::json runs = nlohmann::json::array();

  const auto sweep_values = [&](double fallback) {
    return c.sweep ? c.sweep->values : std::vector<double>{fallback};
  };
  switch (c.kind) {
    case ScenarioKind::quasi_static: {
      const bool thickness = c.sweep && c.sweep->parameter == "substrate_um";
      for (double v : sweep_values(thickness ? c.layers.substrate_um : c.activation.imposed.peak)) {
        const double peak = thickness ? c.activation.imposed.peak : v;
        const double ds = thickness ? v : c.layers.substrate_um;
        runs.push_back(detail::run_quasi_static(ctx, peak, ds, detail::label_of(thickness ? "ds" : "peak", v)));
      }
      break;
    }
    case ScenarioKind::dynamic:
      for (double v : sweep_values(c.activation.imposed.peak))
        runs.push_back(detail::run_dynamic(ctx, v, detail::label_of("peak", v)));
      break;
    case ScenarioKind::coupled: runs.push_back(detail::run_coupled(ctx)); break;
    case ScenarioKind::ep: runs.push_back(detail::run_ep(ctx)); break;
  }

  files.push_back("summary.json");
  out.summary = {{"schema", kSummarySchema}, {"scenario", c.name}, {"kind", to_string(c.kind)},
                 {"config", c.source},       {"runs", runs},       {"files", files}};
  if (c.sweep) {
    std::vector<double> final;
    for (const auto& r : runs)
      final.push_back(r["results"].contains("final_curvature") ? r["results"]["final_curvature"].get<double>()
                                                                : r["results"]["max_curvature"].get<double>());
    out.summary["sweep"] = {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}, {"curvature", final}};
  }
  if (const auto problems = summary_problems(out.summary); !problems.empty())
    throw Error("summary does not conform to " + std::string(kSummarySchema) + ": " + problems.front());
  write_json((out.directory / "summary.json").string(), out.summary);
  return out;
}

inline ScenarioOutcome run_scenario(const std::string& config_path, const RunOptions& options = {}) {
  return run_scenario(load_config(config_path), options);
}

}  // namespace mtf::harness
