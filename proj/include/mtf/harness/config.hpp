#pragma once

// Scenario configuration: JSON input, validated field by field before any solve.
// Lengths in mm, times in ms, stresses in kPa; layer thicknesses are given in micrometres
// and the damping coefficient in 1/s, converted here.

#include "mtf/coupling.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace mtf::harness {

inline constexpr const char* kConfigSchema = "mtf-config/1";

enum class ScenarioKind { quasi_static, dynamic, coupled, ep };

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::quasi_static: return "quasi-static";
    case ScenarioKind::dynamic: return "dynamic";
    case ScenarioKind::coupled: return "coupled";
    case ScenarioKind::ep: return "ep";
  }
  return "?";
}

struct GeometryConfig {
  double L1 = 3.5, L2 = 2.0;  ///< mm
  std::array<int, 2> mesh{50, 10};
  std::array<int, 2> degrees{2, 2};
};

struct LayersConfig {
  double substrate_um = 18.0, active_um = 4.0;
  double mu_s = 500.0, mu_a = 0.767;  ///< kPa
  double e_p = 21.0, alpha = 5.5;
  double density_s = 0.965, density_a = 0.965;  ///< mg/mm^3
  int points_per_layer = 3;
};

enum class ActivationMode { imposed, coupled };

struct ActivationConfig {
  ActivationMode mode = ActivationMode::imposed;
  ImposedActivationParams imposed;
  CoupledActivationParams coupled;
};

struct SolverConfig {
  int steps = 42;
  double end_time = 0.0;  ///< ms, dynamic and coupled runs
  double rho_inf = 0.5;
  double damping = 0.0;   ///< 1/ms
  ActivationWeighting weighting = ActivationWeighting::printed;
  NewtonOptions newton;
};

/// One run per value of the swept parameter ("peak" in kPa or "substrate_um").
struct SweepConfig {
  std::string parameter;
  std::vector<double> values;
};

struct EpConfig {
  std::array<int, 2> mesh{51, 30};
  std::array<int, 2> degrees{2, 2};
  double dt = 0.02;       ///< ms
  int substeps = 0;       ///< coupled runs: EP steps per mechanical step (0: from dt)
  double end_time = 0.0;  ///< ms, EP-only runs
  AlievPanfilovParams cell;
  StimulusProtocol protocol;
  CornerTreatment corners = CornerTreatment::average;
};

struct TrackedPoint {
  std::string name;
  double X = 0.0, Y = 0.0;  ///< reference coordinates (mm)
};

struct OutputConfig {
  std::string directory = "mtf-output";
  std::vector<TrackedPoint> points;
  double curvature_y = 1.0;  ///< mm, line of the mid-axis used for curvature
  int axis_samples = 200;
  bool quasi_static_trace = false;
  std::vector<double> quasi_static_peaks;  ///< peaks that get the trace; empty means every peak
  int vtk_every = 0;  ///< 0 writes only the final state
  int ep_snapshot_every = 0;

  /// Whether a dynamic run at @p peak also records the quasi-static trace.
  [[nodiscard]] bool traces(double peak) const {
    return quasi_static_trace && (quasi_static_peaks.empty() ||
                                  std::find(quasi_static_peaks.begin(), quasi_static_peaks.end(), peak) !=
                                      quasi_static_peaks.end());
  }
};

struct ScenarioConfig {
  std::string name = "scenario";
  ScenarioKind kind = ScenarioKind::quasi_static;
  GeometryConfig geometry;
  LayersConfig layers;
  Vec3 fiber = Vec3::UnitX();
  ActivationConfig activation;
  SolverConfig solver;
  std::optional<SweepConfig> sweep;
  EpConfig ep;
  OutputConfig outputs;
  nlohmann::json source;  ///< the input document as read
};

namespace detail {

enum class Bound { any, positive, nonnegative };

/// Read access to one JSON object with its field path for diagnostics.
class Node {
 public:
  Node(const nlohmann::json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) fail(path_.empty() ? "/" : path_, "must be an object");
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_ && j_->contains(key); }
  [[nodiscard]] std::string path(const std::string& key) const { return path_ + "/" + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config: " + path + " " + what);
  }

  void allow(std::initializer_list<const char*> keys) const {
    if (!j_) return;
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_->items())
      if (!ok.count(k)) fail(path(k), "is not a recognised field");
  }

  [[nodiscard]] Node child(const std::string& key) const {
    return {has(key) ? &(*j_)[key] : nullptr, path(key)};
  }

  [[nodiscard]] const nlohmann::json* raw(const std::string& key) const { return has(key) ? &(*j_)[key] : nullptr; }

  void number(const std::string& key, double& out, Bound b = Bound::any) const {
    if (has(key)) {
      const auto& v = (*j_)[key];
      if (!v.is_number()) fail(path(key), "must be a number");
      out = v.get<double>();
    }
    check(key, out, b);
  }

  void integer(const std::string& key, int& out, Bound b = Bound::any) const {
    if (has(key)) {
      const auto& v = (*j_)[key];
      if (!v.is_number_integer()) fail(path(key), "must be an integer");
      out = v.get<int>();
    }
    check(key, out, b);
  }

  void boolean(const std::string& key, bool& out) const {
    if (!has(key)) return;
    if (!(*j_)[key].is_boolean()) fail(path(key), "must be true or false");
    out = (*j_)[key].get<bool>();
  }

  void string(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    if (!(*j_)[key].is_string()) fail(path(key), "must be a string");
    out = (*j_)[key].get<std::string>();
  }

  template <class E>
  void choice(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> options) const {
    if (!has(key)) return;
    std::string s;
    string(key, s);
    std::string names;
    for (const auto& [name, value] : options) {
      if (s == name) {
        out = value;
        return;
      }
      names += names.empty() ? name : std::string(", ") + name;
    }
    fail(path(key), "must be one of: " + names);
  }

  template <std::size_t N>
  void int_array(const std::string& key, std::array<int, N>& out, Bound b) const {
    if (has(key)) {
      const auto& v = (*j_)[key];
      if (!v.is_array() || v.size() != N) fail(path(key), "must be an array of " + std::to_string(N) + " integers");
      for (std::size_t i = 0; i < N; ++i) {
        if (!v[i].is_number_integer()) fail(path(key) + "/" + std::to_string(i), "must be an integer");
        out[i] = v[i].get<int>();
      }
    }
    for (std::size_t i = 0; i < N; ++i) check(key + "/" + std::to_string(i), out[i], b);
  }

  void vector(const std::string& key, std::vector<double>& out, Bound b) const {
    if (!has(key)) return;
    const auto& v = (*j_)[key];
    if (!v.is_array() || v.empty()) fail(path(key), "must be a nonempty array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(path(key) + "/" + std::to_string(i), "must be a number");
      out.push_back(v[i].get<double>());
      check(key + "/" + std::to_string(i), out.back(), b);
    }
  }

 private:
  template <class T>
  void check(const std::string& key, T value, Bound b) const {
    if (!std::isfinite(static_cast<double>(value))) fail(path(key), "must be finite");
    if (b == Bound::positive && !(value > 0)) fail(path(key), "must be positive");
    if (b == Bound::nonnegative && !(value >= 0)) fail(path(key), "must be nonnegative");
  }

  const nlohmann::json* j_;
  std::string path_;
};

inline void read_cell(const Node& n, AlievPanfilovParams& c) {
  n.allow({"k_v", "a", "b", "mu1", "mu2", "e0", "r_v", "s_v", "r_t", "D", "C_m", "v0", "w0", "sigma0", "ionic"});
  n.number("k_v", c.k_v, Bound::positive);
  n.number("a", c.a);
  n.number("b", c.b);
  n.number("mu1", c.mu1, Bound::nonnegative);
  n.number("mu2", c.mu2, Bound::positive);
  n.number("e0", c.e0, Bound::nonnegative);
  n.number("r_v", c.r_v, Bound::positive);
  n.number("s_v", c.s_v);
  n.number("r_t", c.r_t, Bound::positive);
  n.number("D", c.D, Bound::nonnegative);
  n.number("C_m", c.C_m, Bound::positive);
  n.number("v0", c.v0);
  n.number("w0", c.w0);
  n.number("sigma0", c.sigma0);
  n.choice("ionic", c.model, {std::pair{"cubic", IonicModel::cubic}, {"printed", IonicModel::printed}});
}

inline StimulusEvent read_stimulus(const Node& n) {
  n.allow({"kind", "edge", "amplitude", "start", "duration", "range", "region"});
  StimulusEvent e;
  n.choice("kind", e.kind, {std::pair{"boundary", StimulusKind::boundary}, {"interior", StimulusKind::interior}});
  if (e.kind == StimulusKind::boundary) {
    if (!n.has("edge")) Node::fail(n.path("edge"), "is required for boundary stimuli");
    n.integer("edge", e.edge);
    if (e.edge < 0 || e.edge > 3) Node::fail(n.path("edge"), "must be 0..3");
    std::vector<double> range{0.0, 1.0};
    n.vector("range", range, Bound::nonnegative);
    if (range.size() != 2 || range[0] > range[1] || range[1] > 1.0)
      Node::fail(n.path("range"), "must be [s0, s1] with 0 <= s0 <= s1 <= 1");
    e.s0 = range[0];
    e.s1 = range[1];
  } else {
    std::vector<double> region{0.0, 1.0, 0.0, 1.0};
    n.vector("region", region, Bound::nonnegative);
    if (region.size() != 4 || region[0] > region[1] || region[2] > region[3] || region[1] > 1.0 || region[3] > 1.0)
      Node::fail(n.path("region"), "must be [s0, s1, r0, r1] in normalized coordinates");
    e.s0 = region[0];
    e.s1 = region[1];
    e.r0 = region[2];
    e.r1 = region[3];
  }
  if (!n.has("amplitude")) Node::fail(n.path("amplitude"), "is required");
  n.number("amplitude", e.amplitude);
  n.number("start", e.start, Bound::nonnegative);
  if (!n.has("duration")) Node::fail(n.path("duration"), "is required");
  n.number("duration", e.duration, Bound::positive);
  return e;
}

}  // namespace detail

/// Parses and validates a scenario; every violation names its field path.
inline ScenarioConfig parse_config(const nlohmann::json& j) {
  using detail::Bound;
  using detail::Node;
  const Node root(&j, "");
  root.allow({"schema", "name", "scenario", "geometry", "layers", "fiber", "activation", "solver", "sweep", "ep",
              "outputs"});
  ScenarioConfig c;
  c.source = j;
  std::string schema = kConfigSchema;
  root.string("schema", schema);
  if (schema != kConfigSchema) Node::fail("/schema", std::string("must be \"") + kConfigSchema + "\"");
  root.string("name", c.name);
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos)
    Node::fail("/name", "must be a nonempty file-name-safe string");
  if (!root.has("scenario")) Node::fail("/scenario", "is required");
  root.choice("scenario", c.kind,
              {std::pair{"quasi-static", ScenarioKind::quasi_static}, {"dynamic", ScenarioKind::dynamic},
               {"coupled", ScenarioKind::coupled}, {"ep", ScenarioKind::ep}});

  const Node g = root.child("geometry");
  g.allow({"L1", "L2", "mesh", "degrees"});
  g.number("L1", c.geometry.L1, Bound::positive);
  g.number("L2", c.geometry.L2, Bound::positive);
  g.int_array("mesh", c.geometry.mesh, Bound::positive);
  g.int_array("degrees", c.geometry.degrees, Bound::positive);
  if (c.geometry.degrees[0] < 2 || c.geometry.degrees[1] < 2) Node::fail("/geometry/degrees", "must be at least 2 (C1 shell)");

  const Node l = root.child("layers");
  l.allow({"substrate_um", "active_um", "mu_s", "mu_a", "E_p", "alpha", "density_s", "density_a", "points_per_layer"});
  l.number("substrate_um", c.layers.substrate_um, Bound::positive);
  l.number("active_um", c.layers.active_um, Bound::positive);
  l.number("mu_s", c.layers.mu_s, Bound::positive);
  l.number("mu_a", c.layers.mu_a, Bound::positive);
  l.number("E_p", c.layers.e_p, Bound::nonnegative);
  l.number("alpha", c.layers.alpha, Bound::nonnegative);
  l.number("density_s", c.layers.density_s, Bound::positive);
  l.number("density_a", c.layers.density_a, Bound::positive);
  l.integer("points_per_layer", c.layers.points_per_layer, Bound::positive);

  if (const auto* f = root.raw("fiber")) {
    if (!f->is_array() || f->size() != 3) Node::fail("/fiber", "must be an array of 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!(*f)[static_cast<std::size_t>(i)].is_number()) Node::fail("/fiber/" + std::to_string(i), "must be a number");
      c.fiber[i] = (*f)[static_cast<std::size_t>(i)].get<double>();
    }
    if (!(c.fiber.norm() > 0.0)) Node::fail("/fiber", "must be a nonzero vector");
    c.fiber.normalize();
  }

  const Node a = root.child("activation");
  a.allow({"mode", "peak", "lambda0", "lambda_min", "lambda_max", "lambda_s", "law", "t_bar", "floor_at_zero",
           "k_sigma", "v_r", "zeta0", "zeta_inf", "xi_v", "v_bar"});
  a.choice("mode", c.activation.mode, {std::pair{"IM", ActivationMode::imposed}, {"CO", ActivationMode::coupled}});
  auto& im = c.activation.imposed;
  a.number("peak", im.peak, Bound::nonnegative);
  a.number("lambda0", im.lambda0, Bound::positive);
  a.number("lambda_min", im.lambda_min, Bound::positive);
  a.number("lambda_max", im.lambda_max, Bound::positive);
  a.number("lambda_s", im.lambda_s, Bound::positive);
  a.choice("law", im.law, {std::pair{"constant", TimeLaw::constant}, {"pulse", TimeLaw::pulse}});
  a.number("t_bar", im.t_bar, Bound::positive);
  a.boolean("floor_at_zero", im.floor_at_zero);
  auto& co = c.activation.coupled;
  a.number("k_sigma", co.k_sigma, Bound::nonnegative);
  a.number("v_r", co.v_r);
  a.number("zeta0", co.zeta0, Bound::nonnegative);
  a.number("zeta_inf", co.zeta_inf, Bound::nonnegative);
  a.number("xi_v", co.xi_v, Bound::nonnegative);
  a.number("v_bar", co.v_bar);
  try {
    im.validate();
    co.validate();
  } catch (const ConfigError& e) {
    Node::fail("/activation", std::string("is inconsistent: ") + e.what());
  }

  const Node s = root.child("solver");
  s.allow({"steps", "end_time", "rho_inf", "damping_per_s", "weighting", "newton"});
  s.integer("steps", c.solver.steps, Bound::positive);
  s.number("end_time", c.solver.end_time, Bound::nonnegative);
  s.number("rho_inf", c.solver.rho_inf, Bound::nonnegative);
  if (c.solver.rho_inf > 1.0) Node::fail("/solver/rho_inf", "must lie in [0, 1]");
  double damping_per_s = 0.0;
  s.number("damping_per_s", damping_per_s, Bound::nonnegative);
  c.solver.damping = damping_per_s * 1e-3;
  s.choice("weighting", c.solver.weighting,
           {std::pair{"printed", ActivationWeighting::printed}, {"consistent", ActivationWeighting::consistent}});
  const Node nw = s.child("newton");
  nw.allow({"rel_tol", "abs_tol", "max_iterations"});
  nw.number("rel_tol", c.solver.newton.rel_tol, Bound::positive);
  nw.number("abs_tol", c.solver.newton.abs_tol, Bound::positive);
  nw.integer("max_iterations", c.solver.newton.max_iterations, Bound::positive);

  if (root.has("sweep")) {
    const Node w = root.child("sweep");
    w.allow({"parameter", "values"});
    SweepConfig sw;
    w.string("parameter", sw.parameter);
    if (sw.parameter != "peak" && sw.parameter != "substrate_um")
      Node::fail("/sweep/parameter", "must be \"peak\" or \"substrate_um\"");
    if (!w.has("values")) Node::fail("/sweep/values", "is required");
    w.vector("values", sw.values, sw.parameter == "peak" ? Bound::nonnegative : Bound::positive);
    c.sweep = std::move(sw);
  }

  const Node e = root.child("ep");
  e.allow({"mesh", "degrees", "dt", "substeps", "end_time", "cell", "stimuli", "corners"});
  e.int_array("mesh", c.ep.mesh, Bound::positive);
  e.int_array("degrees", c.ep.degrees, Bound::positive);
  if (c.ep.degrees[0] < 2 || c.ep.degrees[1] < 2) Node::fail("/ep/degrees", "must be at least 2 (second derivatives)");
  e.number("dt", c.ep.dt, Bound::positive);
  e.integer("substeps", c.ep.substeps, Bound::nonnegative);
  e.number("end_time", c.ep.end_time, Bound::nonnegative);
  detail::read_cell(e.child("cell"), c.ep.cell);
  e.choice("corners", c.ep.corners,
           {std::pair{"average", CornerTreatment::average}, {"first_edge", CornerTreatment::first_edge}});
  if (const auto* st = e.raw("stimuli")) {
    if (!st->is_array()) Node::fail("/ep/stimuli", "must be an array");
    for (std::size_t i = 0; i < st->size(); ++i)
      c.ep.protocol.events.push_back(detail::read_stimulus(Node(&(*st)[i], "/ep/stimuli/" + std::to_string(i))));
  }

  const Node o = root.child("outputs");
  o.allow({"directory", "points", "curvature_Y", "axis_samples", "quasi_static_trace", "vtk_every", "ep_snapshot_every"});
  o.string("directory", c.outputs.directory);
  o.number("curvature_Y", c.outputs.curvature_y, Bound::nonnegative);
  if (c.outputs.curvature_y > c.geometry.L2) Node::fail("/outputs/curvature_Y", "must lie inside the film");
  o.integer("axis_samples", c.outputs.axis_samples, Bound::positive);
  if (c.outputs.axis_samples < 2) Node::fail("/outputs/axis_samples", "must be at least 2");
  if (const auto* q = o.raw("quasi_static_trace"); q && q->is_array()) {
    o.vector("quasi_static_trace", c.outputs.quasi_static_peaks, Bound::nonnegative);
    c.outputs.quasi_static_trace = true;
  } else if (q && !q->is_boolean()) {
    Node::fail("/outputs/quasi_static_trace", "must be true, false or an array of peaks");
  } else {
    o.boolean("quasi_static_trace", c.outputs.quasi_static_trace);
  }
  o.integer("vtk_every", c.outputs.vtk_every, Bound::nonnegative);
  o.integer("ep_snapshot_every", c.outputs.ep_snapshot_every, Bound::nonnegative);
  if (const auto* pts = o.raw("points")) {
    if (!pts->is_array()) Node::fail("/outputs/points", "must be an array");
    for (std::size_t i = 0; i < pts->size(); ++i) {
      const Node p(&(*pts)[i], "/outputs/points/" + std::to_string(i));
      p.allow({"name", "X", "Y"});
      TrackedPoint tp;
      p.string("name", tp.name);
      if (tp.name.empty()) Node::fail(p.path("name"), "is required");
      p.number("X", tp.X, Bound::nonnegative);
      p.number("Y", tp.Y, Bound::nonnegative);
      if (tp.X > c.geometry.L1 || tp.Y > c.geometry.L2) Node::fail(p.path("X"), "point lies outside the film");
      c.outputs.points.push_back(std::move(tp));
    }
  }

  // scenario-specific requirements
  const bool coupled = c.activation.mode == ActivationMode::coupled;
  switch (c.kind) {
    case ScenarioKind::quasi_static:
      if (coupled) Node::fail("/activation/mode", "must be IM for quasi-static runs");
      if (im.law != TimeLaw::constant) Node::fail("/activation/law", "must be constant for quasi-static runs");
      break;
    case ScenarioKind::dynamic:
      if (coupled) Node::fail("/activation/mode", "must be IM for dynamic runs with imposed activation");
      if (!(c.solver.end_time > 0.0)) Node::fail("/solver/end_time", "must be positive for dynamic runs");
      break;
    case ScenarioKind::coupled:
      if (!coupled) Node::fail("/activation/mode", "must be CO for coupled runs");
      if (!(c.solver.end_time > 0.0)) Node::fail("/solver/end_time", "must be positive for coupled runs");
      if (c.sweep) Node::fail("/sweep", "is not supported for coupled runs");
      break;
    case ScenarioKind::ep:
      if (!(c.ep.end_time > 0.0)) Node::fail("/ep/end_time", "must be positive for EP runs");
      if (c.sweep) Node::fail("/sweep", "is not supported for EP runs");
      break;
  }
  if (c.sweep && c.sweep->parameter == "substrate_um" && c.kind != ScenarioKind::quasi_static)
    Node::fail("/sweep/parameter", "substrate sweeps are quasi-static only");
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// Coupling schedule of a coupled scenario: solver.steps mechanical steps over end_time,
/// each split into ep.substeps EP steps (or end_time / steps / ep.dt when substeps is 0).
inline CouplingSchedule coupling_schedule(const ScenarioConfig& c) {
  const double dt = c.solver.end_time / c.solver.steps;
  int k = c.ep.substeps;
  if (k == 0) {
    const double r = dt / c.ep.dt;
    k = static_cast<int>(std::lround(r));
    if (k < 1 || std::abs(k - r) > 1e-9 * r)
      throw ConfigError("config: /ep/dt must divide the mechanical step end_time / steps");
  }
  return CouplingSchedule{dt, k, c.solver.steps};
}

}  // namespace mtf::harness
