#pragma once

// One-way electromechanical coupling: active stress computed by the monodomain solver at its
// collocation points is interpolated onto the EP spline space and sampled at the shell
// quadrature points, with EP sub-cycling inside each mechanical step.

#include "mtf/dynamics.hpp"
#include "mtf/ep.hpp"

#include <json.hpp>

#include <fstream>
#include <memory>

namespace mtf {

// ---------------------------------------------------------------------------
// Schedule

/// Mechanical steps of length dt, each split into `substeps` EP steps.
struct CouplingSchedule {
  double dt = 5.0;     ///< ms
  int substeps = 250;  ///< k
  int steps = 400;     ///< number of mechanical steps

  [[nodiscard]] double dt_e() const { return dt / substeps; }
  /// Exchange instant t_i, formed from the integer index.
  [[nodiscard]] double time(int i) const { return static_cast<double>(i) * dt; }
  [[nodiscard]] double end() const { return time(steps); }
  [[nodiscard]] long ep_steps() const { return static_cast<long>(steps) * substeps; }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("coupling: mechanical step must be positive");
    if (substeps < 1) throw ConfigError("coupling: EP substep count must be at least 1");
    if (steps < 0) throw ConfigError("coupling: step count must be nonnegative");
  }

  /// Schedule over [0, T]; T must be an integer multiple of dt.
  static CouplingSchedule over(double T, double dt, int substeps) {
    if (!(dt > 0.0)) throw ConfigError("coupling: mechanical step must be positive");
    const double n = std::round(T / dt);
    if (!(n >= 0.0) || std::abs(n * dt - T) > 1e-9 * std::max(1.0, std::abs(T)))
      throw ConfigError("coupling: the end time must be an integer multiple of the mechanical step");
    CouplingSchedule s{dt, substeps, static_cast<int>(n)};
    s.validate();
    return s;
  }

  /// Schedule from total step counts of both solvers over [0, T].
  static CouplingSchedule from_counts(double T, int mechanical_steps, long ep_steps) {
    if (mechanical_steps < 1 || ep_steps < 1) throw ConfigError("coupling: step counts must be positive");
    if (ep_steps % mechanical_steps != 0)
      throw ConfigError("coupling: EP step count must be a multiple of the mechanical step count");
    CouplingSchedule s{T / mechanical_steps, static_cast<int>(ep_steps / mechanical_steps), mechanical_steps};
    s.validate();
    return s;
  }
};

// ---------------------------------------------------------------------------
// Projection and evaluation

/// Interpolation of collocation-point values onto the EP spline space. The factorization is
/// computed once and reused at every exchange.
class ActivationProjector {
 public:
  explicit ActivationProjector(const CollocationGrid& grid) : evaluation_(evaluation_matrix(grid)), interp_(evaluation_) {}

  [[nodiscard]] Vector project(const Vector& values) const {
    Vector c = interp_.coefficients(values);
    const double scale = std::max(values.cwiseAbs().maxCoeff(), 1.0);
    if ((evaluation_ * c - values).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw SolverError("activation projection: interpolation residual above tolerance");
    return c;
  }

  [[nodiscard]] const SparseMatrix& evaluation() const { return evaluation_; }

  static SparseMatrix evaluation_matrix(const CollocationGrid& g) {
    std::vector<Eigen::Triplet<double>> e;
    for (int j = 0; j < g.size(); ++j) {
      const Vec2& t = g.params[static_cast<std::size_t>(j)];
      const TensorBasis tb = tensor_basis(g.patch, t[0], t[1], 0);
      for (std::size_t q = 0; q < tb.size(); ++q) e.emplace_back(j, tb.index[q], tb.n[q]);
    }
    SparseMatrix m(g.size(), g.size());
    m.setFromTriplets(e.begin(), e.end());
    m.makeCompressed();
    return m;
  }

 private:
  SparseMatrix evaluation_;
  GrevilleInterpolator interp_;
};

/// Coefficients interpolating @p values at the collocation points of @p grid.
inline Vector project_activation(const CollocationGrid& grid, const Vector& values) {
  if (values.size() != grid.size()) throw DomainError("project_activation: one value per collocation point");
  return ActivationProjector(grid).project(values);
}

/// Maps parameters of one patch to another through normalized coordinates. Both patches
/// share the parametrization of the film up to an affine change of knot range.
inline Vec2 map_parameters(const BSplinePatch& from, const BSplinePatch& to, double t1, double t2) {
  const double s1 = (t1 - from.u.front()) / (from.u.back() - from.u.front());
  const double s2 = (t2 - from.v.front()) / (from.v.back() - from.v.front());
  return {std::clamp(to.u.front() + s1 * (to.u.back() - to.u.front()), to.u.front(), to.u.back()),
          std::clamp(to.v.front() + s2 * (to.v.back() - to.v.front()), to.v.front(), to.v.back())};
}

/// Active stress coefficients on the EP patch at two exchange instants.
struct ActivationField {
  std::shared_ptr<const BSplinePatch> patch;
  double t0 = 0.0, t1 = 0.0;
  Vector c0, c1;

  void validate() const {
    if (!patch) throw DomainError("activation field: no EP patch");
    if (!(t1 >= t0)) throw DomainError("activation field: exchange instants out of order");
    if (c0.size() != patch->size() || c1.size() != patch->size())
      throw DomainError("activation field: coefficient count does not match the EP basis");
  }

  /// Value for explicit temporal weights of the two instants.
  [[nodiscard]] double evaluate(double th1, double th2, double w0, double w1) const {
    validate();
    const TensorBasis tb = tensor_basis(*patch, th1, th2, 0);
    double a = 0.0, b = 0.0;
    for (std::size_t q = 0; q < tb.size(); ++q) {
      a += tb.n[q] * c0[tb.index[q]];
      b += tb.n[q] * c1[tb.index[q]];
    }
    return w0 * a + w1 * b;
  }

  /// Value at time t in [t0, t1], linear between the instants.
  [[nodiscard]] double evaluate(double th1, double th2, double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t1));
    if (t < t0 - tol || t > t1 + tol) throw DomainError("activation field: time outside the exchange interval");
    if (t1 == t0) return evaluate(th1, th2, 1.0, 0.0);
    const double s = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
    if (s == 0.0) return evaluate(th1, th2, 1.0, 0.0);
    return evaluate(th1, th2, 1.0 - s, s);
  }
};

/// Sparse map from EP coefficients to values at the shell quadrature points.
inline SparseMatrix quadrature_sampler(const ShellModel& model, const BSplinePatch& ep_patch) {
  std::vector<Eigen::Triplet<double>> e;
  const auto& qps = model.quad_points();
  for (std::size_t q = 0; q < qps.size(); ++q) {
    const Vec2 t = map_parameters(model.patch(), ep_patch, qps[q].t1, qps[q].t2);
    const TensorBasis tb = tensor_basis(ep_patch, t[0], t[1], 0);
    for (std::size_t l = 0; l < tb.size(); ++l) e.emplace_back(static_cast<int>(q), tb.index[l], tb.n[l]);
  }
  SparseMatrix s(static_cast<Eigen::Index>(qps.size()), ep_patch.size());
  s.setFromTriplets(e.begin(), e.end());
  s.makeCompressed();
  return s;
}

// ---------------------------------------------------------------------------
// Co-simulation

struct CoupledOptions {
  GeneralizedAlphaParams mechanics;  ///< dt is taken from the schedule
  NewtonOptions newton;
  bool run_mechanics = true;
};

/// State seen by the observer after exchange i (i = 0 before the first step).
struct CoupledSample {
  int step = 0;
  double time = 0.0;
  const EpState* ep = nullptr;
  const DynamicState* mechanics = nullptr;  ///< null when mechanics is disabled
  const Vector* sigma_hat = nullptr;        ///< projected active stress coefficients
};

struct CoupledRun {
  EpState ep;
  DynamicState mechanics;
  std::vector<NewtonReport> reports;
};

/// Per mechanical step: k EP substeps, projection of sigma_a at t_{i+1}, then one
/// generalized-alpha step with the activation interpolated between t_i and t_{i+1}.
inline CoupledRun co_simulate(const ShellModel& model, const MonodomainSolver& ep, const CouplingSchedule& schedule,
                              CoupledOptions options, const std::function<void(const CoupledSample&)>& observer = {},
                              std::optional<EpState> start = {}) {
  schedule.validate();
  if (std::abs(ep.options().dt - schedule.dt_e()) > 1e-12 * schedule.dt_e())
    throw ConfigError("coupling: EP time step must equal the mechanical step divided by the substep count");
  options.mechanics.dt = schedule.dt;
  options.mechanics.validate();

  const ActivationProjector projector(ep.grid());
  const SparseMatrix sampler = quadrature_sampler(model, ep.grid().patch);

  // sigma_a at the quadrature points for the two ends of the current interval
  struct Exchange {
    int i0 = 0;
    Vector q0, q1;
  };
  auto ex = std::make_shared<Exchange>();
  const double dt = schedule.dt;
  TimeActivation activation = [ex, dt](double t) -> ActivationFn {
    const double k = std::round(t / dt);
    if (std::abs(k * dt - t) > 1e-9 * dt) throw DomainError("coupling: activation requested off the exchange grid");
    const int i = static_cast<int>(k);
    const Vector* q = i == ex->i0 ? &ex->q0 : i == ex->i0 + 1 ? &ex->q1 : nullptr;
    if (!q) throw DomainError("coupling: activation requested outside the current interval");
    return [q](std::size_t qp, double) { return ActiveStress{(*q)[static_cast<Eigen::Index>(qp)], 0.0}; };
  };

  CoupledRun run;
  run.ep = start ? *start : ep.rest_state();
  if (run.ep.step != 0) throw InvalidStateError("coupling: EP state must start at step 0");
  Vector sigma_hat = projector.project(run.ep.sigma);
  ex->q0 = sampler * sigma_hat;
  ex->q1 = ex->q0;

  std::optional<GeneralizedAlpha> mech;
  if (options.run_mechanics) {
    if (!model.prescribed().empty())
      throw UnsupportedError("dynamic runs support homogeneous displacement constraints only");
    mech.emplace(options.mechanics, mass_matrix(model), model.fixed(), shell_force(model, activation), options.newton);
    run.mechanics = mech->rest_state();
    mech->initialize(run.mechanics);
  }
  const auto notify = [&](int i) {
    if (observer) observer({i, schedule.time(i), &run.ep, mech ? &run.mechanics : nullptr, &sigma_hat});
  };
  notify(0);

  for (int i = 0; i < schedule.steps; ++i) {
    for (int j = 0; j < schedule.substeps; ++j) ep.step(run.ep);
    sigma_hat = projector.project(run.ep.sigma);
    if (mech) {
      ex->i0 = i;
      ex->q1 = sampler * sigma_hat;
      run.reports.push_back(mech->step(run.mechanics));
      ex->q0 = std::move(ex->q1);
      ex->q1 = ex->q0;
    }
    notify(i + 1);
  }
  return run;
}

/// Reproducibility record of a coupled run: both meshes, the schedule and the solver settings.
inline nlohmann::json coupling_manifest(const ShellModel& model, const MonodomainSolver& ep,
                                        const CouplingSchedule& schedule, const CoupledOptions& options) {
  const auto mesh = [](const BSplinePatch& p) {
    return nlohmann::json{{"degrees", {p.u.degree(), p.v.degree()}},
                          {"spans", {p.u.spans().size(), p.v.spans().size()}},
                          {"control_points", {p.count1(), p.count2()}}};
  };
  return {{"mechanics_mesh", mesh(model.patch())},
          {"ep_mesh", mesh(ep.grid().patch)},
          {"substeps", schedule.substeps},
          {"dt", schedule.dt},
          {"dt_e", schedule.dt_e()},
          {"steps", schedule.steps},
          {"end_time", schedule.end()},
          {"rho_inf", options.mechanics.rho_inf},
          {"damping", options.mechanics.damping},
          {"newton", {{"rel_tol", options.newton.rel_tol},
                      {"abs_tol", options.newton.abs_tol},
                      {"max_iterations", options.newton.max_iterations}}},
          {"run_mechanics", options.run_mechanics}};
}

inline void write_coupling_manifest(const std::string& path, const nlohmann::json& manifest) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write manifest " + path);
  os << manifest.dump(2) << '\n';
}

}  // namespace mtf
