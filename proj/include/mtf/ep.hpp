#pragma once

// Monodomain electrophysiology on a spline surface: collocation at Greville points,
// Crank-Nicolson diffusion with Adams-Bashforth ionic currents, RK4 cell states.

#include "mtf/geometry.hpp"
#include "mtf/materials.hpp"

#include <fstream>
#include <iomanip>
#include <optional>
#include <tuple>

namespace mtf {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------------------
// Collocation grid

struct CollocationGrid {
  BSplinePatch patch;
  std::vector<double> greville1, greville2;
  std::vector<Vec2> params;       ///< parametric point per control index
  std::vector<Vec3> points;       ///< images on the surface
  std::vector<std::vector<int>> edges;  ///< edges containing each point (empty for interior points)

  [[nodiscard]] int size() const { return static_cast<int>(params.size()); }
  [[nodiscard]] bool is_boundary(int j) const { return !edges[static_cast<std::size_t>(j)].empty(); }

  [[nodiscard]] int interior_count() const {
    int n = 0;
    for (const auto& e : edges) n += e.empty() ? 1 : 0;
    return n;
  }
  [[nodiscard]] int boundary_count() const { return size() - interior_count(); }

  /// Parametric point mapped to [0, 1]^2.
  [[nodiscard]] Vec2 normalized(const Vec2& t) const {
    return {(t[0] - patch.u.front()) / (patch.u.back() - patch.u.front()),
            (t[1] - patch.v.front()) / (patch.v.back() - patch.v.front())};
  }
};

inline CollocationGrid make_collocation_grid(BSplinePatch patch) {
  CollocationGrid g;
  g.greville1 = greville_abscissae(patch.u);
  g.greville2 = greville_abscissae(patch.v);
  const int m1 = patch.count1(), m2 = patch.count2();
  if (m1 < 2 || m2 < 2) throw DomainError("collocation grid needs at least two points per direction");
  g.params.resize(static_cast<std::size_t>(patch.size()));
  g.points.resize(g.params.size());
  g.edges.resize(g.params.size());
  for (int j = 0; j < m2; ++j)
    for (int i = 0; i < m1; ++i) {
      const auto k = static_cast<std::size_t>(patch.index(i, j));
      g.params[k] = Vec2(g.greville1[static_cast<std::size_t>(i)], g.greville2[static_cast<std::size_t>(j)]);
      g.points[k] = eval_surface(patch, g.params[k][0], g.params[k][1], 0).value;
      if (i == 0) g.edges[k].push_back(0);
      if (i == m1 - 1) g.edges[k].push_back(1);
      if (j == 0) g.edges[k].push_back(2);
      if (j == m2 - 1) g.edges[k].push_back(3);
    }
  g.patch = std::move(patch);
  return g;
}

/// Copy of @p patch with control points moved by @p distance along the unit normal at their Greville images.
inline BSplinePatch offset_patch(const BSplinePatch& patch, double distance) {
  if (distance == 0.0) return patch;
  BSplinePatch out = patch;
  const auto g1 = greville_abscissae(patch.u), g2 = greville_abscissae(patch.v);
  for (int j = 0; j < patch.count2(); ++j)
    for (int i = 0; i < patch.count1(); ++i) {
      const auto f = frame_at(patch, g1[static_cast<std::size_t>(i)], g2[static_cast<std::size_t>(j)]);
      out.control[static_cast<std::size_t>(patch.index(i, j))] += distance * f.a3;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Collocation rows

/// Corner points belong to two edges: average both flux rows or use the theta1 edge only.
enum class CornerTreatment { average, first_edge };

/// Edges whose flux rows enter point j, with their weights.
inline std::vector<std::pair<int, double>> boundary_row_edges(const CollocationGrid& g, int j, CornerTreatment c) {
  const auto& e = g.edges[static_cast<std::size_t>(j)];
  if (e.size() == 1 || c == CornerTreatment::first_edge) return {{e.front(), 1.0}};
  return {{e[0], 0.5}, {e[1], 0.5}};
}

struct CollocationSystem {
  SparseMatrix mass;       ///< C_m N on interior rows
  SparseMatrix stiffness;  ///< D Laplace-Beltrami on interior rows
  SparseMatrix flux;       ///< D a^alpha . n N_{,alpha} on boundary rows
  SparseMatrix evaluation; ///< N at every collocation point
};

inline CollocationSystem build_collocation_system(const CollocationGrid& g, double diffusivity, double capacitance,
                                                  CornerTreatment corners = CornerTreatment::average) {
  using T = Eigen::Triplet<double>;
  std::vector<T> m, k, l, e;
  for (int j = 0; j < g.size(); ++j) {
    const Vec2& t = g.params[static_cast<std::size_t>(j)];
    const TensorBasis tb = tensor_basis(g.patch, t[0], t[1], 2);
    SurfaceFrame f;
    try {
      f = frame_at(g.patch, t[0], t[1]);
    } catch (const SingularGeometryError& err) {
      throw SingularGeometryError(std::string(err.what()) + " at collocation point " + std::to_string(j));
    }
    for (std::size_t q = 0; q < tb.size(); ++q) e.emplace_back(j, tb.index[q], tb.n[q]);
    if (!g.is_boundary(j)) {
      const auto row = laplace_beltrami_row(f, tb);
      for (std::size_t q = 0; q < tb.size(); ++q) {
        m.emplace_back(j, tb.index[q], capacitance * tb.n[q]);
        k.emplace_back(j, tb.index[q], diffusivity * row[q]);
      }
    } else {
      for (const auto& [edge, w] : boundary_row_edges(g, j, corners)) {
        const auto row = normal_flux_row(f, tb, edge_normal(f, edge), diffusivity);
        for (std::size_t q = 0; q < tb.size(); ++q) l.emplace_back(j, tb.index[q], w * row[q]);
      }
    }
  }
  const int n = g.size();
  CollocationSystem s;
  for (auto [mat, trip] : {std::pair{&s.mass, &m}, {&s.stiffness, &k}, {&s.flux, &l}, {&s.evaluation, &e}}) {
    mat->resize(n, n);
    mat->setFromTriplets(trip->begin(), trip->end());
    mat->makeCompressed();
  }
  return s;
}

/// Factorized interpolation at the collocation points: N(xi_j) c = values_j.
class GrevilleInterpolator {
 public:
  explicit GrevilleInterpolator(const SparseMatrix& evaluation) : evaluation_(evaluation) {
    lu_.compute(evaluation_);
    if (lu_.info() != Eigen::Success) throw SolverError("singular collocation interpolation matrix");
  }

  [[nodiscard]] Vector coefficients(const Vector& values) const {
    if (values.size() != evaluation_.rows()) throw DomainError("interpolation: one value per collocation point");
    Vector c = lu_.solve(values);
    if (!c.allFinite()) throw SolverError("interpolation produced non-finite coefficients");
    return c;
  }

  [[nodiscard]] Vector values(const Vector& coefficients) const { return evaluation_ * coefficients; }

 private:
  SparseMatrix evaluation_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

/// Coefficients matching `values` at interior points with zero normal flux on the boundary rows.
/// Plain interpolation leaves an O(h^p) flux residual that the first implicit step removes as a
/// jump, which costs one order of temporal accuracy.
inline Vector zero_flux_coefficients(const CollocationSystem& s, const Vector& values) {
  if (values.size() != s.mass.rows()) throw DomainError("zero_flux_coefficients: one value per collocation point");
  const SparseMatrix a = s.mass + s.flux;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu(a);
  if (lu.info() != Eigen::Success) throw SolverError("singular zero-flux projection matrix");
  Vector c = lu.solve(s.mass * GrevilleInterpolator(s.evaluation).coefficients(values));
  if (!c.allFinite()) throw SolverError("zero-flux projection produced non-finite coefficients");
  return c;
}

// ---------------------------------------------------------------------------
// Stimuli

enum class StimulusKind { interior, boundary };

struct StimulusEvent {
  StimulusKind kind = StimulusKind::interior;
  int edge = -1;  ///< boundary events only
  /// Region in normalized parametric coordinates; boundary events use the range along the edge.
  double s0 = 0.0, s1 = 1.0, r0 = 0.0, r1 = 1.0;
  double amplitude = 0.0;  ///< interior: current per area; boundary: current per length
  double start = 0.0, duration = 0.0;  ///< ms

  /// Half-open window [start, start + duration) with a rounding allowance on both ends.
  [[nodiscard]] bool active(double t) const {
    const double eps = 1e-9 * std::max(1.0, std::abs(start) + duration);
    return t >= start - eps && t < start + duration - eps;
  }
};

struct StimulusProtocol {
  std::vector<StimulusEvent> events;

  void validate() const {
    for (const auto& e : events) {
      if (!(e.duration > 0.0)) throw ConfigError("stimulus duration must be positive");
      if (!(e.start >= 0.0)) throw ConfigError("stimulus start must be nonnegative");
      if (e.kind == StimulusKind::boundary && (e.edge < 0 || e.edge > 3))
        throw ConfigError("boundary stimulus needs an edge id in 0..3");
      if (!(e.s0 <= e.s1 && e.r0 <= e.r1)) throw ConfigError("stimulus region bounds are reversed");
    }
  }

  /// Applied current at normalized parametric point x.
  [[nodiscard]] double applied(const Vec2& x, double t) const {
    double a = 0.0;
    for (const auto& e : events)
      if (e.kind == StimulusKind::interior && e.active(t) && inside(x[0], e.s0, e.s1) && inside(x[1], e.r0, e.r1))
        a += e.amplitude;
    return a;
  }

  /// Boundary flux on @p edge at normalized position s along it.
  [[nodiscard]] double flux(int edge, double s, double t) const {
    double a = 0.0;
    for (const auto& e : events)
      if (e.kind == StimulusKind::boundary && e.edge == edge && e.active(t) && inside(s, e.s0, e.s1))
        a += e.amplitude;
    return a;
  }

  [[nodiscard]] double last_end() const {
    double t = 0.0;
    for (const auto& e : events) t = std::max(t, e.start + e.duration);
    return t;
  }

 private:
  static bool inside(double x, double a, double b) { return x >= a - 1e-12 && x <= b + 1e-12; }
};

// ---------------------------------------------------------------------------
// Monodomain solver

/// History term of the right-hand side: M v_i (default) or the raw coefficients v_i.
enum class HistoryForm { mass_weighted, literal };

/// Ionic current and recovery rate as functions of (v, w); empty means Aliev-Panfilov.
using IonicFn = std::function<IonicRates(double v, double w)>;

struct MonodomainOptions {
  double dt = 0.02;  ///< ms
  CornerTreatment corners = CornerTreatment::average;
  HistoryForm history = HistoryForm::mass_weighted;
  IonicFn ionic;
};

struct EpState {
  Vector v_hat;      ///< potential coefficients (mV)
  Vector v;          ///< potential at the collocation points
  Vector w, sigma;   ///< cell states per collocation point
  Vector ion_prev;   ///< ionic current of the previous step (interior points)
  bool first = true;
  long step = 0;
};

/// One RK4 step of (w, sigma) with v varying linearly from v0 to v1 over dt.
inline std::pair<double, double> advance_cell_states(double w, double sigma, double v0, double v1, double dt,
                                                     const IonicFn& ionic, const AlievPanfilovParams& cell,
                                                     const CoupledActivationParams& act) {
  auto rates = [&](double s, double wv, double sv) {
    const double v = v0 + s * (v1 - v0);
    const double dw = ionic ? ionic(v, wv).dwdt : aliev_panfilov_rhs(v, wv, cell).dwdt;
    return std::pair{dw, coupled_activation_rate(sv, v, act)};
  };
  const auto k1 = rates(0.0, w, sigma);
  const auto k2 = rates(0.5, w + 0.5 * dt * k1.first, sigma + 0.5 * dt * k1.second);
  const auto k3 = rates(0.5, w + 0.5 * dt * k2.first, sigma + 0.5 * dt * k2.second);
  const auto k4 = rates(1.0, w + dt * k3.first, sigma + dt * k3.second);
  return {w + dt / 6.0 * (k1.first + 2.0 * k2.first + 2.0 * k3.first + k4.first),
          sigma + dt / 6.0 * (k1.second + 2.0 * k2.second + 2.0 * k3.second + k4.second)};
}

class MonodomainSolver {
 public:
  MonodomainSolver(CollocationGrid grid, AlievPanfilovParams cell, CoupledActivationParams activation,
                   StimulusProtocol protocol, MonodomainOptions options)
      : grid_(std::move(grid)), cell_(cell), act_(activation), protocol_(std::move(protocol)),
        options_(std::move(options)) {
    cell_.validate();
    act_.validate();
    protocol_.validate();
    if (!(options_.dt > 0.0)) throw ConfigError("EP time step must be positive");
    system_ = build_collocation_system(grid_, cell_.D, cell_.C_m, options_.corners);
    const SparseMatrix a = SparseMatrix(system_.mass - (0.5 * options_.dt) * system_.stiffness) + system_.flux;
    lu_.compute(a);
    if (lu_.info() != Eigen::Success) throw SolverError("singular EP system matrix");
    interior_.reserve(static_cast<std::size_t>(grid_.size()));
    for (int j = 0; j < grid_.size(); ++j)
      if (!grid_.is_boundary(j)) interior_.push_back(j);
  }

  [[nodiscard]] const CollocationGrid& grid() const { return grid_; }
  [[nodiscard]] const CollocationSystem& system() const { return system_; }
  [[nodiscard]] const MonodomainOptions& options() const { return options_; }
  [[nodiscard]] const AlievPanfilovParams& cell() const { return cell_; }
  [[nodiscard]] double time(long step) const { return static_cast<double>(step) * options_.dt; }

  [[nodiscard]] EpState rest_state() const {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    EpState s;
    s.v_hat = Vector::Constant(n, cell_.v0);
    s.v = system_.evaluation * s.v_hat;
    s.w = Vector::Constant(n, cell_.w0);
    s.sigma = Vector::Constant(n, cell_.sigma0);
    s.ion_prev = Vector::Zero(n);
    return s;
  }

  [[nodiscard]] double ionic_current(double v, double w) const {
    return options_.ionic ? options_.ionic(v, w).current : aliev_panfilov_rhs(v, w, cell_).current;
  }

  void step(EpState& s) const {
    const double dt = options_.dt;
    const double t0 = time(s.step), t1 = time(s.step + 1);
    const auto n = static_cast<Eigen::Index>(grid_.size());
    Vector ion = Vector::Zero(n);
    for (int j : interior_) ion[j] = ionic_current(s.v[j], s.w[j]);

    Vector b = options_.history == HistoryForm::mass_weighted ? Vector(system_.mass * s.v_hat) : s.v_hat;
    b += (0.5 * dt) * (system_.stiffness * s.v_hat);
    for (int j : interior_) {
      const Vec2 x = grid_.normalized(grid_.params[static_cast<std::size_t>(j)]);
      b[j] += 0.5 * dt * (protocol_.applied(x, t1) + protocol_.applied(x, t0));
      b[j] -= s.first ? dt * ion[j] : dt * (1.5 * ion[j] - 0.5 * s.ion_prev[j]);
    }
    for (int j = 0; j < grid_.size(); ++j)
      if (grid_.is_boundary(j)) b[j] += boundary_flux(j, t1);

    Vector v_hat = lu_.solve(b);
    if (!v_hat.allFinite()) throw SolverError("EP step " + std::to_string(s.step) + " produced non-finite values");
    Vector v = system_.evaluation * v_hat;
    // thread start-up costs more than the cell update on small grids
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t j) {
          const auto k = static_cast<Eigen::Index>(j);
          std::tie(s.w[k], s.sigma[k]) =
              advance_cell_states(s.w[k], s.sigma[k], s.v[k], v[k], dt, options_.ionic, cell_, act_);
        },
        n >= 16384 ? 0 : 1);
    s.v_hat = std::move(v_hat);
    s.v = std::move(v);
    s.ion_prev = std::move(ion);
    s.first = false;
    ++s.step;
  }

  /// Flux data of boundary row j at time t.
  [[nodiscard]] double boundary_flux(int j, double t) const {
    double f = 0.0;
    const Vec2 x = grid_.normalized(grid_.params[static_cast<std::size_t>(j)]);
    for (const auto& [edge, w] : boundary_row_edges(grid_, j, options_.corners))
      f += w * protocol_.flux(edge, edge < 2 ? x[1] : x[0], t);
    return f;
  }

 private:
  CollocationGrid grid_;
  AlievPanfilovParams cell_;
  CoupledActivationParams act_;
  StimulusProtocol protocol_;
  MonodomainOptions options_;
  CollocationSystem system_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  std::vector<int> interior_;
};

/// Runs @p steps steps; the observer sees the initial state and every step.
inline void run_protocol(const MonodomainSolver& solver, EpState& state, long steps,
                         const std::function<void(const EpState&)>& observer = {}) {
  if (observer) observer(state);
  for (long k = 0; k < steps; ++k) {
    solver.step(state);
    if (observer) observer(state);
  }
}

/// Collocation-point snapshot: x, y, z, v, w, sigma_a.
inline void write_snapshot_csv(const std::string& path, const CollocationGrid& g, const EpState& s) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "x,y,z,v,w,sigma_a\n" << std::setprecision(17);
  for (int j = 0; j < g.size(); ++j) {
    const Vec3& p = g.points[static_cast<std::size_t>(j)];
    os << p.x() << ',' << p.y() << ',' << p.z() << ',' << s.v[j] << ',' << s.w[j] << ',' << s.sigma[j] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Single cell

struct CellState {
  double v = -80.0, w = 0.0, sigma = 0.0;
  double ion_prev = 0.0;
  bool first = true;
  long step = 0;
};

/// Space-free version of the monodomain step: the same AB2 current, trapezoidal
/// applied current and RK4 for (w, sigma).
class SingleCell {
 public:
  SingleCell(AlievPanfilovParams cell, CoupledActivationParams activation, StimulusProtocol protocol, double dt)
      : cell_(cell), act_(activation), protocol_(std::move(protocol)), dt_(dt) {
    cell_.validate();
    act_.validate();
    protocol_.validate();
    if (!(dt_ > 0.0)) throw ConfigError("cell time step must be positive");
  }

  [[nodiscard]] CellState rest_state() const { return {cell_.v0, cell_.w0, cell_.sigma0, 0.0, true, 0}; }
  [[nodiscard]] double time(long step) const { return static_cast<double>(step) * dt_; }

  void step(CellState& s) const {
    const double t0 = time(s.step), t1 = time(s.step + 1);
    const Vec2 any(0.5, 0.5);
    const double ion = aliev_panfilov_rhs(s.v, s.w, cell_).current;
    const double ab = s.first ? ion : 1.5 * ion - 0.5 * s.ion_prev;
    const double v1 =
        s.v + (0.5 * dt_ * (protocol_.applied(any, t1) + protocol_.applied(any, t0)) - dt_ * ab) / cell_.C_m;
    std::tie(s.w, s.sigma) = advance_cell_states(s.w, s.sigma, s.v, v1, dt_, {}, cell_, act_);
    s.v = v1;
    s.ion_prev = ion;
    s.first = false;
    ++s.step;
  }

 private:
  AlievPanfilovParams cell_;
  CoupledActivationParams act_;
  StimulusProtocol protocol_;
  double dt_;
};

}  // namespace mtf
