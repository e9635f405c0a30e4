#pragma once

// Verification benchmarks: Scordelis-Lo roof, nonlinear tensile test, Poisson convergence on
// a distorted patch, and the single-cell action potential.

#include "mtf/ep.hpp"
#include "mtf/harness/io.hpp"
#include "mtf/shell.hpp"

#include <json.hpp>

#include <fstream>

namespace mtf::harness {

/// One named check of a verification suite.
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  nlohmann::json data = nlohmann::json::object();

  [[nodiscard]] bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }

  void add(std::string name, bool ok, std::string detail) { checks.push_back({std::move(name), ok, std::move(detail)}); }

  void append(const VerifyReport& other, const std::string& key) {
    checks.insert(checks.end(), other.checks.begin(), other.checks.end());
    data[key] = other.data;
  }
};

/// Observed orders log2(e_{k-1} / e_k) between successive halvings.
inline std::vector<double> observed_orders(const std::vector<double>& errors) {
  std::vector<double> out;
  for (std::size_t i = 1; i < errors.size(); ++i) out.push_back(std::log2(errors[i - 1] / errors[i]));
  return out;
}

/// Asymptotic order r from the three finest levels, fitting log e = a + r log h + b h.
/// The b h term absorbs the leading pre-asymptotic correction.
inline double asymptotic_order(const std::vector<int>& spans, const std::vector<double>& errors) {
  const std::size_t n = errors.size();
  if (n < 3 || spans.size() != n) throw DomainError("asymptotic_order: need three levels");
  Eigen::Matrix3d a;
  Eigen::Vector3d y;
  for (int k = 0; k < 3; ++k) {
    const double h = 1.0 / spans[n - 3 + static_cast<std::size_t>(k)];
    a.row(k) << 1.0, std::log(h), h;
    y[k] = std::log(errors[n - 3 + static_cast<std::size_t>(k)]);
  }
  return a.partialPivLu().solve(y)[1];
}

inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

inline bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Scordelis-Lo roof

struct ScordelisLoReference {
  double value = 0.0;
  std::string note;
};

inline std::string default_data_dir() {
#ifdef MTF_SOURCE_DIR
  return std::string(MTF_SOURCE_DIR) + "/data";
#else
  return "data";
#endif
}

inline ScordelisLoReference load_scordelis_lo_reference(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read reference data " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.contains("value") || !j["value"].is_number()) throw ConfigError(path + ": missing numeric 'value'");
  return {j["value"].get<double>(), j.value("note", std::string{})};
}

/// Cylindrical roof: radius 25, length 50, 80 degree opening, thickness 0.25, E = 4.32e8,
/// nu = 0, self weight 90 per unit area along -Y, rigid diaphragms at both curved ends.
/// The arc is represented by Greville interpolation of the exact cylinder at each mesh.
inline ShellModel scordelis_lo_model(int degree, int spans) {
  constexpr double radius = 25.0, length = 50.0, half_angle = 40.0 * std::numbers::pi / 180.0;
  const KnotVector ku = KnotVector::open_uniform(degree, spans), kv = KnotVector::open_uniform(degree, spans);
  auto net = interpolate_greville<Vec3>(ku, kv, [&](double s, double t) {
    const double phi = half_angle * (2.0 * s - 1.0);
    return Vec3(radius * std::sin(phi), radius * std::cos(phi), length * t);
  });
  LayerStack stack;
  stack.layers.push_back({0.25, SaintVenantKirchhoff{4.32e8, 0.0}, 0.0, false});
  ShellModel m(BSplinePatch(ku, kv, std::move(net)), stack);
  m.set_area_load(Vec3(0.0, -90.0, 0.0));
  m.fix_edge(2, {true, true, false});
  m.fix_edge(3, {true, true, false});
  // pins the axial rigid translation; the load has no axial component
  m.fix_dof(2);
  return m;
}

/// |u_Y| at the midpoint of the straight free edge.
inline double scordelis_lo_displacement(int degree, int spans) {
  const ShellModel m = scordelis_lo_model(degree, spans);
  const Vector u = solve_linear(m);
  return std::abs(displacement_at(m, u, 1.0, 0.5)[1]);
}

inline VerifyReport verify_scordelis_lo(const std::vector<int>& degrees = {2, 3, 4},
                                        const std::vector<int>& spans = {4, 8, 16, 32},
                                        const std::string& reference_path = default_data_dir() +
                                                                            "/scordelis_lo_reference.json") {
  const ScordelisLoReference ref = load_scordelis_lo_reference(reference_path);
  VerifyReport r;
  for (int p : degrees) {
    std::vector<double> values;
    for (int n : spans) values.push_back(scordelis_lo_displacement(p, n));
    std::vector<double> gaps;
    for (double v : values) gaps.push_back(std::abs(v - ref.value));
    const double rel = gaps.back() / ref.value;
    r.data["p" + std::to_string(p)] = {{"spans", spans}, {"displacement", values}};
    std::string trace;
    for (double v : values) trace += fmt(v) + " ";
    r.add("scordelis-lo p=" + std::to_string(p) + " monotone", strictly_decreasing(gaps), "values " + trace);
    r.add("scordelis-lo p=" + std::to_string(p) + " finest within 0.5%", rel < 5e-3,
          "relative gap " + fmt(rel) + " to reference " + fmt(ref.value));
  }
  r.data["reference"] = ref.value;
  return r;
}

// ---------------------------------------------------------------------------
// Nonlinear tensile test

struct TensileResult {
  double stretch = 1.0;
  double axial_stress = 0.0, axial_exact = 0.0;
  double thickness = 0.0, thickness_exact = 0.0;
  double spurious = 0.0;  ///< largest stress component that must vanish
};

/// Unit square sheet of incompressible Neo-Hookean material (2 x 2 quadratic elements)
/// stretched to @p stretch along X with free lateral edges. Plane-stress uniaxial solution:
/// lambda_2 = lambda_3 = lambda^{-1/2}, sigma_11 = mu (lambda^2 - 1/lambda).
inline TensileResult tensile_test(double stretch = 2.0, int steps = 10, double mu = 500.0, double thickness = 0.1) {
  LayerStack stack;
  stack.layers.push_back({thickness, NeoHookean{mu, std::nullopt}, 0.0, false});
  ShellModel m(rectangle_patch(1.0, 1.0, 2, 2, 2, 2), stack);
  m.fix_edge(0, {true, false, false});
  m.fix_edge(0, {false, false, true}, 2);
  m.fix_point(0, {false, true, false});
  m.prescribe_edge(1, 0, stretch - 1.0);
  for (int p = 0; p < m.patch().size(); ++p) m.fix_point(p, {false, false, true});
  NewtonOptions opt;
  opt.rel_tol = 1e-13;
  opt.abs_tol = 1e-13;
  const auto qs = solve_quasi_static(m, steps, {}, opt);
  const PointStress s = stress_at(m, qs.displacements.back(), 0.5, 0.5, 0.0);
  TensileResult r;
  r.stretch = stretch;
  r.axial_stress = s.cauchy(0, 0);
  r.axial_exact = mu * (stretch * stretch - 1.0 / stretch);
  r.thickness = thickness * s.thickness_stretch;
  r.thickness_exact = thickness / std::sqrt(stretch);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != 0 || j != 0) r.spurious = std::max(r.spurious, std::abs(s.cauchy(i, j)));
  return r;
}

inline VerifyReport verify_tensile() {
  VerifyReport r;
  const TensileResult t = tensile_test();
  const double es = std::abs(t.axial_stress - t.axial_exact) / t.axial_exact;
  const double et = std::abs(t.thickness - t.thickness_exact) / t.thickness_exact;
  r.add("tensile axial stress", es < 1e-6, "relative error " + fmt(es));
  r.add("tensile thickness", et < 1e-6, "relative error " + fmt(et));
  r.add("tensile spurious stress", t.spurious < 1e-8, "max " + fmt(t.spurious) + " kPa");
  r.data = {{"stretch", t.stretch},          {"axial_stress", t.axial_stress}, {"axial_exact", t.axial_exact},
            {"thickness", t.thickness},      {"thickness_exact", t.thickness_exact},
            {"spurious", t.spurious}};
  return r;
}

// ---------------------------------------------------------------------------
// Poisson problem on the distorted bi-quadratic patch

/// Single bi-quadratic knot span with a displaced central control point.
inline BSplinePatch distorted_square_patch() {
  KnotVector k({0, 0, 0, 1, 1, 1}, 2);
  return {k, k,
          {{0.3, 0.3, 0}, {0.8, 0.3, 0}, {1.3, 0.3, 0}, {0.3, 0.8, 0}, {0.9, 0.9, 0}, {1.3, 0.8, 0}, {0.3, 1.3, 0},
           {0.8, 1.3, 0}, {1.3, 1.3, 0}}};
}

/// Manufactured solution sin(pi x) sin(pi y) with gradient and Laplacian.
struct PoissonExact {
  [[nodiscard]] double value(const Vec3& x) const {
    return std::sin(std::numbers::pi * x.x()) * std::sin(std::numbers::pi * x.y());
  }
  [[nodiscard]] Vec3 gradient(const Vec3& x) const {
    const double pi = std::numbers::pi;
    return {pi * std::cos(pi * x.x()) * std::sin(pi * x.y()), pi * std::sin(pi * x.x()) * std::cos(pi * x.y()), 0.0};
  }
  [[nodiscard]] double laplacian(const Vec3& x) const { return -2.0 * std::numbers::pi * std::numbers::pi * value(x); }
};

/// Coefficients on the theta1-min edge interpolating the exact solution at the edge Greville points.
inline Eigen::VectorXd poisson_dirichlet_edge(const BSplinePatch& patch, const PoissonExact& exact = {}) {
  const auto gv = greville_abscissae(patch.v);
  Eigen::VectorXd edge_values(patch.count2());
  for (int j = 0; j < patch.count2(); ++j)
    edge_values[j] = exact.value(eval_surface(patch, patch.u.front(), gv[static_cast<std::size_t>(j)], 0).value);
  const Eigen::MatrixXd a_edge = Eigen::MatrixXd(collocation_matrix(patch.v, gv));
  return a_edge.partialPivLu().solve(edge_values);
}

/// Collocation solve of Laplace v = q: Dirichlet data on the theta1-min edge imposed on the
/// edge coefficients by univariate Greville interpolation, Neumann data on the other edges.
inline Vector solve_poisson(const BSplinePatch& patch, const PoissonExact& exact = {}) {
  const CollocationGrid g = make_collocation_grid(patch);
  const CollocationSystem s = build_collocation_system(g, 1.0, 1.0);
  const int m1 = patch.count1();
  const Eigen::VectorXd dirichlet = poisson_dirichlet_edge(patch, exact);

  std::vector<Eigen::Triplet<double>> trip;
  Vector rhs = Vector::Zero(g.size());
  const SparseMatrix rows = SparseMatrix(s.stiffness) + s.flux;
  for (int j = 0; j < g.size(); ++j) {
    const auto& edges = g.edges[static_cast<std::size_t>(j)];
    const bool dirichlet_row = std::find(edges.begin(), edges.end(), 0) != edges.end();
    if (dirichlet_row) {
      trip.emplace_back(j, j, 1.0);
      rhs[j] = dirichlet[j / m1];
      continue;
    }
    const Vec3& x = g.points[static_cast<std::size_t>(j)];
    if (!g.is_boundary(j)) {
      rhs[j] = exact.laplacian(x);
    } else {
      const Vec2& t = g.params[static_cast<std::size_t>(j)];
      const SurfaceFrame f = frame_at(patch, t[0], t[1]);
      for (const auto& [edge, w] : boundary_row_edges(g, j, CornerTreatment::average))
        rhs[j] += w * exact.gradient(x).dot(edge_normal(f, edge));
    }
  }
  // copy the non-Dirichlet rows of the collocation operator
  const Eigen::SparseMatrix<double, Eigen::RowMajor> rm(rows);
  for (int j = 0; j < g.size(); ++j) {
    const auto& edges = g.edges[static_cast<std::size_t>(j)];
    if (std::find(edges.begin(), edges.end(), 0) != edges.end()) continue;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rm, j); it; ++it)
      trip.emplace_back(j, static_cast<int>(it.col()), it.value());
  }
  SparseMatrix a(g.size(), g.size());
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu(a);
  if (lu.info() != Eigen::Success) throw SolverError("singular Poisson collocation matrix");
  Vector c = lu.solve(rhs);
  if (!c.allFinite()) throw SolverError("Poisson solve produced non-finite coefficients");
  return c;
}

/// Relative L2 error sqrt(int (v - v_a)^2 / int v_a^2) by Gauss quadrature per knot span.
inline double poisson_error(const BSplinePatch& patch, const Vector& c, const PoissonExact& exact = {},
                            int points = 0) {
  const int n1 = points > 0 ? points : patch.u.degree() + 3;
  const int n2 = points > 0 ? points : patch.v.degree() + 3;
  const QuadratureRule r1 = gauss_legendre(n1), r2 = gauss_legendre(n2);
  double num = 0.0, den = 0.0;
  const std::span<const double> coeffs(c.data(), static_cast<std::size_t>(c.size()));
  for (const auto& [a0, a1] : patch.u.spans())
    for (const auto& [b0, b1] : patch.v.spans())
      for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
          const double t1 = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * r1.points[i];
          const double t2 = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * r2.points[j];
          const SurfacePoint sp = eval_surface(patch, t1, t2, 1);
          const double da = sp.d1.cross(sp.d2).norm() * 0.25 * (a1 - a0) * (b1 - b0) * r1.weights[i] * r2.weights[j];
          const double va = exact.value(sp.value);
          const double v = eval_field<double>(patch.u, patch.v, coeffs, t1, t2, 0).value;
          num += da * (v - va) * (v - va);
          den += da * va * va;
        }
  return std::sqrt(num / den);
}

/// L2 projection of the exact solution onto the spline space; returns the coefficients and
/// the relative error from the projection identity ||v - Pv||^2 = ||v||^2 - (Pv, v).
inline std::pair<Vector, double> poisson_l2_fit(const BSplinePatch& patch, const PoissonExact& exact = {}) {
  const int n1 = patch.u.degree() + 3, n2 = patch.v.degree() + 3;
  const QuadratureRule r1 = gauss_legendre(n1), r2 = gauss_legendre(n2);
  const int n = patch.size();
  std::vector<Eigen::Triplet<double>> trip;
  Vector b = Vector::Zero(n);
  double norm2 = 0.0;
  for (const auto& [a0, a1] : patch.u.spans())
    for (const auto& [b0, b1] : patch.v.spans())
      for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
          const double t1 = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * r1.points[i];
          const double t2 = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * r2.points[j];
          const SurfacePoint sp = eval_surface(patch, t1, t2, 1);
          const double da = sp.d1.cross(sp.d2).norm() * 0.25 * (a1 - a0) * (b1 - b0) * r1.weights[i] * r2.weights[j];
          const TensorBasis tb = tensor_basis(patch, t1, t2, 0);
          const double va = exact.value(sp.value);
          norm2 += da * va * va;
          for (std::size_t k = 0; k < tb.size(); ++k) {
            b[tb.index[k]] += da * tb.n[k] * va;
            for (std::size_t l = 0; l < tb.size(); ++l) trip.emplace_back(tb.index[k], tb.index[l], da * tb.n[k] * tb.n[l]);
          }
        }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(m);
  const Vector c = ldlt.solve(b);
  return {c, std::sqrt(std::max(0.0, norm2 - b.dot(c)) / norm2)};
}

/// Galerkin solve of the same boundary-value problem in the same spline space: the weak form
/// int grad(phi).grad(v) = -int phi q + int_{Neumann edges} phi dv/dn, with the edge coefficients of
/// solve_poisson on theta1-min. Independent oracle for the collocation rates.
inline Vector solve_poisson_galerkin(const BSplinePatch& patch, const PoissonExact& exact = {}) {
  const int n = patch.size();
  const int q1 = patch.u.degree() + 2, q2 = patch.v.degree() + 2;
  const QuadratureRule r1 = gauss_legendre(q1), r2 = gauss_legendre(q2);
  std::vector<Eigen::Triplet<double>> trip;
  Vector b = Vector::Zero(n);
  for (const auto& [a0, a1] : patch.u.spans())
    for (const auto& [b0, b1] : patch.v.spans())
      for (int i = 0; i < q1; ++i)
        for (int j = 0; j < q2; ++j) {
          const double t1 = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * r1.points[i];
          const double t2 = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * r2.points[j];
          const SurfaceFrame f = frame_at(patch, t1, t2);
          const double da = f.jacobian * 0.25 * (a1 - a0) * (b1 - b0) * r1.weights[i] * r2.weights[j];
          const TensorBasis tb = tensor_basis(patch, t1, t2, 1);
          std::vector<Vec3> grad(tb.size());
          for (std::size_t k = 0; k < tb.size(); ++k) grad[k] = tb.n1[k] * f.a_contra[0] + tb.n2[k] * f.a_contra[1];
          const double q = exact.laplacian(f.r);
          for (std::size_t k = 0; k < tb.size(); ++k) {
            b[tb.index[k]] -= da * tb.n[k] * q;
            for (std::size_t l = 0; l < tb.size(); ++l) trip.emplace_back(tb.index[k], tb.index[l], da * grad[k].dot(grad[l]));
          }
        }
  // Neumann edges 1 (theta1-max), 2 (theta2-min), 3 (theta2-max)
  for (int edge = 1; edge < 4; ++edge) {
    const int along = edge < 2 ? 1 : 0;
    const KnotVector& kv = patch.knots(along);
    const double fixed = edge == 1 ? patch.u.back() : (edge == 2 ? patch.v.front() : patch.v.back());
    const QuadratureRule r = along == 0 ? r1 : r2;
    for (const auto& [a0, a1] : kv.spans())
      for (std::size_t i = 0; i < r.points.size(); ++i) {
        const double t = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * r.points[i];
        const double t1 = along == 0 ? t : fixed, t2 = along == 0 ? fixed : t;
        const SurfaceFrame f = frame_at(patch, t1, t2);
        const double ds = f.a[static_cast<std::size_t>(along)].norm() * 0.5 * (a1 - a0) * r.weights[i];
        const double flux = exact.gradient(f.r).dot(edge_normal(f, edge));
        const TensorBasis tb = tensor_basis(patch, t1, t2, 0);
        for (std::size_t k = 0; k < tb.size(); ++k) b[tb.index[k]] += ds * tb.n[k] * flux;
      }
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  // eliminate the Dirichlet coefficients symmetrically
  const Eigen::VectorXd dirichlet = poisson_dirichlet_edge(patch, exact);
  Vector known = Vector::Zero(n);
  std::vector<bool> fixed(static_cast<std::size_t>(n), false);
  for (int j = 0; j < patch.count2(); ++j) {
    known[patch.index(0, j)] = dirichlet[j];
    fixed[static_cast<std::size_t>(patch.index(0, j))] = true;
  }
  b -= k * known;
  std::vector<int> free_map(static_cast<std::size_t>(n), -1);
  int nf = 0;
  for (int a = 0; a < n; ++a)
    if (!fixed[static_cast<std::size_t>(a)]) free_map[static_cast<std::size_t>(a)] = nf++;
  std::vector<Eigen::Triplet<double>> reduced;
  for (int col = 0; col < k.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
      const int fr = free_map[static_cast<std::size_t>(it.row())], fc = free_map[static_cast<std::size_t>(it.col())];
      if (fr >= 0 && fc >= 0) reduced.emplace_back(fr, fc, it.value());
    }
  SparseMatrix kr(nf, nf);
  kr.setFromTriplets(reduced.begin(), reduced.end());
  Vector br(nf);
  for (int a = 0; a < n; ++a)
    if (free_map[static_cast<std::size_t>(a)] >= 0) br[free_map[static_cast<std::size_t>(a)]] = b[a];
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(kr);
  if (ldlt.info() != Eigen::Success) throw SolverError("singular Poisson Galerkin matrix");
  const Vector xr = ldlt.solve(br);
  Vector c = known;
  for (int a = 0; a < n; ++a)
    if (free_map[static_cast<std::size_t>(a)] >= 0) c[a] = xr[free_map[static_cast<std::size_t>(a)]];
  return c;
}

struct PoissonStudy {
  int degree = 2;
  std::vector<int> spans;
  std::vector<double> errors;
  [[nodiscard]] std::vector<double> orders() const { return observed_orders(errors); }
};

/// Errors on the distorted patch refined to 2^(l+1) spans per direction, l = 0..levels-1.
inline PoissonStudy poisson_convergence(int degree, int levels) {
  PoissonStudy s;
  s.degree = degree;
  for (int l = 0; l < levels; ++l) {
    const int n = 2 << l;
    const BSplinePatch patch = refine(distorted_square_patch(), degree, degree, n, n);
    s.spans.push_back(n);
    s.errors.push_back(poisson_error(patch, solve_poisson(patch)));
  }
  return s;
}

inline VerifyReport verify_poisson(const std::vector<int>& degrees = {2, 3, 4}, int levels = 7) {
  VerifyReport r;
  for (int p : degrees) {
    const PoissonStudy s = poisson_convergence(p, levels);
    const auto orders = s.orders();
    std::string trace;
    for (double o : orders) trace += fmt(o, 3) + " ";
    const double rate = asymptotic_order(s.spans, s.errors);
    r.data["p" + std::to_string(p)] = {
        {"spans", s.spans}, {"errors", s.errors}, {"orders", orders}, {"asymptotic_order", rate}};
    r.add("poisson p=" + std::to_string(p) + " decreasing", strictly_decreasing(s.errors),
          "finest error " + fmt(s.errors.back()));
    r.add("poisson p=" + std::to_string(p) + " order >= p-1", rate >= p - 1.0,
          "asymptotic order " + fmt(rate, 4) + ", observed orders " + trace);
    // Galerkin oracle in the same spaces: optimal order p+1 and never worse than collocation
    std::vector<int> g_spans;
    std::vector<double> g_errors;
    bool below = true;
    for (std::size_t l = 0; l < std::min<std::size_t>(5, s.spans.size()); ++l) {
      const int n = s.spans[l];
      const BSplinePatch patch = refine(distorted_square_patch(), p, p, n, n);
      g_spans.push_back(n);
      g_errors.push_back(poisson_error(patch, solve_poisson_galerkin(patch)));
      below = below && g_errors.back() < s.errors[l];
    }
    const double g_rate = g_spans.size() >= 3 ? asymptotic_order(g_spans, g_errors) : 0.0;
    r.data["p" + std::to_string(p)]["galerkin"] = {{"spans", g_spans}, {"errors", g_errors}, {"order", g_rate}};
    r.add("poisson p=" + std::to_string(p) + " galerkin oracle", below && g_rate >= p + 0.5,
          "galerkin order " + fmt(g_rate, 4) + (below ? ", below collocation at every level" : ", above collocation"));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Single cell

struct SingleCellResult {
  int action_potentials = 0;
  double v_peak = 0.0, sigma_peak = 0.0, t_v_peak = 0.0, t_sigma_peak = 0.0;
  double v_final = 0.0, sigma_final = 0.0;
  double sigma_bound = 0.0;  ///< k_sigma (v_peak - v_r)
  std::vector<double> t, v, w, sigma;
};

/// Rest for 50 ms, a 2 ms applied current of @p amplitude (mV/ms), then free evolution to 1 s.
inline SingleCellResult single_cell_benchmark(double amplitude = 20.0, double dt = 0.02, double end = 1000.0,
                                              int sample_every = 50, const AlievPanfilovParams& cell = {},
                                              const CoupledActivationParams& act = {}) {
  StimulusEvent e;
  e.amplitude = amplitude;
  e.start = 50.0;
  e.duration = 2.0;
  SingleCell model(cell, act, StimulusProtocol{{e}}, dt);
  CellState s = model.rest_state();
  SingleCellResult r;
  r.v_peak = s.v;
  bool above = false;
  const long steps = std::lround(end / dt);
  for (long k = 0; k <= steps; ++k) {
    if (k > 0) model.step(s);
    const double t = model.time(s.step);
    if (s.v > r.v_peak) {
      r.v_peak = s.v;
      r.t_v_peak = t;
    }
    if (s.sigma > r.sigma_peak) {
      r.sigma_peak = s.sigma;
      r.t_sigma_peak = t;
    }
    // upstroke through -40 mV, re-armed below -60 mV
    if (!above && s.v > -40.0) {
      ++r.action_potentials;
      above = true;
    }
    if (above && s.v < -60.0) above = false;
    if (k % sample_every == 0) {
      r.t.push_back(t);
      r.v.push_back(s.v);
      r.w.push_back(s.w);
      r.sigma.push_back(s.sigma);
    }
  }
  r.v_final = s.v;
  r.sigma_final = s.sigma;
  r.sigma_bound = act.k_sigma * (r.v_peak - act.v_r);
  return r;
}

inline VerifyReport verify_single_cell() {
  VerifyReport r;
  const SingleCellResult c = single_cell_benchmark();
  r.add("single-cell one action potential", c.action_potentials == 1,
        std::to_string(c.action_potentials) + " upstrokes, v peak " + fmt(c.v_peak) + " mV");
  r.add("single-cell return to rest", std::abs(c.v_final + 80.0) < 5.0, "v(1 s) = " + fmt(c.v_final) + " mV");
  r.add("single-cell sigma peak bounded", c.sigma_peak <= c.sigma_bound,
        "peak " + fmt(c.sigma_peak) + " <= " + fmt(c.sigma_bound) + " kPa");
  r.add("single-cell sigma peak in [6, 13] kPa", c.sigma_peak >= 6.0 && c.sigma_peak <= 13.0,
        "peak " + fmt(c.sigma_peak) + " kPa");
  r.add("single-cell sigma rises and decays", c.t_sigma_peak > c.t_v_peak && c.sigma_final < 0.1 * c.sigma_peak,
        "peak at " + fmt(c.t_sigma_peak) + " ms, sigma(1 s) = " + fmt(c.sigma_final) + " kPa");
  r.data = {{"action_potentials", c.action_potentials}, {"v_peak", c.v_peak},        {"sigma_peak", c.sigma_peak},
            {"t_sigma_peak", c.t_sigma_peak},           {"v_final", c.v_final},      {"sigma_final", c.sigma_final},
            {"sigma_bound", c.sigma_bound}};
  return r;
}

// ---------------------------------------------------------------------------
// Suites

inline const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"scordelis-lo", "tensile", "poisson", "single-cell"};
  return names;
}

/// Runs one suite, or every suite for "all"; failures are report entries.
inline VerifyReport verify(const std::string& suite) {
  if (suite == "scordelis-lo") return verify_scordelis_lo();
  if (suite == "tensile") return verify_tensile();
  if (suite == "poisson") return verify_poisson();
  if (suite == "single-cell") return verify_single_cell();
  if (suite == "all") {
    VerifyReport r;
    for (const auto& s : verify_suites()) r.append(verify(s), s);
    return r;
  }
  throw ConfigError("unknown verification suite '" + suite + "' (scordelis-lo, tensile, poisson, single-cell, all)");
}

}  // namespace mtf::harness
