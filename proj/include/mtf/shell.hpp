#pragma once

// Isogeometric Kirchhoff-Love shell: strains, layered resultants, residual and
// consistent tangent, constraints and quasi-static Newton continuation.

#include "mtf/materials.hpp"

#include <Eigen/SparseCholesky>

#include <fstream>
#include <limits>
#include <map>

namespace mtf {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Engineering Voigt vector (11, 22, 2*12) of a symmetric 2x2 tensor.
inline Voigt to_engineering(const Mat2& t) { return {t(0, 0), t(1, 1), 2.0 * t(0, 1)}; }

inline Mat2 from_engineering(const Voigt& v) {
  Mat2 t;
  t << v[0], 0.5 * v[2], 0.5 * v[2], v[1];
  return t;
}

// ---------------------------------------------------------------------------
// Layers

struct Layer {
  double thickness = 0.0;  ///< mm
  Material material = NeoHookean{};
  double density = 0.0;    ///< mg/mm^3
  bool active = false;
};

/// Layers ordered bottom to top along +a3; theta3 spans [-d/2, d/2].
struct LayerStack {
  std::vector<Layer> layers;
  int points_per_layer = 3;

  [[nodiscard]] double thickness() const {
    double d = 0.0;
    for (const auto& l : layers) d += l.thickness;
    return d;
  }

  /// theta3 interval of layer k.
  [[nodiscard]] std::pair<double, double> bounds(std::size_t k) const {
    double z = -0.5 * thickness();
    for (std::size_t i = 0; i < k; ++i) z += layers[i].thickness;
    return {z, z + layers[k].thickness};
  }

  /// Areal density sum_k rho_k d_k (mg/mm^2).
  [[nodiscard]] double areal_density() const {
    double r = 0.0;
    for (const auto& l : layers) r += l.density * l.thickness;
    return r;
  }

  void validate() const {
    if (layers.empty()) throw ConfigError("layer stack is empty");
    int active = 0;
    for (const auto& l : layers) {
      if (!(l.thickness > 0.0)) throw ConfigError("layer thickness must be positive");
      if (l.density < 0.0) throw ConfigError("layer density must be nonnegative");
      active += l.active ? 1 : 0;
    }
    if (active > 1) throw ConfigError("at most one active layer is supported");
    if (points_per_layer < 1) throw ConfigError("points per layer must be positive");
  }
};

// ---------------------------------------------------------------------------
// Strains and resultants

struct ShellStrains {
  Mat2 membrane = Mat2::Zero();   ///< eps = (a - a_ref)/2
  Mat2 curvature = Mat2::Zero();  ///< kappa = b_ref - b
};

inline ShellStrains strain_measures(const SurfaceFrame& ref, const SurfaceFrame& def) {
  return {0.5 * (def.metric - ref.metric), ref.curvature - def.curvature};
}

/// Stress at a through-thickness point as a function of the fiber stretch.
using PointActivation = std::function<ActiveStress(double lambda)>;

/// Normal force n, moment m and the blocks A, B, D of d(n, m)/d(eps, kappa)
/// (engineering Voigt), integrated with Gauss points in every layer.
struct Resultants {
  Voigt n = Voigt::Zero();
  Voigt m = Voigt::Zero();
  VoigtMatrix A = VoigtMatrix::Zero();
  VoigtMatrix B = VoigtMatrix::Zero();
  VoigtMatrix D = VoigtMatrix::Zero();
  double energy = 0.0;  ///< per unit reference area
};

inline Resultants stress_resultants(const Voigt& eps, const Voigt& kappa, const LayerStack& stack, const Mat2& a_ref,
                                    const Vec2& fiber, const PointActivation& active = {}) {
  Resultants r;
  const QuadratureRule rule = gauss_legendre(stack.points_per_layer);
  for (std::size_t k = 0; k < stack.layers.size(); ++k) {
    const Layer& layer = stack.layers[k];
    const auto [lo, hi] = stack.bounds(k);
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const double z = mid + half * rule.points[q];
      const double w = half * rule.weights[q];
      const Mat2 c = a_ref + 2.0 * from_engineering(eps + z * kappa);
      StressTangent s = passive_stress(layer.material, a_ref, c, fiber);
      if (layer.active && active) s += active_stress_tensor(c, fiber, active(fiber_stretch(c, fiber)));
      r.n += w * s.stress;
      r.m += (w * z) * s.stress;
      r.A += w * s.tangent;
      r.B += (w * z) * s.tangent;
      r.D += (w * z * z) * s.tangent;
      r.energy += w * s.energy;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Model

/// In-plane quadrature point with reference data cached.
struct ShellQuadPoint {
  double t1 = 0.0, t2 = 0.0;
  double weight = 0.0;  ///< reference area element times Gauss weight
  TensorBasis basis;
  SurfaceFrame ref;
  Vec2 fiber = Vec2::Zero();  ///< contravariant fiber components
};

struct ShellElement {
  std::vector<int> nodes;  ///< control point indices, local order of the basis
  std::size_t first_qp = 0, qp_count = 0;
};

/// Activation seen by the assembly: active stress at quadrature point qp for fiber stretch lambda.
using ActivationFn = std::function<ActiveStress(std::size_t qp, double lambda)>;

class ShellModel {
 public:
  ShellModel(BSplinePatch patch, LayerStack layers, Vec3 fiber = Vec3::UnitX(), int quad_points1 = 0,
             int quad_points2 = 0)
      : patch_(std::move(patch)), layers_(std::move(layers)), fiber_(fiber) {
    layers_.validate();
    areal_density_ = layers_.areal_density();
    build_quadrature(quad_points1 > 0 ? quad_points1 : patch_.u.degree() + 1,
                     quad_points2 > 0 ? quad_points2 : patch_.v.degree() + 1);
    fixed_.assign(dofs(), false);
    build_pattern();
  }

  [[nodiscard]] const BSplinePatch& patch() const { return patch_; }
  [[nodiscard]] const LayerStack& layers() const { return layers_; }
  [[nodiscard]] const Vec3& fiber() const { return fiber_; }
  [[nodiscard]] int dofs() const { return 3 * patch_.size(); }
  [[nodiscard]] const std::vector<ShellQuadPoint>& quad_points() const { return qps_; }
  [[nodiscard]] const std::vector<ShellElement>& elements() const { return elements_; }
  [[nodiscard]] bool weak_fiber() const { return weak_fiber_; }
  /// Tangent sparsity pattern (all values zero).
  [[nodiscard]] const SparseMatrix& pattern() const { return pattern_; }
  /// Value-array slot of local entry (r, s) of element e, stored row-major in r.
  [[nodiscard]] const std::vector<int>& slots(std::size_t e) const { return slots_[e]; }

  [[nodiscard]] double areal_density() const { return areal_density_; }
  void set_areal_density(double rho) { areal_density_ = rho; }

  /// Uniform load per unit reference area (force/area).
  void set_area_load(const Vec3& p) { area_load_ = p; }
  [[nodiscard]] const Vec3& area_load() const { return area_load_; }

  /// Control point indices of row @p row (0 = on the edge) counted inward from @p edge.
  [[nodiscard]] std::vector<int> edge_points(int edge, int row = 0) const {
    const int m1 = patch_.count1(), m2 = patch_.count2();
    std::vector<int> pts;
    if (edge < 0 || edge > 3) throw DomainError("edge id must be 0..3");
    if (edge < 2) {
      const int i = edge == 0 ? row : m1 - 1 - row;
      for (int j = 0; j < m2; ++j) pts.push_back(patch_.index(i, j));
    } else {
      const int j = edge == 2 ? row : m2 - 1 - row;
      for (int i = 0; i < m1; ++i) pts.push_back(patch_.index(i, j));
    }
    return pts;
  }

  void fix_dof(int dof, double value = 0.0) {
    fixed_.at(dof) = true;
    if (value != 0.0)
      prescribed_[dof] = value;
    else
      prescribed_.erase(dof);
  }

  void fix_point(int point, std::array<bool, 3> components) {
    for (int d = 0; d < 3; ++d)
      if (components[d]) fix_dof(3 * point + d);
  }

  /// Fixes the selected components of the first @p rows control rows at an edge.
  void fix_edge(int edge, std::array<bool, 3> components, int rows = 1) {
    for (int r = 0; r < rows; ++r)
      for (int p : edge_points(edge, r)) fix_point(p, components);
  }

  /// Strong clamp: zero displacement of the first two control rows (no edge rotation).
  void clamp_edge(int edge) { fix_edge(edge, {true, true, true}, 2); }

  /// Prescribes component d of every edge control point to @p value (reached at the end of a ramp).
  void prescribe_edge(int edge, int component, double value) {
    for (int p : edge_points(edge)) fix_dof(3 * p + component, value);
  }

  [[nodiscard]] const std::vector<bool>& fixed() const { return fixed_; }
  [[nodiscard]] const std::map<int, double>& prescribed() const { return prescribed_; }

  [[nodiscard]] std::vector<int> free_dofs() const {
    std::vector<int> f;
    for (int i = 0; i < dofs(); ++i)
      if (!fixed_[i]) f.push_back(i);
    return f;
  }

 private:
  void build_quadrature(int n1, int n2) {
    const QuadratureRule r1 = gauss_legendre(n1), r2 = gauss_legendre(n2);
    const auto s1 = patch_.u.spans(), s2 = patch_.v.spans();
    for (const auto& [b0, b1] : s2)
      for (const auto& [a0, a1] : s1) {
        ShellElement el;
        el.first_qp = qps_.size();
        for (std::size_t q2 = 0; q2 < r2.points.size(); ++q2)
          for (std::size_t q1 = 0; q1 < r1.points.size(); ++q1) {
            ShellQuadPoint qp;
            qp.t1 = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * r1.points[q1];
            qp.t2 = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * r2.points[q2];
            qp.basis = tensor_basis(patch_, qp.t1, qp.t2, 2);
            SurfacePoint sp{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
            for (std::size_t l = 0; l < qp.basis.size(); ++l) {
              const Vec3& x = patch_.control[qp.basis.index[l]];
              sp.value += qp.basis.n[l] * x;
              sp.d1 += qp.basis.n1[l] * x;
              sp.d2 += qp.basis.n2[l] * x;
              sp.d11 += qp.basis.n11[l] * x;
              sp.d12 += qp.basis.n12[l] * x;
              sp.d22 += qp.basis.n22[l] * x;
            }
            try {
              qp.ref = make_frame(sp);
            } catch (const SingularGeometryError& e) {
              throw SingularGeometryError(std::string(e.what()) + " at (" + std::to_string(qp.t1) + ", " +
                                          std::to_string(qp.t2) + ")");
            }
            bool weak = false;
            qp.fiber = project_fiber(qp.ref, fiber_, &weak);
            weak_fiber_ = weak_fiber_ || weak;
            qp.weight = qp.ref.jacobian * 0.25 * (a1 - a0) * (b1 - b0) * r1.weights[q1] * r2.weights[q2];
            if (el.nodes.empty()) el.nodes = qp.basis.index;
            qps_.push_back(std::move(qp));
          }
        el.qp_count = qps_.size() - el.first_qp;
        elements_.push_back(std::move(el));
      }
  }

  void build_pattern() {
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& el : elements_)
      for (int a : el.nodes)
        for (int b : el.nodes)
          for (int c = 0; c < 3; ++c)
            for (int e = 0; e < 3; ++e) trip.emplace_back(3 * a + c, 3 * b + e, 0.0);
    pattern_.resize(dofs(), dofs());
    pattern_.setFromTriplets(trip.begin(), trip.end());
    pattern_.makeCompressed();
    const int* outer = pattern_.outerIndexPtr();
    const int* inner = pattern_.innerIndexPtr();
    slots_.resize(elements_.size());
    for (std::size_t k = 0; k < elements_.size(); ++k) {
      const auto& nodes = elements_[k].nodes;
      const int nd = 3 * static_cast<int>(nodes.size());
      auto& slot = slots_[k];
      slot.resize(static_cast<std::size_t>(nd) * nd);
      for (int s = 0; s < nd; ++s) {
        const int col = 3 * nodes[s / 3] + s % 3;
        for (int r = 0; r < nd; ++r) {
          const int row = 3 * nodes[r / 3] + r % 3;
          const int* pos = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
          slot[static_cast<std::size_t>(r) * nd + s] = static_cast<int>(pos - inner);
        }
      }
    }
  }

  BSplinePatch patch_;
  LayerStack layers_;
  Vec3 fiber_;
  double areal_density_ = 0.0;
  Vec3 area_load_ = Vec3::Zero();
  std::vector<ShellQuadPoint> qps_;
  std::vector<ShellElement> elements_;
  std::vector<bool> fixed_;
  std::map<int, double> prescribed_;
  bool weak_fiber_ = false;
  SparseMatrix pattern_;
  std::vector<std::vector<int>> slots_;
};

// ---------------------------------------------------------------------------
// Assembly

struct AssemblyRequest {
  bool residual = true;
  bool tangent = true;
  bool energy = false;
};

/// F_int - F_ext, its Jacobian and the stored energy minus the external work.
struct ShellAssembly {
  Vector residual;
  SparseMatrix tangent;
  double energy = 0.0;
};

namespace detail {

struct ElementBuffer {
  Vector f;
  Eigen::MatrixXd k;
  double energy = 0.0;
};

/// Deformed frame quantities at a quadrature point.
struct DeformedPoint {
  Vec3 a1, a2, a11, a22, a12, x, a3;
  double norm = 0.0;
};

inline DeformedPoint deformed_point(const ShellQuadPoint& qp, const BSplinePatch& patch, const Vector& u) {
  DeformedPoint d{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), 0};
  const auto& b = qp.basis;
  for (std::size_t l = 0; l < b.size(); ++l) {
    const int i = b.index[l];
    const Vec3 x = patch.control[i] + u.segment<3>(3 * i);
    d.a1 += b.n1[l] * x;
    d.a2 += b.n2[l] * x;
    d.a11 += b.n11[l] * x;
    d.a22 += b.n22[l] * x;
    d.a12 += b.n12[l] * x;
  }
  d.x = d.a1.cross(d.a2);
  d.norm = d.x.norm();
  if (!(d.norm >= kDegenerateJacobian))
    throw SingularGeometryError("degenerate deformed surface at (" + std::to_string(qp.t1) + ", " +
                                std::to_string(qp.t2) + ")");
  d.a3 = d.x / d.norm;
  return d;
}

inline void element_kernel(const ShellModel& model, const ShellElement& el, const Vector& u,
                           const ActivationFn& activation, const AssemblyRequest& req, ElementBuffer& buf) {
  const int nn = static_cast<int>(el.nodes.size());
  const int nd = 3 * nn;
  buf.f = Vector::Zero(nd);
  if (req.tangent) buf.k = Eigen::MatrixXd::Zero(nd, nd);
  buf.energy = 0.0;
  Eigen::Matrix<double, Eigen::Dynamic, 3> E(nd, 3), Kp(nd, 3);
  std::vector<Vec3> x_r(nd), a3_r(nd);

  for (std::size_t q = el.first_qp; q < el.first_qp + el.qp_count; ++q) {
    const ShellQuadPoint& qp = model.quad_points()[q];
    const TensorBasis& b = qp.basis;
    const DeformedPoint d = deformed_point(qp, model.patch(), u);

    Mat2 metric;
    metric << d.a1.dot(d.a1), d.a1.dot(d.a2), d.a1.dot(d.a2), d.a2.dot(d.a2);
    Mat2 bcur;
    bcur << d.a11.dot(d.a3), d.a12.dot(d.a3), d.a12.dot(d.a3), d.a22.dot(d.a3);
    const Voigt eps = to_engineering(0.5 * (metric - qp.ref.metric));
    const Voigt kap = to_engineering(qp.ref.curvature - bcur);

    PointActivation act;
    if (activation) act = [&](double lambda) { return activation(q, lambda); };
    const Resultants res = stress_resultants(eps, kap, model.layers(), qp.ref.metric, qp.fiber, act);
    const double w = qp.weight;
    buf.energy += w * res.energy;

    // first variations
    for (int l = 0; l < nn; ++l)
      for (int c = 0; c < 3; ++c) {
        const int r = 3 * l + c;
        const Vec3 e = Vec3::Unit(c);
        E(r, 0) = b.n1[l] * d.a1[c];
        E(r, 1) = b.n2[l] * d.a2[c];
        E(r, 2) = b.n2[l] * d.a1[c] + b.n1[l] * d.a2[c];
        x_r[r] = b.n1[l] * e.cross(d.a2) + b.n2[l] * d.a1.cross(e);
        a3_r[r] = (x_r[r] - d.a3 * d.a3.dot(x_r[r])) / d.norm;
        Kp(r, 0) = -(b.n11[l] * d.a3[c] + d.a11.dot(a3_r[r]));
        Kp(r, 1) = -(b.n22[l] * d.a3[c] + d.a22.dot(a3_r[r]));
        Kp(r, 2) = -2.0 * (b.n12[l] * d.a3[c] + d.a12.dot(a3_r[r]));
      }
    if (req.residual) buf.f.noalias() += w * (E * res.n + Kp * res.m);
    if (!req.tangent) continue;

    const Eigen::Matrix<double, Eigen::Dynamic, 3> ne = E * res.A + Kp * res.B;
    const Eigen::Matrix<double, Eigen::Dynamic, 3> nk = E * res.B + Kp * res.D;
    buf.k.noalias() += w * (ne * E.transpose() + nk * Kp.transpose());

    // geometric part: n : eps_rs + m : kappa_rs
    const Vec3 mh = res.m[0] * d.a11 + res.m[1] * d.a22 + 2.0 * res.m[2] * d.a12;
    std::vector<double> mn(nn);
    for (int l = 0; l < nn; ++l) mn[l] = res.m[0] * b.n11[l] + res.m[1] * b.n22[l] + 2.0 * res.m[2] * b.n12[l];
    const double n2 = d.norm * d.norm;
    std::vector<double> a3x(nd);
    for (int r = 0; r < nd; ++r) a3x[r] = d.a3.dot(x_r[r]);
    const double a3mh = d.a3.dot(mh);
    for (int li = 0; li < nn; ++li)
      for (int ci = 0; ci < 3; ++ci) {
        const int r = 3 * li + ci;
        for (int lj = li; lj < nn; ++lj)
          for (int cj = (lj == li ? ci : 0); cj < 3; ++cj) {
            const int s = 3 * lj + cj;
            double g = 0.0;
            if (ci == cj)
              g += res.n[0] * b.n1[li] * b.n1[lj] + res.n[1] * b.n2[li] * b.n2[lj] +
                   res.n[2] * (b.n1[li] * b.n2[lj] + b.n1[lj] * b.n2[li]);
            // second variation of a3 contracted with mh
            const Vec3& xr = x_r[r];
            const Vec3& xs = x_r[s];
            double a3rs_mh = -(xr.dot(mh) * a3x[s] + xs.dot(mh) * a3x[r] + a3mh * xr.dot(xs)) / n2 +
                             3.0 * a3mh * a3x[r] * a3x[s] / n2;
            if (ci != cj) {
              const double coef = b.n1[li] * b.n2[lj] - b.n1[lj] * b.n2[li];
              const Vec3 xrs = coef * Vec3::Unit(ci).cross(Vec3::Unit(cj));
              a3rs_mh += xrs.dot(mh) / d.norm - a3mh * d.a3.dot(xrs) / d.norm;
            }
            g -= mn[li] * a3_r[s][ci] + mn[lj] * a3_r[r][cj] + a3rs_mh;
            buf.k(r, s) += w * g;
            if (s != r) buf.k(s, r) += w * g;
          }
      }
  }
}

}  // namespace detail

/// Assembles residual, tangent and energy over all elements. Element work is split
/// across threads in batches and merged in element order, so results do not depend
/// on the thread count.
inline ShellAssembly assemble(const ShellModel& model, const Vector& u, const ActivationFn& activation = {},
                              AssemblyRequest req = {}) {
  if (u.size() != model.dofs()) throw DomainError("assemble: displacement vector has the wrong size");
  ShellAssembly out;
  out.residual = Vector::Zero(model.dofs());
  const auto& elements = model.elements();
  constexpr std::size_t batch = 256;
  std::vector<detail::ElementBuffer> buffers(std::min(batch, elements.size()));
  double* values = nullptr;
  if (req.tangent) {
    out.tangent = model.pattern();
    values = out.tangent.valuePtr();
  }
  for (std::size_t start = 0; start < elements.size(); start += batch) {
    const std::size_t count = std::min(batch, elements.size() - start);
    parallel_for(count, [&](std::size_t i) {
      detail::element_kernel(model, elements[start + i], u, activation, req, buffers[i]);
    });
    for (std::size_t i = 0; i < count; ++i) {
      const auto& el = elements[start + i];
      const auto& buf = buffers[i];
      out.energy += buf.energy;
      const int nd = 3 * static_cast<int>(el.nodes.size());
      for (int r = 0; r < nd; ++r) out.residual[3 * el.nodes[r / 3] + r % 3] += buf.f[r];
      if (!req.tangent) continue;
      const auto& slot = model.slots(start + i);
      for (int r = 0; r < nd; ++r)
        for (int c = 0; c < nd; ++c) values[slot[static_cast<std::size_t>(r) * nd + c]] += buf.k(r, c);
    }
  }
  // external area load
  if (model.area_load().squaredNorm() > 0.0) {
    for (const auto& qp : model.quad_points())
      for (std::size_t l = 0; l < qp.basis.size(); ++l) {
        const int i = qp.basis.index[l];
        const Vec3 f = qp.weight * qp.basis.n[l] * model.area_load();
        out.residual.segment<3>(3 * i) -= f;
        out.energy -= f.dot(u.segment<3>(3 * i));
      }
  }
  return out;
}

/// Consistent mass matrix integral rho N_i N_j dA on every displacement component.
inline SparseMatrix mass_matrix(const ShellModel& model) {
  std::vector<Eigen::Triplet<double>> trip;
  const double rho = model.areal_density();
  for (const auto& qp : model.quad_points()) {
    const auto& b = qp.basis;
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) {
        const double m = rho * qp.weight * b.n[i] * b.n[j];
        for (int c = 0; c < 3; ++c) trip.emplace_back(3 * b.index[i] + c, 3 * b.index[j] + c, m);
      }
  }
  SparseMatrix m(model.dofs(), model.dofs());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

// ---------------------------------------------------------------------------
// Constrained linear algebra

/// Restriction to the free degrees of freedom and a reusable sparse factorization.
class ReducedSolver {
 public:
  explicit ReducedSolver(const ShellModel& model) : ReducedSolver(model.fixed()) {}
  explicit ReducedSolver(std::vector<bool> fixed) : fixed_(std::move(fixed)) {
    map_.assign(fixed_.size(), -1);
    for (std::size_t i = 0; i < fixed_.size(); ++i)
      if (!fixed_[i]) {
        map_[i] = static_cast<int>(free_.size());
        free_.push_back(static_cast<int>(i));
      }
  }

  [[nodiscard]] int size() const { return static_cast<int>(free_.size()); }
  [[nodiscard]] const std::vector<int>& free() const { return free_; }

  [[nodiscard]] SparseMatrix restrict_matrix(const SparseMatrix& k) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(k.nonZeros());
    for (int c = 0; c < k.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(k, c); it; ++it) {
        const int r = map_[it.row()], s = map_[it.col()];
        if (r >= 0 && s >= 0) trip.emplace_back(r, s, it.value());
      }
    SparseMatrix out(size(), size());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
  }

  [[nodiscard]] Vector restrict_vector(const Vector& v) const {
    Vector out(size());
    for (int i = 0; i < size(); ++i) out[i] = v[free_[i]];
    return out;
  }

  [[nodiscard]] Vector expand(const Vector& v) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(fixed_.size()));
    for (int i = 0; i < size(); ++i) out[free_[i]] = v[i];
    return out;
  }

  /// Factorizes the (symmetric) reduced matrix with sparse LDL^T; falls back to sparse LU when a pivot
  /// vanishes. The symbolic analysis is reused while the pattern is unchanged.
  void factorize(const SparseMatrix& k_reduced) {
    SparseMatrix k = k_reduced;
    k.makeCompressed();
    const bool same = analyzed_ && k.nonZeros() == pattern_nnz_;
    if (!same) {
      ldlt_.analyzePattern(k);
      lu_analyzed_ = false;
      analyzed_ = true;
      pattern_nnz_ = k.nonZeros();
    }
    ldlt_.factorize(k);
    use_lu_ = ldlt_.info() != Eigen::Success || !ldlt_.vectorD().allFinite() ||
              (ldlt_.vectorD().array() == 0.0).any();
    if (!use_lu_) return;
    if (!lu_analyzed_) {
      lu_.analyzePattern(k);
      lu_analyzed_ = true;
    }
    lu_.factorize(k);
    if (lu_.info() != Eigen::Success) throw SolverError("sparse LU factorization failed: " + lu_.lastErrorMessage());
  }

  [[nodiscard]] Vector solve(const Vector& b) const {
    Vector x = use_lu_ ? Vector(lu_.solve(b)) : Vector(ldlt_.solve(b));
    if (!x.allFinite()) throw SolverError("sparse solve produced non-finite values");
    return x;
  }

 private:
  std::vector<bool> fixed_;
  std::vector<int> map_;
  std::vector<int> free_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  bool analyzed_ = false, lu_analyzed_ = false, use_lu_ = false;
  Eigen::Index pattern_nnz_ = -1;
};

// ---------------------------------------------------------------------------
// Newton continuation

struct NewtonOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  int max_iterations = 30;
  /// A correction is halved (at most max_backtracks times) when it raises the residual
  /// norm by more than this factor or leaves the admissible geometry.
  double backtrack_growth = 10.0;
  int max_backtracks = 12;
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  std::vector<double> residuals;  ///< free-DOF residual norm before each iteration and at exit
};

/// Free-DOF residual and full Jacobian returned by a Newton evaluation callback.
struct NewtonEvaluation {
  Vector residual;  ///< restricted to the free DOFs
  SparseMatrix jacobian;
};

/// Newton driver on the free entries of @p x with residual backtracking. @p evaluate(x, tangent)
/// may throw SingularGeometryError for inadmissible iterates. @p what prefixes failure messages.
template <class Evaluate>
NewtonReport newton_iterate(Vector& x, Evaluate&& evaluate, ReducedSolver& solver, const NewtonOptions& opt,
                            const std::string& what) {
  NewtonReport rep;
  double r0 = -1.0, prev = 0.0;
  int backtracks = 0;
  Vector dx;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const bool last = it == opt.max_iterations;
    NewtonEvaluation ev;
    double rn = std::numeric_limits<double>::quiet_NaN();
    try {
      ev = evaluate(x, !last);
      rn = ev.residual.norm();
    } catch (const SingularGeometryError&) {
      if (it == 0) throw;
    }
    if (it > 0 && (!std::isfinite(rn) || rn > opt.backtrack_growth * prev) && backtracks < opt.max_backtracks) {
      dx *= 0.5;
      x += dx;
      ++backtracks;
      continue;
    }
    if (!std::isfinite(rn)) throw SolverError(what + ": non-finite residual in Newton iteration " + std::to_string(it));
    rep.residuals.push_back(rn);
    if (r0 < 0.0) r0 = rn;
    if (rn <= opt.abs_tol || rn <= opt.rel_tol * r0) {
      rep.converged = true;
      rep.iterations = it;
      return rep;
    }
    if (last) break;
    prev = rn;
    backtracks = 0;
    solver.factorize(solver.restrict_matrix(ev.jacobian));
    dx = solver.expand(solver.solve(ev.residual));
    x -= dx;
  }
  rep.iterations = opt.max_iterations;
  std::ostringstream msg;
  msg << what << ": Newton did not converge in " << opt.max_iterations << " iterations; last residual "
      << rep.residuals.back() << " (initial " << r0 << ")";
  throw SolverError(msg.str());
}

/// Newton iteration on the free DOFs; prescribed DOFs keep the values already in @p u.
inline NewtonReport newton_solve(const ShellModel& model, Vector& u, const ActivationFn& activation,
                                 const NewtonOptions& opt, ReducedSolver& solver,
                                 const std::string& what = "static solve") {
  return newton_iterate(
      u,
      [&](const Vector& x, bool tangent) {
        ShellAssembly a = assemble(model, x, activation, {true, tangent, false});
        return NewtonEvaluation{solver.restrict_vector(a.residual), std::move(a.tangent)};
      },
      solver, opt, what);
}

struct QuasiStaticResult {
  std::vector<Vector> displacements;  ///< one per load step (after convergence)
  std::vector<NewtonReport> reports;
};

/// Activation at load step k of n (k = 1..n); return an empty function for none.
using StepActivation = std::function<ActivationFn(int step, double fraction)>;

/// Incremental loading: at step k the activation is built for fraction k/n and
/// prescribed displacements are scaled by k/n; each step is solved by Newton.
/// A step that fails is retried from the last converged state, then split into 2, 4, ...
/// up to kMaxLoadSubdivision equal sub-increments.
inline constexpr int kMaxLoadSubdivision = 16;

inline QuasiStaticResult solve_quasi_static(const ShellModel& model, int steps, const StepActivation& activation,
                                            const NewtonOptions& opt = {}, Vector u0 = {},
                                            const std::function<void(int, const Vector&)>& observer = {}) {
  if (steps < 1) throw ConfigError("quasi-static solve needs at least one step");
  Vector u = u0.size() == model.dofs() ? u0 : Vector::Zero(model.dofs());
  ReducedSolver solver(model);
  QuasiStaticResult out;
  Vector previous = u;
  for (int k = 1; k <= steps; ++k) {
    const double frac = static_cast<double>(k) / steps;
    const double frac_prev = static_cast<double>(k - 1) / steps;
    const std::string what = "load step " + std::to_string(k);
    const auto solve_at = [&](double f) {
      for (const auto& [dof, value] : model.prescribed()) u[dof] = f * value;
      return newton_solve(model, u, activation ? activation(k, f) : ActivationFn{}, opt, solver, what);
    };
    const Vector converged = u;
    NewtonReport rep;
    try {
      // secant predictor from the last two converged steps
      if (k > 1) u += converged - previous;
      rep = solve_at(frac);
    } catch (const SolverError&) {
      for (int parts = 1;; parts *= 2) {
        u = converged;
        rep = {};
        try {
          for (int s = 1; s <= parts; ++s) {
            const NewtonReport r = solve_at(frac_prev + (frac - frac_prev) * s / parts);
            rep.iterations += r.iterations;
            rep.residuals = r.residuals;
            rep.converged = r.converged;
          }
          break;
        } catch (const SolverError&) {
          if (parts >= kMaxLoadSubdivision) throw;
        }
      }
    }
    previous = converged;
    out.reports.push_back(std::move(rep));
    out.displacements.push_back(u);
    if (observer) observer(k, u);
  }
  return out;
}

/// Single linear solve K(0) u = -R(0) (small-deformation analysis).
inline Vector solve_linear(const ShellModel& model, const ActivationFn& activation = {}) {
  Vector u = Vector::Zero(model.dofs());
  for (const auto& [dof, value] : model.prescribed()) u[dof] = value;
  ReducedSolver solver(model);
  const ShellAssembly a = assemble(model, u, activation);
  solver.factorize(solver.restrict_matrix(a.tangent));
  u -= solver.expand(solver.solve(solver.restrict_vector(a.residual)));
  return u;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

/// Displacement of the mid-surface at (t1, t2).
inline Vec3 displacement_at(const ShellModel& model, const Vector& u, double t1, double t2) {
  const auto b = tensor_basis(model.patch(), t1, t2, 0);
  Vec3 x = Vec3::Zero();
  for (std::size_t l = 0; l < b.size(); ++l) x += b.n[l] * u.segment<3>(3 * b.index[l]);
  return x;
}

/// Parametric coordinates of the reference point closest to @p x (Gauss-Newton with clamping).
inline Vec2 invert_point(const BSplinePatch& patch, const Vec3& x, Vec2 guess = Vec2(-1, -1)) {
  const double lo1 = patch.u.front(), hi1 = patch.u.back(), lo2 = patch.v.front(), hi2 = patch.v.back();
  Vec2 t = guess[0] < lo1 ? Vec2(0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2)) : guess;
  for (int it = 0; it < 100; ++it) {
    const auto s = eval_surface(patch, t[0], t[1], 1);
    Eigen::Matrix<double, 3, 2> j;
    j << s.d1, s.d2;
    const Vec3 r = s.value - x;
    const Vec2 dt = (j.transpose() * j).ldlt().solve(-j.transpose() * r);
    t[0] = std::clamp(t[0] + dt[0], lo1, hi1);
    t[1] = std::clamp(t[1] + dt[1], lo2, hi2);
    if (dt.norm() < 1e-14 * (1.0 + t.norm())) break;
  }
  return t;
}

/// Stress state at a point of the shell.
struct PointStress {
  Mat3 pk2 = Mat3::Zero();     ///< second Piola-Kirchhoff stress in the reference cartesian frame
  Mat3 cauchy = Mat3::Zero();  ///< Cauchy stress in the current cartesian frame
  double thickness_stretch = 1.0;
};

/// Passive plus active stress at (t1, t2, theta3). For the incompressible law the
/// thickness stretch is J0^{-1}; otherwise it is reported as 1.
inline PointStress stress_at(const ShellModel& model, const Vector& u, double t1, double t2, double theta3,
                             const PointActivation& active = {}) {
  const auto ref = frame_at(model.patch(), t1, t2);
  std::vector<Vec3> disp(model.patch().size());
  for (std::size_t i = 0; i < disp.size(); ++i) disp[i] = u.segment<3>(3 * i);
  const auto def = frame_at(model.patch(), t1, t2, std::span<const Vec3>(disp));
  const ShellStrains e = strain_measures(ref, def);
  const Mat2 c = ref.metric + 2.0 * (e.membrane + theta3 * e.curvature);
  const Vec2 fiber = project_fiber(ref, model.fiber());
  const auto& stack = model.layers();
  std::size_t layer = 0;
  for (std::size_t k = 0; k < stack.layers.size(); ++k)
    if (theta3 >= stack.bounds(k).first) layer = k;
  StressTangent s = passive_stress(stack.layers[layer].material, ref.metric, c, fiber);
  if (stack.layers[layer].active && active) s += active_stress_tensor(c, fiber, active(fiber_stretch(c, fiber)));
  PointStress out;
  const Mat2 sm = from_voigt(s.stress);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) out.pk2 += sm(a, b) * ref.a[a] * ref.a[b].transpose();
  if (std::holds_alternative<NeoHookean>(stack.layers[layer].material))
    out.thickness_stretch = std::sqrt(ref.metric.determinant() / c.determinant());
  // F = g_alpha (x) G^alpha + lambda3 a3 (x) A3, J = 1 for the incompressible law
  Mat3 f = Mat3::Zero();
  for (int a = 0; a < 2; ++a) f += def.a[a] * ref.a_contra[a].transpose();
  f += out.thickness_stretch * def.a3 * ref.a3.transpose();
  out.cauchy = f * out.pk2 * f.transpose() / f.determinant();
  return out;
}

/// Writes the deformed mid-surface sampled on an n1 x n2 parametric lattice as a legacy
/// VTK structured grid with the displacement as point data.
inline void write_vtk(const std::string& path, const ShellModel& model, const Vector& u, int n1 = 51, int n2 = 11,
                      const std::function<double(double, double)>& scalar = {}, const std::string& scalar_name = "value") {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  os.precision(10);
  const auto& p = model.patch();
  os << "# vtk DataFile Version 3.0\nshell mid-surface\nASCII\nDATASET STRUCTURED_GRID\n";
  os << "DIMENSIONS " << n1 << ' ' << n2 << " 1\nPOINTS " << n1 * n2 << " double\n";
  std::vector<Vec3> disp;
  std::vector<double> vals;
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n1; ++i) {
      const double t1 = p.u.front() + (p.u.back() - p.u.front()) * i / (n1 - 1);
      const double t2 = p.v.front() + (p.v.back() - p.v.front()) * j / (n2 - 1);
      const Vec3 d = displacement_at(model, u, t1, t2);
      const Vec3 x = eval_surface(p, t1, t2, 0).value + d;
      os << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
      disp.push_back(d);
      if (scalar) vals.push_back(scalar(t1, t2));
    }
  os << "POINT_DATA " << n1 * n2 << "\nVECTORS displacement double\n";
  for (const auto& d : disp) os << d[0] << ' ' << d[1] << ' ' << d[2] << '\n';
  if (scalar) {
    os << "SCALARS " << scalar_name << " double 1\nLOOKUP_TABLE default\n";
    for (double v : vals) os << v << '\n';
  }
}

}  // namespace mtf
