#pragma once

// Univariate and tensor-product B-splines: basis evaluation (Cox-de Boor),
// Greville abscissae, knot insertion, degree elevation, surface evaluation.

#include "mtf/core.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <array>
#include <span>
#include <sstream>

namespace mtf {

inline constexpr int kMaxDegree = 10;
inline constexpr int kMaxDerivative = 2;

/// Open knot vector with degree p and m basis functions (m + p + 1 knots).
class KnotVector {
 public:
  KnotVector() = default;

  KnotVector(std::vector<double> knots, int degree) : knots_(std::move(knots)), degree_(degree) {
    if (degree_ < 0 || degree_ > kMaxDegree)
      throw DomainError("KnotVector: degree out of supported range [0, " + std::to_string(kMaxDegree) + "]");
    const int n = static_cast<int>(knots_.size());
    if (n < 2 * (degree_ + 1)) throw DomainError("KnotVector: too few knots for the degree");
    for (int i = 1; i < n; ++i)
      if (knots_[i] < knots_[i - 1]) throw DomainError("KnotVector: knots must be nondecreasing");
    for (int i = 1; i <= degree_; ++i)
      if (knots_[i] != knots_[0] || knots_[n - 1 - i] != knots_[n - 1])
        throw DomainError("KnotVector: knot vector must be open (p+1 repeated end knots)");
    if (!(knots_.back() > knots_.front())) throw DomainError("KnotVector: empty parametric domain");
    for (int i = 0; i + degree_ + 1 < n; ++i)
      if (knots_[i + degree_ + 1] == knots_[i]) throw DomainError("KnotVector: interior multiplicity exceeds p+1");
  }

  /// Open knot vector with @p spans uniform knot spans on [a, b] and maximum continuity.
  static KnotVector open_uniform(int degree, int spans, double a = 0.0, double b = 1.0) {
    if (spans < 1) throw DomainError("KnotVector::open_uniform: need at least one span");
    std::vector<double> k(degree + 1, a);
    for (int i = 1; i < spans; ++i) k.push_back(a + (b - a) * i / spans);
    k.insert(k.end(), degree + 1, b);
    return {std::move(k), degree};
  }

  [[nodiscard]] int degree() const { return degree_; }
  /// Number of basis functions m.
  [[nodiscard]] int size() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  [[nodiscard]] const std::vector<double>& knots() const { return knots_; }
  [[nodiscard]] double operator[](int i) const { return knots_[i]; }
  [[nodiscard]] double front() const { return knots_[degree_]; }
  [[nodiscard]] double back() const { return knots_[size()]; }

  [[nodiscard]] bool contains(double u) const { return u >= front() && u <= back(); }

  /// Index k of the span [xi_k, xi_{k+1}) containing u; the last span is closed on the right.
  [[nodiscard]] int find_span(double u) const {
    if (!contains(u)) {
      std::ostringstream msg;
      msg << "parametric coordinate " << u << " outside [" << front() << ", " << back() << "]";
      throw DomainError(msg.str());
    }
    const int m = size();
    if (u >= knots_[m]) {
      int k = m - 1;
      while (knots_[k] == knots_[k + 1]) --k;
      return k;
    }
    const auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + m + 1, u);
    return static_cast<int>(it - knots_.begin()) - 1;
  }

  [[nodiscard]] int multiplicity(double u) const {
    return static_cast<int>(std::count(knots_.begin(), knots_.end(), u));
  }

  /// Distinct knot values in increasing order.
  [[nodiscard]] std::vector<double> breakpoints() const {
    std::vector<double> b(knots_.begin() + degree_, knots_.begin() + size() + 1);
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
  }

  /// Nonzero knot spans [a, b) as pairs.
  [[nodiscard]] std::vector<std::pair<double, double>> spans() const {
    const auto b = breakpoints();
    std::vector<std::pair<double, double>> s;
    for (std::size_t i = 0; i + 1 < b.size(); ++i) s.emplace_back(b[i], b[i + 1]);
    return s;
  }

 private:
  std::vector<double> knots_;
  int degree_ = 0;
};

/// Values and derivatives (up to order 2) of the p+1 functions active at a point.
/// Function first + i has derivative of order k equal to d[k][i].
struct BasisDerivatives {
  int first = 0;
  int degree = 0;
  int order = 0;
  std::array<std::array<double, kMaxDegree + 1>, kMaxDerivative + 1> d{};

  [[nodiscard]] int count() const { return degree + 1; }
  [[nodiscard]] std::span<const double> values() const { return {d[0].data(), static_cast<std::size_t>(count())}; }
  [[nodiscard]] std::span<const double> derivative(int k) const {
    return {d[k].data(), static_cast<std::size_t>(count())};
  }
};

/// Active basis functions and their derivatives up to @p order at u (The NURBS Book, A2.3).
inline BasisDerivatives eval_basis_derivatives(const KnotVector& kv, double u, int order) {
  if (order < 0 || order > kMaxDerivative)
    throw UnsupportedError("eval_basis_derivatives: derivative order " + std::to_string(order) + " unsupported");
  const int p = kv.degree();
  const int span = kv.find_span(u);
  BasisDerivatives out;
  out.first = span - p;
  out.degree = p;
  out.order = order;

  std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1> ndu{};
  std::array<double, kMaxDegree + 1> left{}, right{};
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - kv[span + 1 - j];
    right[j] = kv[span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int j = 0; j <= p; ++j) out.d[0][j] = ndu[j][p];

  std::array<std::array<double, kMaxDegree + 1>, 2> a{};
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= order; ++k) {
      double dk = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        dk = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        dk += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        dk += a[s2][k] * ndu[r][pk];
      }
      out.d[k][r] = dk;
      std::swap(s1, s2);
    }
  }
  int factor = p;
  for (int k = 1; k <= order; ++k) {
    for (int j = 0; j <= p; ++j) out.d[k][j] *= factor;
    factor *= (p - k);
  }
  return out;
}

/// Values of the p+1 functions active at u.
inline BasisDerivatives eval_basis(const KnotVector& kv, double u) { return eval_basis_derivatives(kv, u, 0); }

/// Knot averages xi~_i = (xi_{i+1} + ... + xi_{i+p}) / p, one per basis function.
inline std::vector<double> greville_abscissae(const KnotVector& kv) {
  const int p = kv.degree();
  if (p < 1) throw DomainError("greville_abscissae: degree must be at least 1");
  std::vector<double> g(kv.size());
  for (int i = 0; i < kv.size(); ++i) {
    double s = 0.0;
    for (int k = 1; k <= p; ++k) s += kv[i + k];
    g[i] = std::clamp(s / p, kv.front(), kv.back());
  }
  return g;
}

/// Sparse collocation matrix A(i, k) = N_k(points[i]).
inline Eigen::SparseMatrix<double> collocation_matrix(const KnotVector& kv, std::span<const double> points) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto b = eval_basis(kv, points[i]);
    for (int k = 0; k < b.count(); ++k)
      if (b.d[0][k] != 0.0) trip.emplace_back(static_cast<int>(i), b.first + k, b.d[0][k]);
  }
  Eigen::SparseMatrix<double> a(static_cast<int>(points.size()), kv.size());
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

/// Tensor-product B-spline surface with control net in row-major order (theta^1 fastest).
struct BSplinePatch {
  KnotVector u;
  KnotVector v;
  std::vector<Vec3> control;

  BSplinePatch() = default;
  BSplinePatch(KnotVector ku, KnotVector kv, std::vector<Vec3> net)
      : u(std::move(ku)), v(std::move(kv)), control(std::move(net)) {
    if (static_cast<int>(control.size()) != u.size() * v.size())
      throw DomainError("BSplinePatch: control net size " + std::to_string(control.size()) + " does not match " +
                        std::to_string(u.size()) + " x " + std::to_string(v.size()));
  }

  [[nodiscard]] int count1() const { return u.size(); }
  [[nodiscard]] int count2() const { return v.size(); }
  [[nodiscard]] int size() const { return count1() * count2(); }
  [[nodiscard]] int index(int i, int j) const { return i + count1() * j; }
  [[nodiscard]] const KnotVector& knots(int direction) const { return direction == 0 ? u : v; }
};

/// Active bivariate functions at a point with derivatives. Arrays are indexed by
/// local function number; index[] holds the global (row-major) function number.
struct TensorBasis {
  std::vector<int> index;
  std::vector<double> n, n1, n2, n11, n12, n22;
  [[nodiscard]] std::size_t size() const { return index.size(); }
};

inline TensorBasis tensor_basis(const KnotVector& ku, const KnotVector& kv, double t1, double t2, int order = 2) {
  const auto bu = eval_basis_derivatives(ku, t1, order);
  const auto bv = eval_basis_derivatives(kv, t2, order);
  const int nu = bu.count(), nv = bv.count();
  TensorBasis tb;
  const std::size_t n = static_cast<std::size_t>(nu) * nv;
  tb.index.resize(n);
  tb.n.resize(n);
  if (order >= 1) {
    tb.n1.resize(n);
    tb.n2.resize(n);
  }
  if (order >= 2) {
    tb.n11.resize(n);
    tb.n12.resize(n);
    tb.n22.resize(n);
  }
  const int m1 = ku.size();
  for (int b = 0; b < nv; ++b) {
    for (int a = 0; a < nu; ++a) {
      const std::size_t l = static_cast<std::size_t>(a) + static_cast<std::size_t>(nu) * b;
      tb.index[l] = (bu.first + a) + m1 * (bv.first + b);
      tb.n[l] = bu.d[0][a] * bv.d[0][b];
      if (order >= 1) {
        tb.n1[l] = bu.d[1][a] * bv.d[0][b];
        tb.n2[l] = bu.d[0][a] * bv.d[1][b];
      }
      if (order >= 2) {
        tb.n11[l] = bu.d[2][a] * bv.d[0][b];
        tb.n12[l] = bu.d[1][a] * bv.d[1][b];
        tb.n22[l] = bu.d[0][a] * bv.d[2][b];
      }
    }
  }
  return tb;
}

inline TensorBasis tensor_basis(const BSplinePatch& patch, double t1, double t2, int order = 2) {
  return tensor_basis(patch.u, patch.v, t1, t2, order);
}

/// Value and partial derivatives of a spline field; unused orders stay zero.
template <class T>
struct FieldDerivatives {
  T value, d1, d2, d11, d12, d22;
};

template <class T>
inline T zero_like() {
  if constexpr (std::is_arithmetic_v<T>)
    return T{0};
  else
    return T::Zero();
}

/// Evaluates sum_i N_i(t1, t2) c_i and its derivatives for any coefficient type.
template <class T>
FieldDerivatives<T> eval_field(const KnotVector& ku, const KnotVector& kv, std::span<const T> coeffs, double t1,
                               double t2, int order = 2) {
  if (static_cast<int>(coeffs.size()) != ku.size() * kv.size())
    throw DomainError("eval_field: coefficient count does not match the basis");
  const auto tb = tensor_basis(ku, kv, t1, t2, order);
  FieldDerivatives<T> f{zero_like<T>(), zero_like<T>(), zero_like<T>(), zero_like<T>(), zero_like<T>(),
                        zero_like<T>()};
  for (std::size_t l = 0; l < tb.size(); ++l) {
    const T& c = coeffs[tb.index[l]];
    f.value += tb.n[l] * c;
    if (order >= 1) {
      f.d1 += tb.n1[l] * c;
      f.d2 += tb.n2[l] * c;
    }
    if (order >= 2) {
      f.d11 += tb.n11[l] * c;
      f.d12 += tb.n12[l] * c;
      f.d22 += tb.n22[l] * c;
    }
  }
  return f;
}

using SurfacePoint = FieldDerivatives<Vec3>;

/// Position r and partial derivatives r_{,a}, r_{,ab} of the patch at (t1, t2).
inline SurfacePoint eval_surface(const BSplinePatch& patch, double t1, double t2, int order = 2) {
  return eval_field<Vec3>(patch.u, patch.v, patch.control, t1, t2, order);
}

namespace detail {

/// Boehm insertion of u (once) into a curve with control points ctrl.
template <class T>
std::vector<T> insert_knot_curve(const KnotVector& kv, const std::vector<T>& ctrl, double u) {
  const int p = kv.degree();
  const int k = kv.find_span(u);
  const int s = kv.multiplicity(u);
  std::vector<T> out(ctrl.size() + 1);
  for (int i = 0; i <= k - p; ++i) out[i] = ctrl[i];
  for (int i = k - p + 1; i <= k - s; ++i) {
    const double alpha = (u - kv[i]) / (kv[i + p] - kv[i]);
    out[i] = alpha * ctrl[i] + (1.0 - alpha) * ctrl[i - 1];
  }
  for (int i = k - s + 1; i <= static_cast<int>(ctrl.size()); ++i) out[i] = ctrl[i - 1];
  return out;
}

inline KnotVector insert_into(const KnotVector& kv, double u) {
  auto k = kv.knots();
  k.insert(std::upper_bound(k.begin(), k.end(), u), u);
  return {std::move(k), kv.degree()};
}

inline KnotVector elevated(const KnotVector& kv) {
  std::vector<double> k;
  const auto& old = kv.knots();
  for (std::size_t i = 0; i < old.size(); ++i) {
    k.push_back(old[i]);
    if (i + 1 == old.size() || old[i + 1] != old[i]) k.push_back(old[i]);
  }
  return {std::move(k), kv.degree() + 1};
}

/// Applies op to every row of the net along @p direction and reassembles the patch.
template <class Op>
BSplinePatch map_rows(const BSplinePatch& patch, int direction, const KnotVector& new_kv, Op op) {
  const int m1 = patch.count1(), m2 = patch.count2();
  std::vector<Vec3> net;
  if (direction == 0) {
    net.resize(static_cast<std::size_t>(new_kv.size()) * m2);
    for (int j = 0; j < m2; ++j) {
      std::vector<Vec3> row(m1);
      for (int i = 0; i < m1; ++i) row[i] = patch.control[patch.index(i, j)];
      const auto out = op(row);
      for (int i = 0; i < new_kv.size(); ++i) net[i + new_kv.size() * j] = out[i];
    }
    return {new_kv, patch.v, std::move(net)};
  }
  net.resize(static_cast<std::size_t>(m1) * new_kv.size());
  for (int i = 0; i < m1; ++i) {
    std::vector<Vec3> col(m2);
    for (int j = 0; j < m2; ++j) col[j] = patch.control[patch.index(i, j)];
    const auto out = op(col);
    for (int j = 0; j < new_kv.size(); ++j) net[i + m1 * j] = out[j];
  }
  return {patch.u, new_kv, std::move(net)};
}

}  // namespace detail

/// Inserts u once in the given direction (0 or 1); geometry is unchanged.
inline BSplinePatch insert_knot(const BSplinePatch& patch, int direction, double u) {
  const KnotVector& kv = patch.knots(direction);
  if (!(u > kv.front() && u < kv.back()))
    throw DomainError("insert_knot: knot must lie strictly inside the parametric domain");
  if (kv.multiplicity(u) >= kv.degree())
    throw DomainError("insert_knot: multiplicity would exceed the degree");
  const KnotVector nk = detail::insert_into(kv, u);
  return detail::map_rows(patch, direction, nk,
                          [&](const std::vector<Vec3>& row) { return detail::insert_knot_curve(kv, row, u); });
}

/// Raises the degree in one direction by one, keeping the geometry and the continuity.
/// New control points solve the interpolation problem at the new Greville points; the old
/// spline lies in the elevated space so the interpolant reproduces it exactly.
inline BSplinePatch elevate_degree(const BSplinePatch& patch, int direction) {
  const KnotVector& kv = patch.knots(direction);
  if (kv.degree() + 1 > kMaxDegree) throw UnsupportedError("elevate_degree: degree limit reached");
  const KnotVector nk = detail::elevated(kv);
  const auto g = greville_abscissae(nk);
  const Eigen::MatrixXd a = Eigen::MatrixXd(collocation_matrix(nk, g));
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  return detail::map_rows(patch, direction, nk, [&](const std::vector<Vec3>& row) {
    Eigen::MatrixXd rhs(g.size(), 3);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto b = eval_basis(kv, g[i]);
      Vec3 x = Vec3::Zero();
      for (int k = 0; k < b.count(); ++k) x += b.d[0][k] * row[b.first + k];
      rhs.row(static_cast<Eigen::Index>(i)) = x.transpose();
    }
    const Eigen::MatrixXd sol = lu.solve(rhs);
    std::vector<Vec3> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = sol.row(static_cast<Eigen::Index>(i)).transpose();
    return out;
  });
}

/// Splits every nonzero knot span in @p direction into @p parts equal sub-spans.
inline BSplinePatch refine_uniform(BSplinePatch patch, int direction, int parts) {
  if (parts < 1) throw DomainError("refine_uniform: parts must be positive");
  const auto spans = patch.knots(direction).spans();
  for (const auto& [a, b] : spans)
    for (int k = 1; k < parts; ++k) patch = insert_knot(patch, direction, a + (b - a) * k / parts);
  return patch;
}

/// Elevates to the requested degrees, then subdivides each span into the requested parts.
inline BSplinePatch refine(BSplinePatch patch, int degree1, int degree2, int parts1, int parts2) {
  while (patch.u.degree() < degree1) patch = elevate_degree(patch, 0);
  while (patch.v.degree() < degree2) patch = elevate_degree(patch, 1);
  patch = refine_uniform(std::move(patch), 0, parts1);
  return refine_uniform(std::move(patch), 1, parts2);
}

/// Flat rectangle [0, l1] x [0, l2] in the XY plane with uniform open knots on [0, 1]^2.
/// Control points sit at the Greville images, so the map is affine.
inline BSplinePatch rectangle_patch(double l1, double l2, int degree1, int degree2, int spans1, int spans2) {
  KnotVector ku = KnotVector::open_uniform(degree1, spans1);
  KnotVector kv = KnotVector::open_uniform(degree2, spans2);
  const auto g1 = greville_abscissae(ku), g2 = greville_abscissae(kv);
  std::vector<Vec3> net;
  net.reserve(g1.size() * g2.size());
  for (double y : g2)
    for (double x : g1) net.emplace_back(l1 * x, l2 * y, 0.0);
  return {std::move(ku), std::move(kv), std::move(net)};
}

/// Interpolates f(t1, t2) at the tensor Greville points; returns row-major coefficients.
template <class T, class F>
std::vector<T> interpolate_greville(const KnotVector& ku, const KnotVector& kv, F&& f) {
  const auto g1 = greville_abscissae(ku), g2 = greville_abscissae(kv);
  const Eigen::MatrixXd a1 = Eigen::MatrixXd(collocation_matrix(ku, g1));
  const Eigen::MatrixXd a2 = Eigen::MatrixXd(collocation_matrix(kv, g2));
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu1(a1), lu2(a2);
  constexpr int dim = [] {
    if constexpr (std::is_arithmetic_v<T>)
      return 1;
    else
      return static_cast<int>(T::RowsAtCompileTime);
  }();
  const int m1 = ku.size(), m2 = kv.size();
  std::vector<T> out(static_cast<std::size_t>(m1) * m2);
  for (int c = 0; c < dim; ++c) {
    Eigen::MatrixXd vals(m1, m2);
    for (int j = 0; j < m2; ++j)
      for (int i = 0; i < m1; ++i) {
        const T x = f(g1[i], g2[j]);
        if constexpr (std::is_arithmetic_v<T>)
          vals(i, j) = x;
        else
          vals(i, j) = x[c];
      }
    // (A2 kron A1) X = V  <=>  A1 Xmat A2^T = Vmat
    const Eigen::MatrixXd y = lu1.solve(vals);
    const Eigen::MatrixXd x = lu2.solve(y.transpose()).transpose();
    for (int j = 0; j < m2; ++j)
      for (int i = 0; i < m1; ++i) {
        if constexpr (std::is_arithmetic_v<T>)
          out[i + m1 * j] = x(i, j);
        else
          out[i + m1 * j][c] = x(i, j);
      }
  }
  return out;
}

}  // namespace mtf
