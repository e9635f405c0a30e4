#pragma once

// Differential geometry of B-spline surfaces: bases, metric, curvature,
// Christoffel symbols, and the surface Laplace-Beltrami operator.

#include "mtf/splines.hpp"

#include <optional>

namespace mtf {

inline constexpr double kDegenerateJacobian = 1e-14;

/// Local frame of a surface point. Indices are zero-based: a[0] = a_1, a[1] = a_2.
struct SurfaceFrame {
  Vec3 r = Vec3::Zero();
  std::array<Vec3, 2> a{};           ///< covariant a_alpha
  Vec3 a3 = Vec3::UnitZ();           ///< unit normal (a_1 x a_2)/|a_1 x a_2|
  double jacobian = 0.0;             ///< |a_1 x a_2|, area element
  Mat2 metric = Mat2::Identity();    ///< a_{alpha beta}
  Mat2 metric_inv = Mat2::Identity();///< a^{alpha beta}
  std::array<Vec3, 2> a_contra{};    ///< contravariant a^alpha
  std::array<std::array<Vec3, 2>, 2> da{};  ///< a_{alpha,beta}
  Mat2 curvature = Mat2::Zero();     ///< b_{alpha beta} = a_{alpha,beta} . a3
  /// Gamma^alpha_{beta k}; k = 2 holds the through-thickness slot -b_{beta gamma} a^{gamma alpha}.
  std::array<std::array<std::array<double, 3>, 2>, 2> christoffel{};

  [[nodiscard]] double gamma(int alpha, int beta, int k) const { return christoffel[alpha][beta][k]; }
};

/// Builds the frame from a position and its first and second parametric derivatives.
inline SurfaceFrame make_frame(const SurfacePoint& s) {
  SurfaceFrame f;
  f.r = s.value;
  f.a = {s.d1, s.d2};
  const Vec3 n = s.d1.cross(s.d2);
  f.jacobian = n.norm();
  if (!(f.jacobian >= kDegenerateJacobian))
    throw SingularGeometryError("degenerate surface point: |a1 x a2| = " + std::to_string(f.jacobian));
  f.a3 = n / f.jacobian;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) f.metric(i, j) = f.a[i].dot(f.a[j]);
  f.metric_inv = f.metric.inverse();
  for (int i = 0; i < 2; ++i) f.a_contra[i] = f.metric_inv(i, 0) * f.a[0] + f.metric_inv(i, 1) * f.a[1];
  f.da = {{{s.d11, s.d12}, {s.d12, s.d22}}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) f.curvature(i, j) = f.da[i][j].dot(f.a3);
  for (int al = 0; al < 2; ++al)
    for (int be = 0; be < 2; ++be) {
      for (int k = 0; k < 2; ++k) f.christoffel[al][be][k] = f.da[be][k].dot(f.a_contra[al]);
      // a_{3,beta} = -b_{beta gamma} a^gamma
      f.christoffel[al][be][2] = -(f.curvature(be, 0) * f.metric_inv(0, al) + f.curvature(be, 1) * f.metric_inv(1, al));
    }
  return f;
}

/// Frame of the patch at (t1, t2). With a displacement field (control displacements on the
/// patch basis) the frame describes the deformed configuration r + u.
inline SurfaceFrame frame_at(const BSplinePatch& patch, double t1, double t2,
                             std::optional<std::span<const Vec3>> displacement = std::nullopt) {
  if (!displacement) return make_frame(eval_surface(patch, t1, t2));
  if (static_cast<int>(displacement->size()) != patch.size())
    throw DomainError("frame_at: displacement field size does not match the patch");
  std::vector<Vec3> x(patch.control);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += (*displacement)[i];
  return make_frame(eval_field<Vec3>(patch.u, patch.v, x, t1, t2));
}

/// Gamma^alpha_{beta k} at (t1, t2).
inline std::array<std::array<std::array<double, 3>, 2>, 2> christoffel_at(const BSplinePatch& patch, double t1,
                                                                          double t2) {
  return frame_at(patch, t1, t2).christoffel;
}

/// Coefficients c_l with Delta v = sum_l c_l v_{index[l]} at the frame point:
/// Delta v = a^{ab} (v_{,ab} - Gamma^g_{ab} v_{,g}).
inline std::vector<double> laplace_beltrami_row(const SurfaceFrame& f, const TensorBasis& tb) {
  if (tb.n11.empty()) throw DomainError("laplace_beltrami_row: second derivatives required");
  const Mat2& h = f.metric_inv;
  // contracted Christoffel terms: c^g = a^{ab} Gamma^g_{ab}
  std::array<double, 2> c{};
  for (int g = 0; g < 2; ++g)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) c[g] += h(a, b) * f.christoffel[g][a][b];
  std::vector<double> row(tb.size());
  for (std::size_t l = 0; l < tb.size(); ++l)
    row[l] = h(0, 0) * tb.n11[l] + 2.0 * h(0, 1) * tb.n12[l] + h(1, 1) * tb.n22[l] - c[0] * tb.n1[l] - c[1] * tb.n2[l];
  return row;
}

/// Normal derivative row D a^alpha . n N_{,alpha} for an in-plane unit vector n.
inline std::vector<double> normal_flux_row(const SurfaceFrame& f, const TensorBasis& tb, const Vec3& normal,
                                           double diffusivity = 1.0) {
  const double c1 = diffusivity * f.a_contra[0].dot(normal);
  const double c2 = diffusivity * f.a_contra[1].dot(normal);
  std::vector<double> row(tb.size());
  for (std::size_t l = 0; l < tb.size(); ++l) row[l] = c1 * tb.n1[l] + c2 * tb.n2[l];
  return row;
}

/// Outward in-plane unit normal on a parametric edge: edge 0 = theta1 min, 1 = theta1 max,
/// 2 = theta2 min, 3 = theta2 max. The normal is -/+ a^alpha normalized.
inline Vec3 edge_normal(const SurfaceFrame& f, int edge) {
  const int alpha = edge / 2;
  const double sign = (edge % 2 == 0) ? -1.0 : 1.0;
  return sign * f.a_contra[alpha].normalized();
}

}  // namespace mtf
