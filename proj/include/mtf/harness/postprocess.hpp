#pragma once

// Post-processing for cantilever films: curvature from the projected length of the
// deformed mid-axis, the modified Stoney estimate and the fundamental bending period.

#include "mtf/shell.hpp"

#include <numbers>

namespace mtf::harness {

struct CurvatureResult {
  double x_bar = 0.0;      ///< projected length (mm)
  double radius = 0.0;     ///< mm, infinite for a straight film
  double curvature = 0.0;  ///< 1/mm
};

/// Radius of the circular arc of length @p length whose chord projection is @p x_bar.
/// Beyond half a turn (x_bar <= L/pi) the projection is the diameter-limited branch R = x_bar.
inline CurvatureResult curvature_from_projection(double x_bar, double length) {
  if (!(length > 0.0)) throw DomainError("curvature: film length must be positive");
  if (!(x_bar >= 0.0)) throw DomainError("curvature: projected length must be nonnegative");
  if (x_bar > length * (1.0 + 1e-12))
    throw DomainError("curvature: projected length " + std::to_string(x_bar) + " exceeds the film length");
  CurvatureResult r;
  r.x_bar = x_bar;
  if (x_bar <= length / std::numbers::pi) {
    r.radius = x_bar;
    r.curvature = x_bar > 0.0 ? 1.0 / x_bar : std::numeric_limits<double>::infinity();
    return r;
  }
  // R sin(L/R) increases monotonically from L/pi to L on this bracket
  const auto f = [&](double radius) { return radius * std::sin(length / radius) - x_bar; };
  double lo = length / std::numbers::pi, hi = 1e6 * length;
  if (f(hi) <= 0.0) {
    r.radius = std::numeric_limits<double>::infinity();
    r.curvature = 0.0;
    return r;
  }
  while ((hi - lo) > 1e-10 * lo) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  r.radius = 0.5 * (lo + hi);
  r.curvature = 1.0 / r.radius;
  return r;
}

/// Curvature from deformed mid-axis points ordered from the clamped end. x_bar is the forward
/// reach max X - X(clamp): the tip for curls up to a quarter turn, the radius beyond, and it
/// ignores material that curls back behind the clamp past half a turn.
inline CurvatureResult curvature_from_deflection(const std::vector<Vec3>& axis, double length) {
  if (axis.size() < 2) throw DomainError("curvature: need at least two mid-axis samples");
  double hi = axis.front().x();
  for (const Vec3& x : axis) hi = std::max(hi, x.x());
  return curvature_from_projection(hi - axis.front().x(), length);
}

/// Deformed positions of @p samples points along the line Y = @p y of the reference mid-surface.
inline std::vector<Vec3> mid_axis(const ShellModel& model, const Vector& u, double y, int samples = 200) {
  if (samples < 2) throw DomainError("mid_axis: need at least two samples");
  const auto& p = model.patch();
  const double x0 = eval_surface(p, p.u.front(), p.v.front(), 0).value.x();
  const double x1 = eval_surface(p, p.u.back(), p.v.front(), 0).value.x();
  const double t2 = invert_point(p, Vec3(0.5 * (x0 + x1), y, 0.0))[1];
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double t1 = p.u.front() + (p.u.back() - p.u.front()) * i / (samples - 1);
    out.push_back(eval_surface(p, t1, t2, 0).value + displacement_at(model, u, t1, t2));
  }
  return out;
}

/// Modified Stoney curvature of an active bilayer (thicknesses in the same length unit).
inline double stoney_curvature(double mu_a, double e_p, double lambda0, double mu_s, double d_s, double d_a) {
  if (!(mu_s > 0.0 && d_s > 0.0 && lambda0 > 0.0) || d_a < 0.0 || mu_a < 0.0 || e_p < 0.0)
    throw DomainError("stoney: inputs must be positive");
  const double r = d_a / d_s;
  return 6.0 * (3.0 * mu_a + e_p) * std::log(lambda0) / (3.0 * mu_s * d_s) * r * (1.0 + r);
}

/// Lowest natural period 2 pi / omega of the constrained model linearized at rest,
/// from inverse iteration on K x = omega^2 M x.
inline double fundamental_period(const ShellModel& model, int iterations = 200, double tol = 1e-10) {
  ReducedSolver solver(model);
  const ShellAssembly a = assemble(model, Vector::Zero(model.dofs()));
  const SparseMatrix k = solver.restrict_matrix(a.tangent);
  const SparseMatrix m = solver.restrict_matrix(mass_matrix(model));
  solver.factorize(k);
  Vector x = Vector::Ones(solver.size());
  double omega2 = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector y = solver.solve(m * x);
    y /= std::sqrt(y.dot(m * y));
    const double next = y.dot(k * y);
    x = std::move(y);
    if (it > 0 && std::abs(next - omega2) <= tol * next) {
      omega2 = next;
      break;
    }
    omega2 = next;
  }
  return 2.0 * std::numbers::pi / std::sqrt(omega2);
}

}  // namespace mtf::harness
