#include "mtf/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mtf;

namespace {

BSplinePatch patch_from_map(const KnotVector& ku, const KnotVector& kv, const std::function<Vec3(double, double)>& f) {
  return {ku, kv, interpolate_greville<Vec3>(ku, kv, f)};
}

BSplinePatch table_c1_patch() {
  KnotVector k({0, 0, 0, 1, 1, 1}, 2);
  std::vector<Vec3> net = {{0.3, 0.3, 0}, {0.8, 0.3, 0}, {1.3, 0.3, 0}, {0.3, 0.8, 0}, {0.9, 0.9, 0},
                           {1.3, 0.8, 0}, {0.3, 1.3, 0}, {0.8, 1.3, 0}, {1.3, 1.3, 0}};
  return {k, k, net};
}

BSplinePatch wavy_patch() {
  return patch_from_map(KnotVector::open_uniform(4, 6), KnotVector::open_uniform(3, 5), [](double s, double t) {
    return Vec3(2.0 * s + 0.2 * t * t, t + 0.1 * s * t, 0.3 * std::sin(2.0 * s) * std::cos(t));
  });
}

}  // namespace

TEST(Frame, FlatIdentityPatch) {
  const auto p = rectangle_patch(1.0, 1.0, 2, 2, 1, 1);
  const auto f = frame_at(p, 0.3, 0.6);
  EXPECT_LT((f.a[0] - Vec3::UnitX()).norm(), 1e-14);
  EXPECT_LT((f.a[1] - Vec3::UnitY()).norm(), 1e-14);
  EXPECT_LT((f.a3 - Vec3::UnitZ()).norm(), 1e-14);
  EXPECT_LT((f.metric - Mat2::Identity()).norm(), 1e-14);
  EXPECT_LT(f.curvature.norm(), 1e-14);
  for (const auto& g1 : f.christoffel)
    for (const auto& g2 : g1)
      for (double g : g2) EXPECT_NEAR(g, 0.0, 1e-14);
}

TEST(Frame, ScaledMap) {
  const auto p = rectangle_patch(2.0, 1.0, 2, 2, 1, 1);
  const auto f = frame_at(p, 0.5, 0.5);
  EXPECT_NEAR(f.metric(0, 0), 4.0, 1e-14);
  EXPECT_NEAR(f.metric_inv(0, 0), 0.25, 1e-14);
}

TEST(Frame, CylinderOracle) {
  const double r = 2.0;
  const auto p = patch_from_map(KnotVector::open_uniform(5, 24, 0.0, 3.0), KnotVector::open_uniform(2, 1),
                                [r](double s, double t) { return Vec3(r * std::cos(s / r), r * std::sin(s / r), t); });
  for (double s : {0.4, 1.5, 2.7}) {
    const auto f = frame_at(p, s, 0.5);
    EXPECT_NEAR(f.metric(0, 0), 1.0, 1e-8);
    EXPECT_NEAR(f.metric(0, 1), 0.0, 1e-8);
    EXPECT_NEAR(f.metric(1, 1), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(f.curvature(0, 0)), 0.5, 1e-6);
    EXPECT_NEAR(f.curvature(0, 1), 0.0, 1e-8);
    EXPECT_NEAR(f.curvature(1, 1), 0.0, 1e-8);
  }
}

TEST(Frame, FrameInvariants) {
  const auto p = wavy_patch();
  for (double s : {0.0, 0.21, 0.5, 1.0})
    for (double t : {0.0, 0.37, 0.9}) {
      const auto f = frame_at(p, s, t);
      EXPECT_NEAR(f.a3.norm(), 1.0, 1e-14);
      for (int a = 0; a < 2; ++a) {
        EXPECT_NEAR(f.a3.dot(f.a[a]), 0.0, 1e-12);
        for (int b = 0; b < 2; ++b) EXPECT_NEAR(f.a_contra[a].dot(f.a[b]), a == b ? 1.0 : 0.0, 1e-12);
        // a_alpha = a_{alpha beta} a^beta
        const Vec3 back = f.metric(a, 0) * f.a_contra[0] + f.metric(a, 1) * f.a_contra[1];
        EXPECT_LT((back - f.a[a]).norm(), 1e-12);
      }
      EXPECT_LT((f.metric * f.metric_inv - Mat2::Identity()).norm(), 1e-12);
      EXPECT_NEAR(f.curvature(0, 1), f.curvature(1, 0), 1e-14);
    }
}

TEST(Frame, DisplacementFieldGivesDeformedFrame) {
  const auto p = rectangle_patch(1.0, 1.0, 2, 2, 2, 2);
  std::vector<Vec3> u(p.control.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = Vec3(0.5 * p.control[i].x(), 0.0, 0.0);
  const auto f = frame_at(p, 0.4, 0.4, std::span<const Vec3>(u));
  EXPECT_NEAR(f.metric(0, 0), 2.25, 1e-13);
  EXPECT_NEAR(f.metric(1, 1), 1.0, 1e-13);
}

TEST(Frame, DegeneratePointThrows) {
  KnotVector k({0, 0, 1, 1}, 1);
  BSplinePatch p(k, k, {{0, 0, 0}, {1, 0, 0}, {0, 0, 0}, {1, 0, 0}});
  EXPECT_THROW(frame_at(p, 0.5, 0.5), SingularGeometryError);
}

TEST(Christoffel, QuadraticMapOracle) {
  // r = ((t1)^2, t2, 0): g_1 = (2 t1, 0, 0), g_{1,1} = (2, 0, 0), g^1 = (1/(2 t1), 0, 0)
  const auto p = patch_from_map(KnotVector::open_uniform(2, 1), KnotVector::open_uniform(2, 1),
                                [](double s, double t) { return Vec3(s * s, t, 0.0); });
  const auto g = christoffel_at(p, 0.5, 0.3);
  EXPECT_NEAR(g[0][0][0], 2.0, 1e-12);
  EXPECT_NEAR(g[0][0][1], 0.0, 1e-12);
  EXPECT_NEAR(g[1][0][0], 0.0, 1e-12);
  EXPECT_NEAR(g[1][1][1], 0.0, 1e-12);
}

TEST(Christoffel, AffineMapsVanish) {
  const auto p = rectangle_patch(2.0, 3.0, 3, 3, 2, 2);
  const auto g = christoffel_at(p, 0.7, 0.2);
  for (const auto& g1 : g)
    for (const auto& g2 : g1)
      for (double x : g2) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(Christoffel, SymmetricAndMatchesContravariantDerivative) {
  const auto p = wavy_patch();
  const double h = 1e-6;
  for (double s : {0.2, 0.6})
    for (double t : {0.3, 0.8}) {
      const auto f = frame_at(p, s, t);
      for (int a = 0; a < 2; ++a)
        EXPECT_NEAR(f.christoffel[a][0][1], f.christoffel[a][1][0], 1e-12);
      // Gamma^i_{jk} = -g^i_{,k} . g_j by central differences of the contravariant vectors
      for (int k = 0; k < 2; ++k) {
        const double sp = s + (k == 0 ? h : 0.0), sm = s - (k == 0 ? h : 0.0);
        const double tp = t + (k == 1 ? h : 0.0), tm = t - (k == 1 ? h : 0.0);
        const auto fp = frame_at(p, sp, tp), fm = frame_at(p, sm, tm);
        for (int i = 0; i < 2; ++i) {
          const Vec3 dgi = (fp.a_contra[i] - fm.a_contra[i]) / (2 * h);
          for (int j = 0; j < 2; ++j) EXPECT_NEAR(f.christoffel[i][j][k], -dgi.dot(f.a[j]), 1e-7);
        }
      }
    }
}

TEST(Frame, RigidMotionInvariance) {
  const auto p = wavy_patch();
  const Mat3 q = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  BSplinePatch pr = p;
  for (auto& c : pr.control) c = q * c + Vec3(1, -2, 0.5);
  for (double s : {0.1, 0.75}) {
    const auto f = frame_at(p, s, 0.4), g = frame_at(pr, s, 0.4);
    for (int a = 0; a < 2; ++a) EXPECT_LT((q * f.a[a] - g.a[a]).norm(), 1e-10);
    EXPECT_LT((f.metric - g.metric).norm(), 1e-10);
    EXPECT_LT((f.curvature - g.curvature).norm(), 1e-10);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(f.christoffel[a][b][k], g.christoffel[a][b][k], 1e-10);
  }
}

TEST(LaplaceBeltrami, FlatPolynomials) {
  const auto p = rectangle_patch(1.0, 1.0, 2, 2, 3, 3);
  const auto quad = interpolate_greville<double>(p.u, p.v, [](double x, double y) { return x * x + y * y; });
  const auto lin = interpolate_greville<double>(p.u, p.v, [](double x, double y) { return 3.0 * x - y + 2.0; });
  for (double s : {0.1, 0.5, 0.93})
    for (double t : {0.2, 0.66}) {
      const auto f = frame_at(p, s, t);
      const auto tb = tensor_basis(p, s, t);
      const auto row = laplace_beltrami_row(f, tb);
      double lq = 0.0, ll = 0.0;
      for (std::size_t l = 0; l < tb.size(); ++l) {
        lq += row[l] * quad[tb.index[l]];
        ll += row[l] * lin[tb.index[l]];
      }
      EXPECT_NEAR(lq, 4.0, 1e-10);
      EXPECT_NEAR(ll, 0.0, 1e-10);
    }
}

TEST(LaplaceBeltrami, DistortedPatchMatchesDivergenceFormOracle) {
  // Delta v = J^{-1} (J a^{ab} v_{,b})_{,a}, with the outer derivative by central differences.
  auto p = refine(table_c1_patch(), 4, 4, 4, 4);
  const auto geom = table_c1_patch();
  const auto coeff = interpolate_greville<double>(p.u, p.v, [&](double s, double t) {
    const Vec3 x = eval_surface(geom, s, t, 0).value;
    return std::sin(std::numbers::pi * x.x()) * std::sin(std::numbers::pi * x.y());
  });
  const auto flux = [&](double s, double t) {
    const auto f = frame_at(p, s, t);
    const auto v = eval_field<double>(p.u, p.v, coeff, s, t, 1);
    const Vec2 grad(v.d1, v.d2);
    return Vec2(f.jacobian * (f.metric_inv * grad));
  };
  const double h = 1e-5;
  for (double s : {0.3, 0.55})
    for (double t : {0.25, 0.7}) {
      const auto f = frame_at(p, s, t);
      const auto tb = tensor_basis(p, s, t);
      const auto row = laplace_beltrami_row(f, tb);
      double lb = 0.0;
      for (std::size_t l = 0; l < tb.size(); ++l) lb += row[l] * coeff[tb.index[l]];
      const double div =
          ((flux(s + h, t)[0] - flux(s - h, t)[0]) + (flux(s, t + h)[1] - flux(s, t - h)[1])) / (2 * h) / f.jacobian;
      EXPECT_NEAR(lb, div, 1e-5 * std::max(1.0, std::abs(div)));
    }
}
