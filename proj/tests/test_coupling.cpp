#include "mtf/coupling.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mtf;

namespace {

LayerStack bilayer() {
  LayerStack s;
  s.layers.push_back({0.018, NeoHookean{500.0, std::nullopt}, 0.965, false});
  s.layers.push_back({0.004, NeoHookean{0.767, FiberAnisotropy{21.0, 5.5}}, 0.965, true});
  return s;
}

ShellModel strip(int n1, int n2) {
  ShellModel m(rectangle_patch(3.5, 2.0, 2, 2, n1, n2), bilayer());
  m.clamp_edge(0);
  return m;
}

StimulusProtocol left_edge_pulse(double amplitude) {
  StimulusEvent e;
  e.kind = StimulusKind::boundary;
  e.edge = 0;
  e.amplitude = amplitude;
  e.start = 0.0;
  e.duration = 5.0;
  return {{e}};
}

/// Dense sum over every bivariate function, each from its own univariate evaluation.
double summation_oracle(const BSplinePatch& p, const Vector& c, double t1, double t2) {
  const auto bu = eval_basis(p.u, t1);
  const auto bv = eval_basis(p.v, t2);
  double sum = 0.0;
  for (int j = 0; j < p.count2(); ++j)
    for (int i = 0; i < p.count1(); ++i) {
      const int a = i - bu.first, b = j - bv.first;
      if (a < 0 || a >= bu.count() || b < 0 || b >= bv.count()) continue;
      sum += bu.d[0][a] * bv.d[0][b] * c[p.index(i, j)];
    }
  return sum;
}

}  // namespace

TEST(CouplingSchedule, CountsFromStepTotals) {
  const auto s = CouplingSchedule::from_counts(2000.0, 400, 100000);
  EXPECT_EQ(s.substeps, 250);
  EXPECT_DOUBLE_EQ(s.dt, 5.0);
  EXPECT_DOUBLE_EQ(s.dt_e(), 0.02);
  EXPECT_EQ(s.ep_steps(), 100000);
  EXPECT_EQ(s.end(), 2000.0);
  for (int i = 0; i <= s.steps; ++i) ASSERT_EQ(s.time(i), 5.0 * i);
  EXPECT_THROW(CouplingSchedule::from_counts(2000.0, 400, 100001), ConfigError);
  EXPECT_EQ(CouplingSchedule::over(500.0, 5.0, 250).steps, 100);
  EXPECT_THROW(CouplingSchedule::over(501.0, 5.0, 250), ConfigError);
  EXPECT_THROW((CouplingSchedule{5.0, 0, 10}.validate()), ConfigError);
}

TEST(ActivationProjection, ConstantField) {
  const auto g = make_collocation_grid(rectangle_patch(3.5, 2.0, 2, 2, 7, 4));
  const Vector c = project_activation(g, Vector::Constant(g.size(), 4.25));
  EXPECT_LT((c.array() - 4.25).abs().maxCoeff(), 1e-12);
}

TEST(ActivationProjection, RecoversSplineCoefficients) {
  const auto g = make_collocation_grid(rectangle_patch(3.5, 2.0, 3, 2, 6, 5));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  Vector c(g.size());
  for (auto& x : c) x = d(rng);
  const ActivationProjector proj(g);
  EXPECT_LT((proj.project(proj.evaluation() * c) - c).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(project_activation(g, Vector::Zero(3)), DomainError);
}

TEST(ActivationProjection, ReproducesParametricPolynomials) {
  const auto patch = rectangle_patch(1.0, 1.0, 3, 3, 5, 4);
  const auto g = make_collocation_grid(patch);
  const auto f = [](double s, double t) { return s * s * s - 2.0 * s * t * t + t + 1.0 + 3.0 * s * s * t * t * t; };
  Vector values(g.size());
  for (int j = 0; j < g.size(); ++j)
    values[j] = f(g.params[static_cast<std::size_t>(j)][0], g.params[static_cast<std::size_t>(j)][1]);
  ActivationField field{std::make_shared<const BSplinePatch>(patch), 0.0, 1.0, project_activation(g, values), {}};
  field.c1 = field.c0;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double s = d(rng), t = d(rng);
    EXPECT_NEAR(field.evaluate(s, t, 0.5), f(s, t), 1e-9);
  }
}

TEST(ActivationField, TimeInterpolation) {
  const auto patch = refine(rectangle_patch(3.5, 2.0, 2, 2, 1, 1), 2, 2, 5, 3);
  const int n = patch.size();
  ActivationField field{std::make_shared<const BSplinePatch>(patch), 10.0, 15.0, Vector::LinSpaced(n, 0.0, 3.0),
                        Vector::LinSpaced(n, 1.0, 7.0)};
  const double th1 = 0.37, th2 = 0.81;
  EXPECT_EQ(field.evaluate(th1, th2, 10.0), field.evaluate(th1, th2, 1.0, 0.0));
  const double a = field.evaluate(th1, th2, 10.0), b = field.evaluate(th1, th2, 15.0);
  EXPECT_NEAR(field.evaluate(th1, th2, 11.0), 0.8 * a + 0.2 * b, 1e-13);
  EXPECT_THROW((void)field.evaluate(th1, th2, 15.5), DomainError);
  ActivationField steady = field;
  steady.c1 = steady.c0;
  EXPECT_EQ(steady.evaluate(th1, th2, 12.5), steady.evaluate(th1, th2, 14.0));
}

TEST(ActivationField, QuadraturePointsMatchSummationOracle) {
  // mechanics and EP meshes with unrelated knot lines
  const ShellModel model = strip(7, 3);
  const auto ep_patch = refine(rectangle_patch(3.5, 2.0, 2, 2, 1, 1), 2, 2, 11, 6);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(0.0, 12.0);
  Vector c(ep_patch.size());
  for (auto& x : c) x = d(rng);
  const Vector q = quadrature_sampler(model, ep_patch) * c;
  for (std::size_t k = 0; k < model.quad_points().size(); ++k) {
    const auto& qp = model.quad_points()[k];
    EXPECT_NEAR(q[static_cast<Eigen::Index>(k)], summation_oracle(ep_patch, c, qp.t1, qp.t2), 1e-12);
  }
}

TEST(ActivationField, ProjectionErrorShrinksUnderRefinement) {
  // smooth sigma_a profile sampled on successively refined EP meshes, compared at the
  // quadrature points of a fixed mechanics mesh
  const ShellModel model = strip(10, 4);
  const auto sigma = [](const Vec3& x) { return 6.0 + 6.0 * std::tanh(2.0 * (x.x() - 1.2)) * std::cos(x.y()); };
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {4, 8, 16, 32}) {
    const auto g = make_collocation_grid(rectangle_patch(3.5, 2.0, 2, 2, n, n));
    Vector values(g.size());
    for (int j = 0; j < g.size(); ++j) values[j] = sigma(g.points[static_cast<std::size_t>(j)]);
    const Vector q = quadrature_sampler(model, g.patch) * project_activation(g, values);
    double err = 0.0;
    for (std::size_t k = 0; k < model.quad_points().size(); ++k) {
      const auto& qp = model.quad_points()[k];
      const Vec3 x = eval_surface(model.patch(), qp.t1, qp.t2, 0).value;
      err = std::max(err, std::abs(q[static_cast<Eigen::Index>(k)] - sigma(x)));
    }
    RecordProperty("projection_error_" + std::to_string(n), std::to_string(err));
    EXPECT_LT(err, prev) << n;
    prev = err;
  }
}

TEST(CoSimulation, ZeroStimulusStaysAtRest) {
  const ShellModel model = strip(6, 2);
  MonodomainOptions opt;
  opt.dt = 0.25;
  const MonodomainSolver ep(make_collocation_grid(rectangle_patch(3.5, 2.0, 2, 2, 10, 6)), {}, {}, {}, opt);
  const CouplingSchedule schedule{5.0, 20, 10};
  const auto run = co_simulate(model, ep, schedule, {});
  EXPECT_EQ(run.ep.step, 200);
  EXPECT_EQ(run.mechanics.step, 10);
  // roundoff of the EP solve only; contractions are of order 1 mm
  EXPECT_LT(run.ep.sigma.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(run.mechanics.u.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(CoSimulation, ScheduleAlignmentAndOneWayCausality) {
  const ShellModel model = strip(6, 2);
  MonodomainOptions opt;
  opt.dt = 0.25;
  const MonodomainSolver ep(make_collocation_grid(rectangle_patch(3.5, 2.0, 2, 2, 12, 6)), {}, {},
                            left_edge_pulse(2.0), opt);
  const CouplingSchedule schedule{5.0, 20, 24};
  std::vector<double> tip;
  const auto coupled = co_simulate(model, ep, schedule, {}, [&](const CoupledSample& s) {
    ASSERT_EQ(s.time, 5.0 * s.step);
    ASSERT_EQ(s.ep->step, 20L * s.step);
    ASSERT_NE(s.mechanics, nullptr);
    tip.push_back(s.mechanics->u.cwiseAbs().maxCoeff());
  });
  CoupledOptions off;
  off.run_mechanics = false;
  const auto alone = co_simulate(model, ep, schedule, off, [](const CoupledSample& s) {
    ASSERT_EQ(s.mechanics, nullptr);
  });
  for (Eigen::Index j = 0; j < alone.ep.v_hat.size(); ++j) {
    ASSERT_EQ(alone.ep.v_hat[j], coupled.ep.v_hat[j]);
    ASSERT_EQ(alone.ep.sigma[j], coupled.ep.sigma[j]);
  }
  for (const auto& r : coupled.reports) EXPECT_TRUE(r.converged);
  // the excitation contracts the film
  EXPECT_GT(*std::max_element(tip.begin(), tip.end()), 1e-3);
  EXPECT_EQ(tip.front(), 0.0);
}

TEST(CoSimulation, RejectsMismatchedStep) {
  const ShellModel model = strip(4, 2);
  const MonodomainSolver ep(make_collocation_grid(rectangle_patch(3.5, 2.0, 2, 2, 6, 4)), {}, {}, {}, {});
  EXPECT_THROW(co_simulate(model, ep, CouplingSchedule{5.0, 100, 1}, {}), ConfigError);
}

TEST(CoSimulation, ManifestRecordsBothMeshes) {
  const ShellModel model = strip(5, 2);
  const MonodomainSolver ep(make_collocation_grid(rectangle_patch(3.5, 2.0, 2, 2, 9, 6)), {}, {}, {}, {});
  const auto m = coupling_manifest(model, ep, CouplingSchedule{5.0, 250, 400}, {});
  EXPECT_EQ(m["mechanics_mesh"]["spans"][0], 5);
  EXPECT_EQ(m["ep_mesh"]["spans"][0], 9);
  EXPECT_EQ(m["substeps"], 250);
  EXPECT_DOUBLE_EQ(m["dt_e"].get<double>(), 0.02);
  EXPECT_TRUE(m.contains("newton"));
}
