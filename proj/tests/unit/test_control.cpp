#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pidon/control/control.hpp"
#include "pidon/errors.hpp"
#include "pidon/nets/init.hpp"
#include "test_util.hpp"

namespace pidon {
namespace {

using ad::Mat;
using control::CostSpec;
using fields::Benchmark;
using std::numbers::pi;

nets::DeepONetParams surrogate(std::size_t branch, std::size_t dim, std::size_t outputs, std::uint64_t seed = 4) {
  nets::DeepONetArch a;
  a.branch_input = branch;
  a.coord_dim = dim;
  a.width = 5;
  a.depth = 3;
  a.outputs = outputs;
  a.latent = 4 * outputs;
  auto p = nets::init_deeponet(a, seed);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < p.params.count(); ++i) {
    if (p.params.name(i).ends_with(".b")) p.params.tensor(i) = test::random_mat(1, p.params.tensor(i).cols(), rng, 0.3);
  }
  return p;
}

Mat sensor_grid(std::size_t m, double hi = 1.0) {
  const auto x = fields::uniform_grid(0, hi, m);
  return Eigen::Map<const Mat>(x.data(), static_cast<ad::Index>(m), 1);
}

nets::MlpParams constant_control(double c) {
  auto p = nets::init_mlp(nets::MlpArch::uniform(1, 4, 3, 1), 0);
  for (std::size_t i = 0; i < p.params.count(); ++i) p.params.tensor(i).setZero();
  p.params.at("l2.b")(0, 0) = c;
  return p;
}

}  // namespace

TEST(Quadrature, TrapezoidAccuracy) {
  const auto q = control::trapezoid_1d(101, 0.0, 1.0);
  std::vector<double> f(q.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::pow(q.points(static_cast<ad::Index>(i), 0), 2);
  EXPECT_NEAR(control::integrate(q, f), 1.0 / 3.0, 1e-4 / 6 + 1e-15);
  EXPECT_THROW(control::trapezoid_1d(1, 0, 1), ConfigError);
}

TEST(Quadrature, TensorRuleIsExactForBilinear) {
  const auto q = control::tensor_trapezoid({{5, 0.0, 1.0}, {7, 0.0, 2.0}});
  ASSERT_EQ(q.size(), 35u);
  std::vector<double> f(q.size()), one(q.size(), 1.0);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = q.points(static_cast<ad::Index>(i), 0) * q.points(static_cast<ad::Index>(i), 1);
  EXPECT_NEAR(control::integrate(q, f), 1.0, 1e-14);
  EXPECT_NEAR(control::integrate(q, one), 2.0, 1e-14);
  // First axis slowest.
  EXPECT_EQ(q.points(1, 0), 0.0);
  EXPECT_GT(q.points(1, 1), 0.0);
}

TEST(Quadrature, MaskRemovesObstacleArea) {
  const fields::Ellipse e{0.2, 0.1};
  const auto q = control::stokes_quadrature(e, 401);
  const std::vector<double> one(q.size(), 1.0);
  EXPECT_NEAR(control::integrate(q, one), 1.0 - e.area(), 2e-3);
  for (ad::Index i = 0; i < q.points.rows(); ++i) EXPECT_GT(e.level(q.points(i, 0), q.points(i, 1)), 1.0);
}

TEST(ClosedFormCost, PoissonMisfitOfShiftedSolution) {
  const auto spec = control::poisson_cost_spec(sensor_grid(10), 256);
  std::vector<double> s(spec.target);
  EXPECT_EQ(control::misfit_cost(s, spec), 0.0);
  for (double& v : s) v += 0.1;
  EXPECT_NEAR(control::misfit_cost(s, spec), 0.5 * 0.01, 1e-15);
}

TEST(ClosedFormCost, HeatTarget) {
  EXPECT_NEAR(control::heat_default_target(0.5, 0.5, 0.5), 1.0, 1e-15);
  EXPECT_EQ(control::heat_default_target(0.0, 0.3, 0.5), 0.0);
  const auto spec = control::heat_cost_spec(sensor_grid(10, 2.0), 9, 5, 2.0, control::heat_default_target);
  EXPECT_EQ(spec.quadrature.size(), 405u);
  std::vector<double> zero(spec.target.size(), 0.0);
  // int int d^2 = (16 * int x^2(1-x)^2)^2 * int sin^2(pi t), about (16/30)^2 * 1.
  EXPECT_NEAR(control::misfit_cost(zero, spec), std::pow(16.0 / 30.0, 2), 0.02);
}

TEST(ClosedFormCost, PoiseuilleDissipation) {
  const control::VelocityGradient f = [](double, double y) { return std::array<double, 4>{0.0, 1.0 - 2.0 * y, 0.0, 0.0}; };
  EXPECT_NEAR(control::dissipation(f, fields::Ellipse{1e-3, 1e-3}, 201), 1.0 / 3.0, 1e-4);
  // The obstacle removes a region where (1 - 2y)^2 is small.
  const double with = control::dissipation(f, fields::Ellipse{0.12, 0.12}, 201);
  EXPECT_LT(with, 1.0 / 3.0);
  EXPECT_GT(with, 1.0 / 3.0 - pi * 0.0144 * 0.03);
}

TEST(ClosedFormCost, PoissonZeroFieldAgainstTarget) {
  const auto spec = control::poisson_cost_spec(sensor_grid(10), 256);
  const std::vector<double> zero(256, 0.0);
  // 1/2 * (1/pi^4) * int sin^2 = 1 / (4 pi^4)
  EXPECT_NEAR(control::misfit_cost(zero, spec), 1.0 / (4 * std::pow(pi, 4)), 1e-6);
}

TEST(ClosedFormCost, HeatZeroFieldAgainstTarget) {
  const auto fine = control::heat_cost_spec(sensor_grid(10, 2.0), 64, 64, 2.0, control::heat_default_target);
  const std::vector<double> zero(fine.target.size(), 0.0);
  const double jf = control::misfit_cost(zero, fine);
  EXPECT_NEAR(jf, 256.0 / 900.0, 1e-4);
  // Richardson with G = t: int int (t - d)^2 = 8/3 + 16/(9 pi) + 256/900, and
  // the error shrinks by about 4 when the spacing halves.
  const auto at = [](const CostSpec& spec) {
    std::vector<double> g(spec.target.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = spec.quadrature.points(static_cast<ad::Index>(i), 2);
    return control::misfit_cost(g, spec) - 8.0 / 3.0 - 16.0 / (9.0 * pi) - 256.0 / 900.0;
  };
  const double ratio = at(control::heat_cost_spec(sensor_grid(10, 2.0), 17, 17, 2.0, control::heat_default_target)) /
                       at(control::heat_cost_spec(sensor_grid(10, 2.0), 33, 33, 2.0, control::heat_default_target));
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.5);
}

TEST(ClosedFormCost, ShearFlowDissipationIsFluidArea) {
  const control::VelocityGradient f = [](double, double) { return std::array<double, 4>{0.0, 1.0, 0.0, 0.0}; };
  const fields::Ellipse circle{0.12, 0.12};
  EXPECT_NEAR(control::dissipation(f, circle, 200), 1.0 - pi * 0.0144, 1e-3);
  EXPECT_NEAR(1.0 - pi * 0.0144, 0.95476, 1e-5);
  const fields::Ellipse e{0.2, fields::volume_constrained_b(0.2, circle.area())};
  EXPECT_NEAR(control::dissipation(f, e, 200), 1.0 - e.area(), 1e-3);
  const control::VelocityGradient zero = [](double, double) { return std::array<double, 4>{}; };
  EXPECT_EQ(control::dissipation(zero, e, 50), 0.0);
}

TEST(ControlCost, RegularizerAddsHalfAlphaIntegral) {
  const auto net = surrogate(10, 1, 1);
  auto spec = control::poisson_cost_spec(sensor_grid(10), 64);
  const auto ctrl = constant_control(1.0);
  EXPECT_EQ(control::control_values(ctrl, spec.sensors), std::vector<double>(10, 1.0));
  const double j0 = control::poisson_cost(ctrl, net, spec);
  spec.alpha_reg = 0.3;
  EXPECT_NEAR(control::poisson_cost(ctrl, net, spec) - j0, 0.15, 1e-14);
}

TEST(ControlCost, GradientMatchesFiniteDifferences) {
  const auto net = surrogate(8, 1, 1);
  auto spec = control::poisson_cost_spec(sensor_grid(8), 32);
  spec.alpha_reg = 0.05;
  auto ctrl = nets::init_mlp(nets::MlpArch::uniform(1, 4, 3, 1), 2);
  const auto c = control::mlp_control_cost(ctrl, net, spec, true);
  const NdArray p = ctrl.params.flatten();
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> plus(p.data().begin(), p.data().end()), minus = plus;
    plus[i] += h;
    minus[i] -= h;
    auto cp = ctrl, cm = ctrl;
    cp.params.assign(plus);
    cm.params.assign(minus);
    const double fd = (control::poisson_cost(cp, net, spec) - control::poisson_cost(cm, net, spec)) / (2 * h);
    EXPECT_NEAR(c.gradient.data()[i], fd, 1e-6 * (1 + std::abs(fd))) << "component " << i;
  }
}

TEST(ControlCost, HeatCostThroughSurrogate) {
  const auto net = surrogate(6, 3, 1);
  const auto spec = control::heat_cost_spec(sensor_grid(6, 2.0), 5, 4, 2.0, control::heat_default_target);
  const auto ctrl = constant_control(0.2);
  const double j = control::heat_cost(ctrl, net, spec);
  // Same value from the surrogate prediction and the closed-form misfit.
  const Mat u = Mat::Constant(1, 6, 0.2);
  const Mat pred = nets::deeponet_predict(net, u, spec.quadrature.points);
  std::vector<double> s(pred.data(), pred.data() + pred.rows());
  EXPECT_NEAR(j, control::misfit_cost(s, spec), 1e-13);
  EXPECT_THROW(control::poisson_cost(ctrl, net, spec), ConfigError);
}

TEST(ControlCost, SurrogateMismatchIsRejected) {
  const auto net = surrogate(9, 1, 1);
  const auto spec = control::poisson_cost_spec(sensor_grid(8), 32);
  EXPECT_THROW(control::poisson_cost(constant_control(0), net, spec), ArtifactMismatch);
}

TEST(ShapeCost, MatchesClosedFormDissipationOfSurrogate) {
  const std::size_t m = 12;
  const auto net = surrogate(2 * m, 2, 3);
  const auto spec = control::stokes_cost_spec(m, 41);
  const double a = 0.15;
  const double J = control::stokes_cost(a, net, spec);
  const fields::Ellipse e{a, fields::volume_constrained_b(a, spec.area)};
  const auto bnd = fields::ellipse_boundary(e, m);
  const Mat u = Eigen::Map<const Mat>(bnd.data(), 1, static_cast<ad::Index>(2 * m));
  const double h = 1e-5;
  const control::VelocityGradient f = [&](double x, double y) {
    Mat pts(4, 2);
    pts << x + h, y, x - h, y, x, y + h, x, y - h;
    const Mat o = nets::deeponet_predict(net, u, pts);
    return std::array<double, 4>{(o(0, 0) - o(1, 0)) / (2 * h), (o(2, 0) - o(3, 0)) / (2 * h),
                                 (o(0, 1) - o(1, 1)) / (2 * h), (o(2, 1) - o(3, 1)) / (2 * h)};
  };
  EXPECT_NEAR(J, control::dissipation(f, e, 41), 1e-7 * std::abs(J));
}

TEST(ShapeCost, GradientMatchesFiniteDifferences) {
  const std::size_t m = 10;
  const auto net = surrogate(2 * m, 2, 3);
  const auto spec = control::stokes_cost_spec(m, 31);
  const double a = 0.13;
  const auto c = control::shape_cost(a, net, spec, true);
  ASSERT_EQ(c.gradient.size(), 1u);
  // Small step: the mask is fixed as long as no grid node crosses the boundary.
  const double h = 1e-7;
  const auto mp = control::stokes_quadrature({a + h, fields::volume_constrained_b(a + h, spec.area)}, 31);
  const auto mm = control::stokes_quadrature({a - h, fields::volume_constrained_b(a - h, spec.area)}, 31);
  ASSERT_EQ(mp.size(), mm.size());
  const double fd = (control::stokes_cost(a + h, net, spec) - control::stokes_cost(a - h, net, spec)) / (2 * h);
  EXPECT_NEAR(c.gradient.data()[0], fd, 1e-5 * (1 + std::abs(fd)));
}

TEST(ShapeCost, OutOfRangeSemiAxisIsClamped) {
  const std::size_t m = 10;
  const auto net = surrogate(2 * m, 2, 3);
  const auto spec = control::stokes_cost_spec(m, 21);
  const auto c = control::shape_cost(0.5, net, spec, false);
  EXPECT_TRUE(c.clamped);
  EXPECT_EQ(c.J, control::stokes_cost(spec.a_max, net, spec));
  EXPECT_FALSE(control::shape_cost(0.1, net, spec, false).clamped);
}

TEST(Optimization, MlpControlReducesCost) {
  const auto net = surrogate(8, 1, 1);
  const auto spec = control::poisson_cost_spec(sensor_grid(8), 32);
  control::OptimizeConfig cfg;
  cfg.iterations = 200;
  cfg.schedule.lr0 = 1e-2;
  cfg.snapshot_every = 50;
  const auto r = control::optimize_mlp_control(nets::init_mlp(nets::MlpArch::uniform(1, 4, 3, 1), 1), net, spec, cfg);
  ASSERT_FALSE(r.trace.failure);
  ASSERT_EQ(r.trace.J.size(), 200u);
  EXPECT_LT(r.trace.J.back(), r.trace.J.front());
  EXPECT_EQ(r.trace.snapshots.size(), 4u);
  EXPECT_EQ(r.trace.snapshots[1].first, 50u);
}

TEST(Optimization, ShapeStaysInBounds) {
  const std::size_t m = 10;
  const auto net = surrogate(2 * m, 2, 3);
  const auto spec = control::stokes_cost_spec(m, 21);
  control::OptimizeConfig cfg;
  cfg.iterations = 40;
  cfg.schedule.lr0 = 0.02;
  const auto r = control::optimize_shape(0.12, net, spec, cfg);
  ASSERT_FALSE(r.trace.failure);
  EXPECT_GE(r.a, spec.a_min);
  EXPECT_LE(r.a, spec.a_max);
  EXPECT_LE(*std::min_element(r.trace.J.begin(), r.trace.J.end()), r.trace.J.front());
}

TEST(Optimization, ZeroIterationsAndFrozenSurrogate) {
  const auto net = surrogate(8, 1, 1);
  const auto before = net.params;
  const auto spec = control::poisson_cost_spec(sensor_grid(8), 32);
  const auto c0 = nets::init_mlp(nets::MlpArch::uniform(1, 4, 3, 1), 1);
  control::OptimizeConfig cfg;
  cfg.iterations = 0;
  EXPECT_EQ(control::optimize_mlp_control(c0, net, spec, cfg).control.params, c0.params);
  cfg.iterations = 5;
  control::optimize_mlp_control(c0, net, spec, cfg);
  EXPECT_EQ(net.params, before);
}

TEST(Optimization, ShapePathKeepsArea) {
  const std::size_t m = 10;
  const auto net = surrogate(2 * m, 2, 3);
  const auto spec = control::stokes_cost_spec(m, 21);
  control::OptimizeConfig cfg;
  cfg.iterations = 10;
  cfg.snapshot_every = 1;
  cfg.schedule.lr0 = 0.01;
  const auto r = control::optimize_shape(0.12, net, spec, cfg);
  for (const auto& [it, a] : r.trace.snapshots) {
    const fields::Ellipse e{a[0], fields::volume_constrained_b(a[0], spec.area)};
    EXPECT_NEAR(e.area(), spec.area, 1e-12);
  }
}

}  // namespace pidon
