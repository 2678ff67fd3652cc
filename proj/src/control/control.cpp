#include "pidon/control/control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pidon/errors.hpp"

namespace pidon::control {

using ad::Index;
using ad::Mat;
using ad::Var;
using std::numbers::pi;

QuadratureGrid trapezoid_1d(std::size_t n, double lo, double hi) {
  return tensor_trapezoid({Axis{n, lo, hi}});
}

QuadratureGrid tensor_trapezoid(const std::vector<Axis>& axes) {
  if (axes.empty()) throw ConfigError("quadrature needs at least one axis");
  std::size_t total = 1;
  for (const auto& ax : axes) {
    if (ax.nodes < 2) throw ConfigError("quadrature needs at least 2 nodes per axis");
    if (!(ax.hi > ax.lo)) throw ConfigError("quadrature axis must have hi > lo");
    total *= ax.nodes;
  }
  QuadratureGrid q;
  q.points.resize(static_cast<Index>(total), static_cast<Index>(axes.size()));
  q.weights.assign(total, 1.0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t d = axes.size(); d-- > 0;) {
      const auto& ax = axes[d];
      const std::size_t i = rem % ax.nodes;
      rem /= ax.nodes;
      const double h = (ax.hi - ax.lo) / static_cast<double>(ax.nodes - 1);
      q.points(static_cast<Index>(idx), static_cast<Index>(d)) = ax.lo + h * static_cast<double>(i);
      q.weights[idx] *= (i == 0 || i + 1 == ax.nodes) ? 0.5 * h : h;
    }
  }
  return q;
}

QuadratureGrid mask_outside(const QuadratureGrid& q, const fields::Ellipse& e) {
  if (q.points.cols() != 2) throw ShapeError("mask_outside: needs a 2-D grid");
  QuadratureGrid out;
  std::vector<Index> keep;
  for (Index i = 0; i < q.points.rows(); ++i) {
    if (e.level(q.points(i, 0), q.points(i, 1)) > 1.0) keep.push_back(i);
  }
  out.points.resize(static_cast<Index>(keep.size()), 2);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.points.row(static_cast<Index>(k)) = q.points.row(keep[k]);
    out.weights.push_back(q.weights[static_cast<std::size_t>(keep[k])]);
  }
  return out;
}

double integrate(const QuadratureGrid& q, std::span<const double> values) {
  if (values.size() != q.size()) throw ShapeError("integrate: value count differs from node count");
  double acc = 0;
  for (std::size_t i = 0; i < values.size(); ++i) acc += q.weights[i] * values[i];
  return acc;
}

// -------------------------------------------------------------------------------

void CostSpec::validate() const {
  if (benchmark == Benchmark::stokes) {
    if (!(area > 0)) throw ConfigError("stokes cost: obstacle area must be positive");
    if (!(a_min > 0) || !(a_max > a_min)) throw ConfigError("stokes cost: need 0 < a_min < a_max");
    if (grid_nodes < 2 || boundary_m < 3) throw ConfigError("stokes cost: grid too coarse");
    return;
  }
  if (quadrature.size() == 0 || target.size() != quadrature.size()) {
    throw ShapeError("cost: target must be given at every quadrature node");
  }
  if (sensors.cols() != 1 || sensors.rows() < 2) throw ShapeError("cost: sensor grid must be m x 1 with m >= 2");
}

CostSpec poisson_cost_spec(const ad::Mat& sensors, std::size_t nodes) {
  CostSpec s;
  s.benchmark = Benchmark::poisson;
  s.quadrature = trapezoid_1d(nodes, 0.0, 1.0);
  for (std::size_t i = 0; i < nodes; ++i) s.target.push_back(std::sin(pi * s.quadrature.points(static_cast<Index>(i), 0)) / (pi * pi));
  s.misfit_scale = 0.5;
  s.sensors = sensors;
  return s;
}

double heat_default_target(double x, double y, double t) {
  return 16.0 * x * y * (x - 1.0) * (y - 1.0) * std::sin(pi * t);
}

CostSpec heat_cost_spec(const ad::Mat& sensors, std::size_t space_nodes, std::size_t time_nodes, double final_time,
                        const std::function<double(double, double, double)>& target) {
  CostSpec s;
  s.benchmark = Benchmark::heat;
  s.quadrature = tensor_trapezoid({{space_nodes, 0.0, 1.0}, {space_nodes, 0.0, 1.0}, {time_nodes, 0.0, final_time}});
  for (Index i = 0; i < s.quadrature.points.rows(); ++i) {
    s.target.push_back(target(s.quadrature.points(i, 0), s.quadrature.points(i, 1), s.quadrature.points(i, 2)));
  }
  s.misfit_scale = 1.0;
  s.sensors = sensors;
  return s;
}

CostSpec stokes_cost_spec(std::size_t boundary_m, std::size_t grid_nodes) {
  CostSpec s;
  s.benchmark = Benchmark::stokes;
  s.area = pi * 0.12 * 0.12;
  s.boundary_m = boundary_m;
  s.grid_nodes = grid_nodes;
  return s;
}

double misfit_cost(std::span<const double> field_values, const CostSpec& spec) {
  if (field_values.size() != spec.target.size()) throw ShapeError("misfit_cost: value count differs");
  std::vector<double> sq(field_values.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (field_values[i] - spec.target[i]) * (field_values[i] - spec.target[i]);
  return spec.misfit_scale * integrate(spec.quadrature, sq);
}

QuadratureGrid stokes_quadrature(const fields::Ellipse& e, std::size_t grid_nodes) {
  return mask_outside(tensor_trapezoid({{grid_nodes, 0.0, 1.0}, {grid_nodes, 0.0, 1.0}}), e);
}

double dissipation(const VelocityGradient& f, const fields::Ellipse& e, std::size_t grid_nodes) {
  const QuadratureGrid q = stokes_quadrature(e, grid_nodes);
  std::vector<double> v(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto g = f(q.points(static_cast<Index>(i), 0), q.points(static_cast<Index>(i), 1));
    v[i] = g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3];
  }
  return integrate(q, v);
}

// -------------------------------------------------------------------------------

ad::Var control_on_sensors(ad::Tape& t, const nets::MlpArch& arch, const ad::BoundParams& bound,
                           const ad::Mat& sensors) {
  const Var col = nets::mlp_apply(t, arch, bound, t.constant(sensors));
  return ad::reshape(t, col, 1, sensors.rows());
}

std::vector<double> control_values(const nets::MlpParams& ctrl, const ad::Mat& sensors) {
  const Mat out = nets::mlp_forward_batch(ctrl, sensors);
  return {out.data(), out.data() + out.size()};
}

namespace {

Var weighted_sum(ad::Tape& t, Var values, const std::vector<double>& weights) {
  const Mat& v = t.value(values);
  Mat w(v.rows(), v.cols());
  for (Index i = 0; i < v.rows(); ++i) w.row(i).setConstant(weights[static_cast<std::size_t>(i)]);
  return ad::sum(t, ad::mul(t, values, t.constant(std::move(w))));
}

// Sensor-grid trapezoid weights for the regularizer.
std::vector<double> sensor_weights(const Mat& sensors) {
  const Index m = sensors.rows();
  std::vector<double> w(static_cast<std::size_t>(m), 0.0);
  for (Index i = 0; i + 1 < m; ++i) {
    const double h = sensors(i + 1, 0) - sensors(i, 0);
    w[static_cast<std::size_t>(i)] += 0.5 * h;
    w[static_cast<std::size_t>(i + 1)] += 0.5 * h;
  }
  return w;
}

void check_surrogate(const nets::DeepONetParams& surrogate, const CostSpec& spec) {
  const std::size_t width = spec.benchmark == Benchmark::stokes ? 2 * spec.boundary_m
                                                                 : static_cast<std::size_t>(spec.sensors.rows());
  if (surrogate.arch.branch_input != width) {
    throw ArtifactMismatch("surrogate expects " + std::to_string(surrogate.arch.branch_input) +
                           " branch inputs but the control provides " + std::to_string(width));
  }
  const std::size_t dim = spec.benchmark == Benchmark::poisson ? 1 : spec.benchmark == Benchmark::heat ? 3 : 2;
  if (surrogate.arch.coord_dim != dim) throw ArtifactMismatch("surrogate coordinate dimension does not fit the benchmark");
}

}  // namespace

CostValue mlp_control_cost(const nets::MlpParams& ctrl, const nets::DeepONetParams& surrogate,
                           const CostSpec& spec, bool gradient) {
  spec.validate();
  if (spec.benchmark == Benchmark::stokes) throw ConfigError("mlp_control_cost: stokes uses shape_cost");
  check_surrogate(surrogate, spec);
  ad::Tape t;
  const ad::BoundParams cb = gradient ? ad::bind(t, ctrl.params) : ad::bind_frozen(t, ctrl.params);
  const Var u = control_on_sensors(t, ctrl.arch, cb, spec.sensors);
  nets::DeepONetGraph g(t, surrogate, false);
  const nets::BranchState br = g.encode(u);
  const Index n = spec.quadrature.points.rows();
  const Var s = ad::slice_cols(t, g.evaluate(br, spec.quadrature.points, n), 0, 1);
  const Mat d = Eigen::Map<const Mat>(spec.target.data(), n, 1);
  Var J = ad::scale(t, weighted_sum(t, ad::square(t, ad::sub(t, s, t.constant(d))), spec.quadrature.weights),
                    spec.misfit_scale);
  if (spec.alpha_reg != 0) {
    const Var reg = weighted_sum(t, ad::reshape(t, ad::square(t, u), spec.sensors.rows(), 1), sensor_weights(spec.sensors));
    J = ad::add(t, J, ad::scale(t, reg, 0.5 * spec.alpha_reg));
  }
  CostValue out;
  out.J = t.scalar(J);
  if (gradient) {
    if (!std::isfinite(out.J)) throw NumericError("control cost is not finite");
    out.gradient = ad::grad_params(t, J, cb);
  }
  return out;
}

CostValue shape_cost(double a, const nets::DeepONetParams& surrogate, const CostSpec& spec, bool gradient) {
  spec.validate();
  if (spec.benchmark != Benchmark::stokes) throw ConfigError("shape_cost: only for stokes");
  check_surrogate(surrogate, spec);
  CostValue out;
  const double ac = std::clamp(a, spec.a_min, spec.a_max);
  out.clamped = ac != a;
  const fields::Ellipse e{ac, fields::volume_constrained_b(ac, spec.area)};
  const QuadratureGrid q = stokes_quadrature(e, spec.grid_nodes);

  ad::Tape t;
  Mat a0(1, 1);
  a0(0, 0) = ac;
  const Var av = gradient ? t.variable(a0) : t.constant(a0);
  Mat num(1, 1);
  num(0, 0) = spec.area / pi;
  const Var bv = ad::div(t, t.constant(num), av);
  const auto phi = fields::boundary_angles(spec.boundary_m);
  const auto m = static_cast<Index>(spec.boundary_m);
  Mat cx = Mat::Zero(1, 2 * m), sy = Mat::Zero(1, 2 * m);
  for (Index i = 0; i < m; ++i) {
    cx(0, 2 * i) = std::cos(phi[static_cast<std::size_t>(i)]);
    sy(0, 2 * i + 1) = std::sin(phi[static_cast<std::size_t>(i)]);
  }
  const Var boundary = ad::add_scalar(t, ad::add(t, ad::scalar_times(t, av, cx), ad::scalar_times(t, bv, sy)), 0.5);

  nets::DeepONetGraph g(t, surrogate, false);
  const nets::BranchState br = g.encode(boundary);
  const Index n = q.points.rows();
  const std::vector<int> orders{1, 1};
  const Var f = g.evaluate(br, q.points, n, {0, 1}, orders);
  const auto L = nets::DeepONetGraph::layout_for(n, orders);
  const Var gx = ad::slice_cols(t, ad::jet_block(t, f, L.first_block(0), L), 0, 2);
  const Var gy = ad::slice_cols(t, ad::jet_block(t, f, L.first_block(1), L), 0, 2);
  const Var J = weighted_sum(t, ad::add(t, ad::square(t, gx), ad::square(t, gy)), q.weights);
  out.J = t.scalar(J);
  if (gradient) {
    if (!std::isfinite(out.J)) throw NumericError("shape cost is not finite");
    t.backward(J);
    out.gradient = NdArray::vector({t.adjoint(av)(0, 0)});
  }
  return out;
}

double poisson_cost(const nets::MlpParams& ctrl, const nets::DeepONetParams& surrogate, const CostSpec& spec) {
  if (spec.benchmark != Benchmark::poisson) throw ConfigError("poisson_cost: spec is not poisson");
  return mlp_control_cost(ctrl, surrogate, spec, false).J;
}

double heat_cost(const nets::MlpParams& ctrl, const nets::DeepONetParams& surrogate, const CostSpec& spec) {
  if (spec.benchmark != Benchmark::heat) throw ConfigError("heat_cost: spec is not heat");
  return mlp_control_cost(ctrl, surrogate, spec, false).J;
}

double stokes_cost(double a, const nets::DeepONetParams& surrogate, const CostSpec& spec) {
  return shape_cost(a, surrogate, spec, false).J;
}

// -------------------------------------------------------------------------------

MlpControlResult optimize_mlp_control(nets::MlpParams ctrl, const nets::DeepONetParams& surrogate,
                                      const CostSpec& spec, const OptimizeConfig& cfg) {
  MlpControlResult res{std::move(ctrl), {}};
  trainer::AdamState adam(res.control.params.total_size());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.snapshot_every > 0 && it % cfg.snapshot_every == 0) {
      res.trace.snapshots.emplace_back(it, control_values(res.control, spec.sensors));
    }
    CostValue c;
    try {
      c = mlp_control_cost(res.control, surrogate, spec, true);
      const NdArray p = res.control.params.flatten();
      std::vector<double> pv(p.data().begin(), p.data().end());
      trainer::adam_step(adam, pv, c.gradient.data(), trainer::lr_at(it, cfg.schedule));
      res.trace.J.push_back(c.J);
      res.control.params.assign(pv);
    } catch (const NumericError& e) {
      res.trace.failure = "iteration " + std::to_string(it) + ": " + e.what();
      return res;
    }
  }
  return res;
}

ShapeResult optimize_shape(double a0, const nets::DeepONetParams& surrogate, const CostSpec& spec,
                           const OptimizeConfig& cfg) {
  ShapeResult res;
  res.a = std::clamp(a0, spec.a_min, spec.a_max);
  res.clamped = res.a != a0;
  trainer::AdamState adam(1);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.snapshot_every > 0 && it % cfg.snapshot_every == 0) res.trace.snapshots.emplace_back(it, std::vector<double>{res.a});
    try {
      const CostValue c = shape_cost(res.a, surrogate, spec, true);
      double p[1] = {res.a};
      trainer::adam_step(adam, p, c.gradient.data(), trainer::lr_at(it, cfg.schedule));
      res.trace.J.push_back(c.J);
      const double projected = std::clamp(p[0], spec.a_min, spec.a_max);
      res.clamped = res.clamped || projected != p[0];
      res.a = projected;
    } catch (const NumericError& e) {
      res.trace.failure = "iteration " + std::to_string(it) + ": " + e.what();
      return res;
    }
  }
  return res;
}

}  // namespace pidon::control
