#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pidon/diffcore/ndarray.hpp"
#include "pidon/diffcore/tape.hpp"
#include "pidon/fields/fields.hpp"
#include "pidon/nets/deeponet.hpp"
#include "pidon/nets/mlp.hpp"
#include "pidon/trainer/trainer.hpp"

namespace pidon::control {

using fields::Benchmark;

/// Quadrature nodes (rows of `points`) with weights.
struct QuadratureGrid {
  ad::Mat points;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
};

/// Composite trapezoid rule with n >= 2 nodes on [lo, hi].
QuadratureGrid trapezoid_1d(std::size_t n, double lo, double hi);

struct Axis {
  std::size_t nodes;
  double lo;
  double hi;
};
/// Tensor-product trapezoid rule; the first axis varies slowest.
QuadratureGrid tensor_trapezoid(const std::vector<Axis>& axes);

/// Drops the nodes inside (or on) the ellipse: the mask is fixed once the shape is.
QuadratureGrid mask_outside(const QuadratureGrid& q, const fields::Ellipse& e);

double integrate(const QuadratureGrid& q, std::span<const double> values);

// -------------------------------------------------------------------------------

struct CostSpec {
  Benchmark benchmark = Benchmark::poisson;
  QuadratureGrid quadrature;  ///< poisson, heat
  std::vector<double> target; ///< d at the quadrature nodes
  double misfit_scale = 0.5;  ///< J = scale * int (G - d)^2
  double alpha_reg = 0.0;     ///< + alpha/2 * int u^2 over the sensor grid
  ad::Mat sensors;            ///< m x 1 (x_i or t_i)

  // stokes
  double area = 0.0;            ///< fixed obstacle area pi a b
  double a_min = 0.06;
  double a_max = 0.24;
  std::size_t boundary_m = 100;
  std::size_t grid_nodes = 200; ///< per axis on [0,1]^2

  void validate() const;
};

/// d(x) = sin(pi x) / pi^2 on a `nodes`-point trapezoid grid.
CostSpec poisson_cost_spec(const ad::Mat& sensors, std::size_t nodes = 256);
/// Tensor grid on [0,1]^2 x [0,T] with the target d(x, y, t) given at its nodes.
CostSpec heat_cost_spec(const ad::Mat& sensors, std::size_t space_nodes, std::size_t time_nodes, double final_time,
                        const std::function<double(double, double, double)>& target);
/// d = 16 xy(x-1)(y-1) sin(pi t).
double heat_default_target(double x, double y, double t);
/// Area of the circle r = 0.12, a range keeping both axes in [0.06, 0.24].
CostSpec stokes_cost_spec(std::size_t boundary_m, std::size_t grid_nodes);

/// Misfit part of J for field values given at the quadrature nodes.
double misfit_cost(std::span<const double> field_values, const CostSpec& spec);

/// Masked quadrature on the fluid region of shape `e`.
QuadratureGrid stokes_quadrature(const fields::Ellipse& e, std::size_t grid_nodes);

/// (u_x, u_y, v_x, v_y) of a velocity field.
using VelocityGradient = std::function<std::array<double, 4>(double x, double y)>;
/// Dissipation int (u_x^2 + u_y^2 + v_x^2 + v_y^2) over the fluid region.
double dissipation(const VelocityGradient& f, const fields::Ellipse& e, std::size_t grid_nodes);

/// Control u_alpha evaluated on the sensor grid (1 x m row) on the tape.
ad::Var control_on_sensors(ad::Tape& t, const nets::MlpArch& arch, const ad::BoundParams& bound,
                           const ad::Mat& sensors);
std::vector<double> control_values(const nets::MlpParams& ctrl, const ad::Mat& sensors);

struct CostValue {
  double J = 0.0;
  NdArray gradient;      ///< d J / d(control); empty unless requested
  bool clamped = false;  ///< stokes: a was clamped into [a_min, a_max]
};

/// Poisson / heat: J(alpha) through the frozen surrogate.
CostValue mlp_control_cost(const nets::MlpParams& ctrl, const nets::DeepONetParams& surrogate,
                           const CostSpec& spec, bool gradient);
/// Stokes: J(a) with b = area / (pi a); a outside [a_min, a_max] is clamped.
CostValue shape_cost(double a, const nets::DeepONetParams& surrogate, const CostSpec& spec, bool gradient);

double poisson_cost(const nets::MlpParams& ctrl, const nets::DeepONetParams& surrogate, const CostSpec& spec);
double heat_cost(const nets::MlpParams& ctrl, const nets::DeepONetParams& surrogate, const CostSpec& spec);
double stokes_cost(double a, const nets::DeepONetParams& surrogate, const CostSpec& spec);

// -------------------------------------------------------------------------------

struct OptimizeConfig {
  std::size_t iterations = 1000;
  trainer::LrSchedule schedule;
  std::size_t snapshot_every = 0;  ///< 0: no snapshots
};

struct OptimizationTrace {
  std::vector<double> J;  ///< cost before each update
  std::vector<std::pair<std::size_t, std::vector<double>>> snapshots;
  std::optional<std::string> failure;  ///< set when the cost became non-finite
};

struct MlpControlResult {
  nets::MlpParams control;
  OptimizationTrace trace;
};

struct ShapeResult {
  double a = 0.0;
  OptimizationTrace trace;
  bool clamped = false;
};

/// Adam on the control parameters; the surrogate is only read.
MlpControlResult optimize_mlp_control(nets::MlpParams ctrl, const nets::DeepONetParams& surrogate,
                                      const CostSpec& spec, const OptimizeConfig& cfg);
/// Adam on the scalar semi-axis a, projected onto [a_min, a_max].
ShapeResult optimize_shape(double a0, const nets::DeepONetParams& surrogate, const CostSpec& spec,
                           const OptimizeConfig& cfg);

}  // namespace pidon::control
