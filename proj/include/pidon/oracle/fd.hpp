#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pidon::oracle {

/// Uniform grid on [0, 1] with `intervals` cells (intervals + 1 nodes).
struct Grid1D {
  std::size_t intervals = 100;

  double h() const { return 1.0 / static_cast<double>(intervals); }
  std::vector<double> nodes() const;
};

/// Solves -s'' = u on [0, 1] with s(0) = s(1) = 0 by the 3-point stencil.
/// `u` holds the source at every node (the two end values are not used); the
/// result holds s at every node.
std::vector<double> solve_poisson_fd(std::span<const double> u, double h);

/// Space-time grid for the heat problem on [0,1]^2 x [0,T].
struct HeatGrid {
  std::size_t space_intervals = 32;  ///< per axis
  std::size_t time_steps = 64;
  double final_time = 2.0;
  double nu = 0.01;

  double h() const { return 1.0 / static_cast<double>(space_intervals); }
  double dt() const { return final_time / static_cast<double>(time_steps); }
  void validate() const;
};

/// Nodal values s(x_i, y_j, t_k), stored with k slowest and j fastest.
class HeatSolution {
 public:
  HeatSolution(HeatGrid grid, std::vector<double> values);

  const HeatGrid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double at(std::size_t i, std::size_t j, std::size_t k) const;
  /// Trilinear interpolation; arguments are clamped into the grid.
  double interpolate(double x, double y, double t) const;

 private:
  HeatGrid grid_;
  std::vector<double> values_;
};

using HeatForcing = std::function<double(double x, double y, double t)>;

/// Crank-Nicolson with a 5-point Laplacian for s_t - nu*Lap(s) = f, zero initial
/// and boundary values. Stays non-negative for f >= 0 while nu*dt/h^2 <= 1.
HeatSolution solve_heat_fd(const HeatForcing& f, const HeatGrid& grid);

/// Spatially uniform source u(t) given by samples on `times` (linear interpolation).
HeatSolution solve_heat_fd(std::span<const double> times, std::span<const double> u, const HeatGrid& grid);

/// Target d = s[u*] evaluated at `points` (rows of x, y, t). u* is then a
/// minimizer of the unregularized misfit by construction.
std::vector<double> manufacture_heat_target(const std::function<double(double)>& u_star, const HeatGrid& grid,
                                            std::span<const double> x, std::span<const double> y,
                                            std::span<const double> t);

/// Writes a header line and one comma-separated row per entry of `columns[0]`.
void write_columns_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& columns);

/// Linear interpolation of samples (xs ascending); clamps outside the range.
double interp1(std::span<const double> xs, std::span<const double> ys, double x);

}  // namespace pidon::oracle
