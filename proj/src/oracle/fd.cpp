#include "pidon/oracle/fd.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pidon/errors.hpp"

namespace pidon::oracle {

std::vector<double> Grid1D::nodes() const {
  std::vector<double> x(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) x[i] = static_cast<double>(i) * h();
  return x;
}

std::vector<double> solve_poisson_fd(std::span<const double> u, double h) {
  if (!(h > 0)) throw ConfigError("solve_poisson_fd: h must be positive");
  if (u.size() < 3) throw ShapeError("solve_poisson_fd: need at least 3 nodes");
  const std::size_t n = u.size() - 2;  // interior unknowns
  // Thomas algorithm on tridiag(-1, 2, -1) s = h^2 u.
  std::vector<double> c(n), d(n), s(u.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double rhs = h * h * u[i + 1];
    if (i == 0) {
      c[i] = -0.5;
      d[i] = rhs / 2.0;
    } else {
      const double m = 2.0 + c[i - 1];
      c[i] = -1.0 / m;
      d[i] = (rhs + d[i - 1]) / m;
    }
  }
  for (std::size_t i = n; i-- > 0;) s[i + 1] = d[i] - (i + 1 < n ? c[i] * s[i + 2] : 0.0);
  return s;
}

void HeatGrid::validate() const {
  if (space_intervals < 2 || time_steps < 1) throw ConfigError("heat grid needs >= 2 cells and >= 1 step");
  if (!(final_time > 0) || !(nu > 0)) throw ConfigError("heat grid needs T > 0 and nu > 0");
}

HeatSolution::HeatSolution(HeatGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
  const std::size_t nx = grid_.space_intervals + 1;
  if (values_.size() != nx * nx * (grid_.time_steps + 1)) throw ShapeError("HeatSolution: value count mismatch");
}

double HeatSolution::at(std::size_t i, std::size_t j, std::size_t k) const {
  const std::size_t nx = grid_.space_intervals + 1;
  return values_[(k * nx + i) * nx + j];
}

double HeatSolution::interpolate(double x, double y, double t) const {
  const auto locate = [](double v, double step, std::size_t cells, std::size_t& idx) {
    double r = std::clamp(v / step, 0.0, static_cast<double>(cells));
    idx = std::min(static_cast<std::size_t>(r), cells - 1);
    return r - static_cast<double>(idx);
  };
  std::size_t i, j, k;
  const double fx = locate(x, grid_.h(), grid_.space_intervals, i);
  const double fy = locate(y, grid_.h(), grid_.space_intervals, j);
  const double ft = locate(t, grid_.dt(), grid_.time_steps, k);
  double acc = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double w = (a ? fx : 1 - fx) * (b ? fy : 1 - fy) * (c ? ft : 1 - ft);
        if (w != 0) acc += w * at(i + a, j + b, k + c);
      }
  return acc;
}

HeatSolution solve_heat_fd(const HeatForcing& f, const HeatGrid& grid) {
  grid.validate();
  const std::size_t nc = grid.space_intervals;
  const std::size_t ni = nc - 1;  // interior nodes per axis
  const std::size_t nx = nc + 1;
  const double h = grid.h();
  const double dt = grid.dt();
  const double r = grid.nu * dt / (2.0 * h * h);
  const auto id = [ni](std::size_t i, std::size_t j) { return static_cast<int>((i - 1) * ni + (j - 1)); };

  // A = I - (nu dt / 2) L, B = I + (nu dt / 2) L on the interior unknowns.
  using Sp = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> ta, tb;
  for (std::size_t i = 1; i < nc; ++i) {
    for (std::size_t j = 1; j < nc; ++j) {
      const int p = id(i, j);
      ta.emplace_back(p, p, 1.0 + 4.0 * r);
      tb.emplace_back(p, p, 1.0 - 4.0 * r);
      const std::size_t nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto& q : nb) {
        if (q[0] == 0 || q[0] == nc || q[1] == 0 || q[1] == nc) continue;
        ta.emplace_back(p, id(q[0], q[1]), -r);
        tb.emplace_back(p, id(q[0], q[1]), r);
      }
    }
  }
  const int n = static_cast<int>(ni * ni);
  Sp A(n, n), B(n, n);
  A.setFromTriplets(ta.begin(), ta.end());
  B.setFromTriplets(tb.begin(), tb.end());
  Eigen::SimplicialLDLT<Sp> solver(A);
  if (solver.info() != Eigen::Success) throw NumericError("solve_heat_fd: factorization failed");

  const auto forcing = [&](double t) {
    Eigen::VectorXd fv(n);
    for (std::size_t i = 1; i < nc; ++i)
      for (std::size_t j = 1; j < nc; ++j) fv(id(i, j)) = f(static_cast<double>(i) * h, static_cast<double>(j) * h, t);
    return fv;
  };

  std::vector<double> out(nx * nx * (grid.time_steps + 1), 0.0);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd f_prev = forcing(0.0);
  for (std::size_t k = 1; k <= grid.time_steps; ++k) {
    const Eigen::VectorXd f_next = forcing(static_cast<double>(k) * dt);
    const Eigen::VectorXd rhs = B * s + 0.5 * dt * (f_prev + f_next);
    s = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !s.allFinite()) throw NumericError("solve_heat_fd: solve failed");
    for (std::size_t i = 1; i < nc; ++i)
      for (std::size_t j = 1; j < nc; ++j) out[(k * nx + i) * nx + j] = s(id(i, j));
    f_prev = f_next;
  }
  return HeatSolution(grid, std::move(out));
}

double interp1(std::span<const double> xs, std::span<const double> ys, double x) {
  if (xs.empty() || xs.size() != ys.size()) throw ShapeError("interp1: sample size mismatch");
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
  const double w = (x - xs[i]) / (xs[i + 1] - xs[i]);
  return (1 - w) * ys[i] + w * ys[i + 1];
}

HeatSolution solve_heat_fd(std::span<const double> times, std::span<const double> u, const HeatGrid& grid) {
  std::vector<double> ts(times.begin(), times.end()), us(u.begin(), u.end());
  return solve_heat_fd([ts, us](double, double, double t) { return interp1(ts, us, t); }, grid);
}

std::vector<double> manufacture_heat_target(const std::function<double(double)>& u_star, const HeatGrid& grid,
                                            std::span<const double> x, std::span<const double> y,
                                            std::span<const double> t) {
  if (x.size() != y.size() || x.size() != t.size()) throw ShapeError("manufacture_heat_target: coordinate lengths differ");
  const HeatSolution s = solve_heat_fd([&](double, double, double tt) { return u_star(tt); }, grid);
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = s.interpolate(x[i], y[i], t[i]);
  return d;
}

void write_columns_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw ShapeError("write_columns_csv: header/column count mismatch");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != rows) throw ShapeError("write_columns_csv: ragged columns");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", columns[c][r]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace pidon::oracle
