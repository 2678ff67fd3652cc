#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pidon/diffcore/tape.hpp"

namespace pidon::fields {

/// Input functions sampled on one shared sensor grid.
///
/// `sensors` is (m x sensor_dim); `values` is (N x width) with width = m for
/// scalar functions and 2m for ellipse boundaries (x0, y0, x1, y1, ...).
struct Dataset {
  std::string kind;  ///< "grf" or "ellipse"
  ad::Mat sensors;
  ad::Mat values;

  std::size_t samples() const { return static_cast<std::size_t>(values.rows()); }
};

/// Equi-spaced grid with both end points.
std::vector<double> uniform_grid(double lo, double hi, std::size_t m);

struct GrfConfig {
  double length_scale = 0.2;
  std::size_t m = 100;
  double lo = 0.0;
  double hi = 1.0;
  std::uint64_t seed = 0;
};

/// Squared-exponential covariance exp(-(x - x')^2 / (2 l^2)).
double rbf_kernel(double x, double x2, double length_scale);

/// Lower Cholesky factor of K + jitter*I on the sensor grid; jitter starts at
/// 1e-10 and grows x10 up to 1e-6. `used_jitter` receives the value that worked.
ad::Mat grf_cholesky(const GrfConfig& cfg, double* used_jitter = nullptr);

/// n zero-mean GRF samples; identical for identical (cfg, n).
Dataset sample_grf(const GrfConfig& cfg, std::size_t n);

// -------------------------------------------------------------------------------
// Ellipses centred at (1/2, 1/2)
// -------------------------------------------------------------------------------

struct Ellipse {
  double a = 0.12;  ///< semi-axis along x
  double b = 0.12;  ///< semi-axis along y

  double area() const;
  /// ((x - 1/2)/a)^2 + ((y - 1/2)/b)^2; < 1 inside.
  double level(double x, double y) const;
};

/// b keeping the area fixed: area / (pi a).
double volume_constrained_b(double a, double area);

/// Boundary at m evenly spaced angles in [0, 2pi), interleaved x0, y0, x1, y1, ...
std::vector<double> ellipse_boundary(const Ellipse& e, std::size_t m);
/// The m boundary angles.
std::vector<double> boundary_angles(std::size_t m);
/// Least-squares recovery of (a, b) from an interleaved boundary vector.
Ellipse ellipse_from_boundary(std::span<const double> boundary);

/// n ellipses with a, b independently uniform in [lo, hi].
Dataset sample_ellipses(std::size_t n, std::size_t m, double lo, double hi, std::uint64_t seed);

// -------------------------------------------------------------------------------
// Collocation points
// -------------------------------------------------------------------------------

enum class Benchmark { poisson, heat, stokes };

std::string to_string(Benchmark b);
Benchmark parse_benchmark(const std::string& s);

/// Point sets for one input function. Tags by benchmark:
///   poisson: bc, interior          (coordinates y)
///   heat:    ic, bc, interior      (coordinates x, y, t)
///   stokes:  bc1, bc2, bc3, interior (coordinates x, y); bc1 = walls + obstacle,
///            bc2 = inlet x = 0, bc3 = outlet x = 1
struct CollocationBatch {
  std::vector<std::string> tags;
  std::vector<ad::Mat> points;

  const ad::Mat& get(const std::string& tag) const;
};

struct CollocationConfig {
  Benchmark benchmark = Benchmark::poisson;
  std::size_t boundary_points = 2;    ///< P (per boundary term)
  std::size_t interior_points = 100;  ///< Q
  double final_time = 2.0;            ///< heat
};

/// Deterministic RNG for (seed, stream, index).
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Samples one collocation batch; `shape` is used for stokes only.
CollocationBatch sample_collocation(const CollocationConfig& cfg, const Ellipse& shape, std::mt19937_64& rng);

// -------------------------------------------------------------------------------
// Dataset files
// -------------------------------------------------------------------------------

/// Writes `path` (sample,v0,...) and the sensor grid to sensor_grid_path(path).
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);
std::filesystem::path sensor_grid_path(const std::filesystem::path& dataset_path);

}  // namespace pidon::fields
