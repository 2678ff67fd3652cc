#include "pidon/fields/fields.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pidon/errors.hpp"

namespace pidon::fields {

using std::numbers::pi;

std::vector<double> uniform_grid(double lo, double hi, std::size_t m) {
  if (m < 2) throw ConfigError("uniform_grid: need at least 2 points");
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
  return x;
}

double rbf_kernel(double x, double x2, double length_scale) {
  const double d = x - x2;
  return std::exp(-d * d / (2.0 * length_scale * length_scale));
}

ad::Mat grf_cholesky(const GrfConfig& cfg, double* used_jitter) {
  if (!(cfg.length_scale > 0)) throw ConfigError("GRF length scale must be positive");
  const auto x = uniform_grid(cfg.lo, cfg.hi, cfg.m);
  const auto m = static_cast<Eigen::Index>(cfg.m);
  Eigen::MatrixXd K(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) K(i, j) = rbf_kernel(x[i], x[j], cfg.length_scale);
  for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10) {
    Eigen::LLT<Eigen::MatrixXd> llt(K + jitter * Eigen::MatrixXd::Identity(m, m));
    if (llt.info() == Eigen::Success) {
      if (used_jitter) *used_jitter = jitter;
      return llt.matrixL().toDenseMatrix().array();
    }
  }
  throw NumericError("GRF Cholesky failed even with jitter 1e-6");
}

Dataset sample_grf(const GrfConfig& cfg, std::size_t n) {
  if (n < 1) throw ConfigError("sample_grf: n must be >= 1");
  const ad::Mat L = grf_cholesky(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  const auto m = static_cast<ad::Index>(cfg.m);
  Dataset ds;
  ds.kind = "grf";
  const auto x = uniform_grid(cfg.lo, cfg.hi, cfg.m);
  ds.sensors = Eigen::Map<const ad::Mat>(x.data(), m, 1);
  ds.values.resize(static_cast<ad::Index>(n), m);
  Eigen::VectorXd z(m);
  for (std::size_t s = 0; s < n; ++s) {
    for (ad::Index i = 0; i < m; ++i) z(i) = normal(rng);
    ds.values.row(static_cast<ad::Index>(s)) = (L.matrix() * z).transpose().array();
  }
  return ds;
}

// -------------------------------------------------------------------------------

double Ellipse::area() const { return pi * a * b; }

double Ellipse::level(double x, double y) const {
  const double u = (x - 0.5) / a;
  const double v = (y - 0.5) / b;
  return u * u + v * v;
}

double volume_constrained_b(double a, double area) {
  if (!(a > 0)) throw ConfigError("semi-axis must be positive");
  return area / (pi * a);
}

std::vector<double> boundary_angles(std::size_t m) {
  std::vector<double> phi(m);
  for (std::size_t i = 0; i < m; ++i) phi[i] = 2.0 * pi * static_cast<double>(i) / static_cast<double>(m);
  return phi;
}

std::vector<double> ellipse_boundary(const Ellipse& e, std::size_t m) {
  if (m < 3) throw ConfigError("ellipse_boundary: need m >= 3");
  if (!(e.a > 0) || !(e.b > 0)) throw ConfigError("ellipse_boundary: axes must be positive");
  std::vector<double> out(2 * m);
  const auto phi = boundary_angles(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[2 * i] = e.a * std::cos(phi[i]) + 0.5;
    out[2 * i + 1] = e.b * std::sin(phi[i]) + 0.5;
  }
  return out;
}

Ellipse ellipse_from_boundary(std::span<const double> boundary) {
  if (boundary.size() < 6 || boundary.size() % 2) throw ShapeError("ellipse_from_boundary: bad length");
  const std::size_t m = boundary.size() / 2;
  const auto phi = boundary_angles(m);
  double xc = 0, cc = 0, ys = 0, ss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double c = std::cos(phi[i]), s = std::sin(phi[i]);
    xc += (boundary[2 * i] - 0.5) * c;
    cc += c * c;
    ys += (boundary[2 * i + 1] - 0.5) * s;
    ss += s * s;
  }
  return Ellipse{xc / cc, ys / ss};
}

Dataset sample_ellipses(std::size_t n, std::size_t m, double lo, double hi, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_ellipses: n must be >= 1");
  if (!(lo > 0) || !(hi > lo) || hi >= 0.5) throw ConfigError("sample_ellipses: need 0 < lo < hi < 0.5");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> axis(lo, hi);
  Dataset ds;
  ds.kind = "ellipse";
  const auto phi = boundary_angles(m);
  ds.sensors = Eigen::Map<const ad::Mat>(phi.data(), static_cast<ad::Index>(m), 1);
  ds.values.resize(static_cast<ad::Index>(n), static_cast<ad::Index>(2 * m));
  for (std::size_t s = 0; s < n; ++s) {
    Ellipse e;
    e.a = axis(rng);
    e.b = axis(rng);
    const auto bnd = ellipse_boundary(e, m);
    for (std::size_t k = 0; k < 2 * m; ++k) ds.values(static_cast<ad::Index>(s), static_cast<ad::Index>(k)) = bnd[k];
  }
  return ds;
}

// -------------------------------------------------------------------------------

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::poisson: return "poisson";
    case Benchmark::heat: return "heat";
    case Benchmark::stokes: return "stokes";
  }
  return "?";
}

Benchmark parse_benchmark(const std::string& s) {
  if (s == "poisson") return Benchmark::poisson;
  if (s == "heat") return Benchmark::heat;
  if (s == "stokes") return Benchmark::stokes;
  throw ConfigError("unknown benchmark '" + s + "' (poisson, heat, stokes)");
}

const ad::Mat& CollocationBatch::get(const std::string& tag) const {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) return points[i];
  }
  throw ConfigError("collocation batch has no point set '" + tag + "'");
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

// Open interval (0, 1): never returns exactly 0.
double open_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v;
  do v = u(rng);
  while (v == 0.0);
  return v;
}

ad::Mat poisson_boundary(std::size_t p) {
  ad::Mat out(static_cast<ad::Index>(p), 1);
  for (std::size_t i = 0; i < p; ++i) out(static_cast<ad::Index>(i), 0) = static_cast<double>(i % 2);
  return out;
}

// Point on the unit-square boundary, edge chosen uniformly.
void square_edge_point(std::mt19937_64& rng, double& x, double& y) {
  const int edge = static_cast<int>(std::uniform_int_distribution<int>(0, 3)(rng));
  const double s = open_unit(rng);
  switch (edge) {
    case 0: x = s, y = 0; break;
    case 1: x = s, y = 1; break;
    case 2: x = 0, y = s; break;
    default: x = 1, y = s; break;
  }
}

}  // namespace

CollocationBatch sample_collocation(const CollocationConfig& cfg, const Ellipse& shape, std::mt19937_64& rng) {
  if (cfg.boundary_points < 1 || cfg.interior_points < 1) throw ConfigError("collocation: P and Q must be >= 1");
  const auto P = static_cast<ad::Index>(cfg.boundary_points);
  const auto Q = static_cast<ad::Index>(cfg.interior_points);
  CollocationBatch b;
  switch (cfg.benchmark) {
    case Benchmark::poisson: {
      ad::Mat in(Q, 1);
      for (ad::Index i = 0; i < Q; ++i) in(i, 0) = open_unit(rng);
      b.tags = {"bc", "interior"};
      b.points = {poisson_boundary(cfg.boundary_points), std::move(in)};
      break;
    }
    case Benchmark::heat: {
      const double T = cfg.final_time;
      ad::Mat ic(P, 3), bc(P, 3), in(Q, 3);
      for (ad::Index i = 0; i < P; ++i) {
        ic(i, 0) = open_unit(rng);
        ic(i, 1) = open_unit(rng);
        ic(i, 2) = 0.0;
      }
      for (ad::Index i = 0; i < P; ++i) {
        square_edge_point(rng, bc(i, 0), bc(i, 1));
        bc(i, 2) = T * open_unit(rng);
      }
      for (ad::Index i = 0; i < Q; ++i) {
        in(i, 0) = open_unit(rng);
        in(i, 1) = open_unit(rng);
        in(i, 2) = T * open_unit(rng);
      }
      b.tags = {"ic", "bc", "interior"};
      b.points = {std::move(ic), std::move(bc), std::move(in)};
      break;
    }
    case Benchmark::stokes: {
      ad::Mat bc1(P, 2), bc2(P, 2), bc3(P, 2), in(Q, 2);
      // Half of bc1 on the two walls, half on the obstacle at uniform angle.
      for (ad::Index i = 0; i < P; ++i) {
        if (i % 2 == 0) {
          bc1(i, 0) = open_unit(rng);
          bc1(i, 1) = std::uniform_int_distribution<int>(0, 1)(rng);
        } else {
          const double phi = 2.0 * pi * open_unit(rng);
          bc1(i, 0) = shape.a * std::cos(phi) + 0.5;
          bc1(i, 1) = shape.b * std::sin(phi) + 0.5;
        }
      }
      for (ad::Index i = 0; i < P; ++i) {
        bc2(i, 0) = 0.0;
        bc2(i, 1) = open_unit(rng);
        bc3(i, 0) = 1.0;
        bc3(i, 1) = open_unit(rng);
      }
      std::size_t tries = 0;
      for (ad::Index i = 0; i < Q;) {
        const double x = open_unit(rng), y = open_unit(rng);
        ++tries;
        if (shape.level(x, y) > 1.0) {
          in(i, 0) = x;
          in(i, 1) = y;
          ++i;
        } else if (tries >= 1000 && static_cast<double>(i) < 0.01 * static_cast<double>(tries)) {
          throw ConfigError("collocation: obstacle covers the domain (acceptance rate below 1%)");
        }
      }
      b.tags = {"bc1", "bc2", "bc3", "interior"};
      b.points = {std::move(bc1), std::move(bc2), std::move(bc3), std::move(in)};
      break;
    }
  }
  return b;
}

// -------------------------------------------------------------------------------

std::filesystem::path sensor_grid_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension(".sensors.csv");
  return p;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  header.clear();
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(path.string() + ": non-numeric cell '" + cell + "'");
      }
    }
    if (row.size() != header.size()) throw IoError(path.string() + ": row width differs from header");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset " + path.string());
    out << "sample";
    for (ad::Index k = 0; k < ds.values.cols(); ++k) out << ",v" << k;
    out << '\n';
    for (ad::Index s = 0; s < ds.values.rows(); ++s) {
      out << s;
      for (ad::Index k = 0; k < ds.values.cols(); ++k) out << ',' << fmt(ds.values(s, k));
      out << '\n';
    }
    if (!out) throw IoError("failed writing dataset " + path.string());
  }
  std::ofstream out(sensor_grid_path(path));
  if (!out) throw IoError("cannot write sensor grid " + sensor_grid_path(path).string());
  out << "index," << (ds.kind == "ellipse" ? "phi" : "x") << '\n';
  for (ad::Index i = 0; i < ds.sensors.rows(); ++i) out << i << ',' << fmt(ds.sensors(i, 0)) << '\n';
  if (!out) throw IoError("failed writing sensor grid");
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::vector<std::string> header, sheader;
  const auto rows = read_numeric_csv(path, header);
  const auto srows = read_numeric_csv(sensor_grid_path(path), sheader);
  if (header.empty() || header[0] != "sample") throw IoError(path.string() + ": not a dataset file");
  if (sheader.size() != 2) throw IoError("sensor grid file must have two columns");
  Dataset ds;
  ds.kind = sheader[1] == "phi" ? "ellipse" : "grf";
  ds.sensors.resize(static_cast<ad::Index>(srows.size()), 1);
  for (std::size_t i = 0; i < srows.size(); ++i) ds.sensors(static_cast<ad::Index>(i), 0) = srows[i][1];
  const auto width = static_cast<ad::Index>(header.size() - 1);
  const ad::Index expect = (ds.kind == "ellipse" ? 2 : 1) * ds.sensors.rows();
  if (width != expect) throw IoError(path.string() + ": value columns do not match the sensor grid");
  ds.values.resize(static_cast<ad::Index>(rows.size()), width);
  for (std::size_t s = 0; s < rows.size(); ++s)
    for (ad::Index k = 0; k < width; ++k) ds.values(static_cast<ad::Index>(s), k) = rows[s][static_cast<std::size_t>(k) + 1];
  return ds;
}

}  // namespace pidon::fields
