// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--only 1,5,...]
//
// Criteria 5-7 train desk-scale surrogates through the CLI and take a while.

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "pidon/cli/commands.hpp"
#include "pidon/control/control.hpp"
#include "pidon/diffcore/gradcheck.hpp"
#include "pidon/errors.hpp"
#include "pidon/nets/checkpoint.hpp"
#include "pidon/oracle/fd.hpp"
#include "pidon/physics/physics.hpp"

namespace fs = std::filesystem;
using namespace pidon;
using ad::Index;
using ad::Mat;
using fields::Benchmark;
using std::numbers::pi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Mat random_mat(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

nets::DeepONetArch arch_for(Benchmark b, std::size_t m, std::size_t width, std::size_t depth, std::size_t q) {
  nets::DeepONetArch a;
  a.branch_input = b == Benchmark::stokes ? 2 * m : m;
  a.coord_dim = b == Benchmark::poisson ? 1 : b == Benchmark::heat ? 3 : 2;
  a.width = width;
  a.depth = depth;
  a.outputs = b == Benchmark::stokes ? 3 : 1;
  a.latent = q;
  return a;
}

nets::DeepONetParams random_net(const nets::DeepONetArch& a, std::uint64_t seed) {
  auto p = nets::init_deeponet(a, seed);
  std::mt19937_64 rng(seed + 1000);
  for (std::size_t i = 0; i < p.params.count(); ++i) {
    if (p.params.name(i).ends_with(".b")) p.params.tensor(i) = random_mat(1, p.params.tensor(i).cols(), rng, 0.3);
  }
  return p;
}

physics::TrainingBatch random_batch(Benchmark b, std::size_t samples, std::size_t m, std::uint64_t seed) {
  physics::TrainingBatch batch;
  fields::CollocationConfig cc{b, b == Benchmark::poisson ? 2u : 3u, 4, 2.0};
  std::vector<fields::Ellipse> shapes(samples);
  fields::Dataset ds;
  if (b == Benchmark::stokes) {
    ds = fields::sample_ellipses(samples, m, 0.05, 0.3, seed);
    for (std::size_t s = 0; s < samples; ++s) {
      const Mat row = ds.values.row(static_cast<Index>(s));
      shapes[s] = fields::ellipse_from_boundary(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
  } else {
    fields::GrfConfig g;
    g.m = m;
    g.seed = seed;
    if (b == Benchmark::heat) g.hi = 2.0;
    ds = fields::sample_grf(g, samples);
  }
  batch.sensors = ds.sensors;
  batch.inputs = ds.values;
  for (std::size_t s = 0; s < samples; ++s) {
    auto rng = fields::stream_rng(seed, 7, s);
    batch.collocation.push_back(fields::sample_collocation(cc, shapes[s], rng));
  }
  return batch;
}

// ----- 1 ----------------------------------------------------------------------

Outcome gradient_correctness() {
  double worst = 0;
  std::string where;
  for (Benchmark b : {Benchmark::poisson, Benchmark::heat, Benchmark::stokes}) {
    const auto net = random_net(arch_for(b, 6, 8, 3, b == Benchmark::stokes ? 9 : 8), 11);
    const auto batch = random_batch(b, 2, 6, 5);
    const physics::ResidualSpec spec{b};
    auto w = physics::LossWeights::uniform(physics::term_names(b).size());
    const ad::LossBuilder loss = [&](ad::Tape& t, const ad::BoundParams& bound) {
      return physics::build_loss(t, net, bound, batch, spec, w);
    };
    const auto r = ad::check_gradient(loss, net.params, 1e-6);
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < r.analytic.size(); ++i) {
      diff += std::pow(r.analytic[i] - r.numeric[i], 2);
      norm += std::pow(r.numeric[i], 2);
    }
    const double rel = std::sqrt(diff / norm);
    if (rel >= worst) {
      worst = rel;
      where = fields::to_string(b);
    }
  }
  return {worst < 1e-5, "max relative gradient error " + fmt("%.2e", worst) + " (" + where + ")"};
}

// ----- 2 ----------------------------------------------------------------------

Outcome input_derivatives() {
  const auto net = random_net(arch_for(Benchmark::poisson, 10, 8, 3, 8), 21);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const Mat u = random_mat(1, 10, rng);
    Mat y(1, 1);
    y(0, 0) = unit(rng);
    ad::Tape t;
    nets::DeepONetGraph g(t, net, false);
    const Mat v = t.value(g.evaluate(g.encode(t.constant(u)), y, 1, {0}, {2}));
    const std::vector<double> uv(u.data(), u.data() + 10);
    const double e = 1e-4;
    const auto f = [&](double dy) { return nets::deeponet_forward(net, uv, std::vector<double>{y(0, 0) + dy})[0]; };
    const double d1 = (f(e) - f(-e)) / (2 * e), d2 = (f(e) - 2 * f(0) + f(-e)) / (e * e);
    worst = std::max({worst, std::abs(v(1, 0) - d1) / std::max(1.0, std::abs(d1)),
                      std::abs(v(2, 0) - d2) / std::max(1.0, std::abs(d2))});
  }
  return {worst < 1e-4, "max jet/FD deviation " + fmt("%.2e", worst) + " over 100 points"};
}

// ----- 3 ----------------------------------------------------------------------

Outcome residual_zeros() {
  using physics::ScalarField;
  using physics::VectorField;
  double worst = 0;
  const auto track = [&](double r) { worst = std::max(worst, std::abs(r)); };
  const ScalarField sine = [](std::span<const Jet2> c) { return sin(Jet2(pi) * c[0]) / Jet2(pi * pi); };
  const ScalarField zero = [](std::span<const Jet2>) { return Jet2(0.0); };
  const ScalarField parabola = [](std::span<const Jet2> c) { return c[0] * (Jet2(1.0) - c[0]) / Jet2(2.0); };
  const double nu = 0.01;
  const ScalarField ramp = [](std::span<const Jet2> c) { return c[2]; };
  const ScalarField decay = [nu](std::span<const Jet2> c) {
    return exp(Jet2(-2 * nu * pi * pi) * c[2]) * sin(Jet2(pi) * c[0]) * sin(Jet2(pi) * c[1]);
  };
  const VectorField still = [](std::span<const Jet2>) { return std::array<Jet2, 3>{0.0, 0.0, 0.0}; };
  const VectorField shear = [](std::span<const Jet2> c) { return std::array<Jet2, 3>{c[1], 0.0, 0.0}; };
  const VectorField strain = [](std::span<const Jet2> c) { return std::array<Jet2, 3>{c[0], Jet2(-1.0) * c[1], 0.0}; };
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double x = unit(rng), y = unit(rng), t = 2 * unit(rng);
    track(physics::poisson_residual(sine, std::sin(pi * y), y));
    track(physics::poisson_residual(zero, 0.0, y));
    track(physics::poisson_residual(parabola, 1.0, y));
    track(physics::heat_residual(zero, 0.0, x, y, t, nu));
    track(physics::heat_residual(ramp, 1.0, x, y, t, nu));
    track(physics::heat_residual(decay, 0.0, x, y, t, nu));
    for (const auto* f : {&still, &shear, &strain})
      for (double r : physics::stokes_residuals(*f, x, y)) track(r);
  }
  return {worst < 1e-12, "max |residual| " + fmt("%.2e", worst) + " on closed-form solutions"};
}

// ----- 4 ----------------------------------------------------------------------

double poisson_fd_error(std::size_t n) {
  const oracle::Grid1D g{n};
  const auto x = g.nodes();
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = std::sin(pi * x[i]);
  const auto s = oracle::solve_poisson_fd(u, g.h());
  double e = 0;
  for (std::size_t i = 0; i < x.size(); ++i) e = std::max(e, std::abs(s[i] - std::sin(pi * x[i]) / (pi * pi)));
  return e;
}

double heat_fd_error(std::size_t n, std::size_t steps) {
  const double nu = 0.05, T = 1.0;
  const oracle::HeatGrid g{n, steps, T, nu};
  // s* = sin(pi x) sin(pi y) sin(t) with its forcing.
  const auto f = [nu](double x, double y, double t) {
    const double sp = std::sin(pi * x) * std::sin(pi * y);
    return sp * (std::cos(t) + 2 * pi * pi * nu * std::sin(t));
  };
  const auto s = oracle::solve_heat_fd(f, g);
  double e = 0;
  for (std::size_t k = 0; k <= steps; ++k)
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j <= n; ++j) {
        const double x = static_cast<double>(i) * g.h(), y = static_cast<double>(j) * g.h(), t = static_cast<double>(k) * g.dt();
        e = std::max(e, std::abs(s.at(i, j, k) - std::sin(pi * x) * std::sin(pi * y) * std::sin(t)));
      }
  return e;
}

Outcome oracle_convergence() {
  const double p50 = poisson_fd_error(50), p100 = poisson_fd_error(100), p200 = poisson_fd_error(200);
  const double r1 = p50 / p100, r2 = p100 / p200;
  const double h1 = heat_fd_error(8, 8), h2 = heat_fd_error(16, 16), h3 = heat_fd_error(32, 32);
  const double o1 = std::log2(h1 / h2), o2 = std::log2(h2 / h3);
  const bool ok = r1 >= 3.5 && r1 <= 4.5 && r2 >= 3.5 && r2 <= 4.5 && o1 >= 1.8 && o2 >= 1.8;
  return {ok, "poisson ratios " + fmt("%.3f", r1) + ", " + fmt("%.3f", r2) + "; heat orders " + fmt("%.3f", o1) +
                  ", " + fmt("%.3f", o2)};
}

// ----- CLI pipelines -----------------------------------------------------------

struct Cli {
  fs::path dir;
  std::string benchmark;

  bool run(const std::string& cmd, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{cmd, "--benchmark", benchmark, "--preset", "desk", "--out", dir.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    std::ostringstream out, err;
    std::cout << "  $ pidon";
    for (const auto& a : args) std::cout << ' ' << a;
    std::cout << std::endl;
    const int code = cli::run_cli(args, out, err);
    if (code != 0) std::cout << "    exit " << code << ": " << err.str();
    if (!err.str().empty() && code == 0) std::cout << "    " << err.str();
    return code == 0;
  }
};

std::map<std::string, double> read_metrics(const fs::path& p) {
  std::map<std::string, double> m;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) m[line.substr(0, eq)] = std::stod(line.substr(eq + 3));
  }
  return m;
}

std::vector<std::vector<double>> read_csv_columns(const fs::path& p) {
  std::ifstream in(p);
  std::string line, cell;
  std::getline(in, line);
  std::vector<std::vector<double>> cols;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      if (cols.size() <= c) cols.emplace_back();
      cols[c++].push_back(std::stod(cell));
    }
  }
  return cols;
}

// Largest increase of the moving average of the recorded cost trace.
double moving_average_rise(const std::vector<double>& J, std::size_t window) {
  if (J.size() <= window) return 0.0;
  double sum = 0, prev = 0, rise = 0;
  for (std::size_t i = 0; i < J.size(); ++i) {
    sum += J[i];
    if (i >= window) sum -= J[i - window];
    if (i + 1 >= window) {
      const double avg = sum / static_cast<double>(window);
      if (i + 1 > window) rise = std::max(rise, (avg - prev) / std::abs(prev));
      prev = avg;
    }
  }
  return rise;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string trace_note(const fs::path& dir) {
  const auto trace = read_csv_columns(dir / "trace.csv");
  if (trace.size() < 2) return "";
  return "; J moving-average max rise " + fmt("%.1e", moving_average_rise(trace[1], 50));
}

// ----- 5 ----------------------------------------------------------------------

Outcome poisson_end_to_end(const fs::path& work) {
  const Cli cli{work / "poisson", "poisson"};
  fs::remove_all(cli.dir);
  const auto t0 = std::chrono::steady_clock::now();
  if (!cli.run("make-dataset") || !cli.run("train-operator") || !cli.run("optimize-control")) {
    return {false, "pipeline failed"};
  }
  const double secs = seconds_since(t0);
  const auto tm = read_metrics(cli.dir / "train-operator.metrics");
  const auto cm = read_metrics(cli.dir / "optimize-control.metrics");
  const double test = tm.at("test_error"), ctrl = cm.at("control_error");
  const bool ok = test < 0.05 && ctrl < 0.05 && secs < 1800;
  return {ok, "test error " + fmt("%.4f", test) + ", control error " + fmt("%.4f", ctrl) + ", " + fmt("%.0f", secs) +
                  " s" + trace_note(cli.dir)};
}

// ----- 6 ----------------------------------------------------------------------

Outcome heat_manufactured(const fs::path& work) {
  const Cli cli{work / "heat", "heat"};
  fs::remove_all(cli.dir);
  const auto t0 = std::chrono::steady_clock::now();
  if (!cli.run("make-dataset") || !cli.run("train-operator") || !cli.run("optimize-control")) {
    return {false, "pipeline failed"};
  }
  const double secs = seconds_since(t0);
  const auto loss = read_csv_columns(cli.dir / "loss.csv");
  const auto& total = loss.back();
  // Final level: mean of the last five logged rows (single batches are noisy).
  double tail = 0;
  const std::size_t n = std::min<std::size_t>(5, total.size());
  for (std::size_t i = total.size() - n; i < total.size(); ++i) tail += total[i];
  tail /= static_cast<double>(n);
  const double drop = std::log10(total.front() / tail);
  const auto tm = read_metrics(cli.dir / "train-operator.metrics");
  const auto cm = read_metrics(cli.dir / "optimize-control.metrics");
  const double ctrl = cm.at("control_error");
  const bool ok = ctrl < 0.15 && drop >= 2.0 && secs < 7200;
  return {ok, "control error " + fmt("%.4f", ctrl) + ", loss drop " + fmt("%.2f", drop) + " decades, test error " +
                  fmt("%.4f", tm.count("test_error") ? tm.at("test_error") : NAN) + ", " + fmt("%.0f", secs) + " s" +
                  trace_note(cli.dir)};
}

// ----- 7 ----------------------------------------------------------------------

Outcome stokes_properties(const fs::path& work) {
  // Quadrature against closed forms.
  const control::VelocityGradient shear = [](double, double) { return std::array<double, 4>{0.0, 1.0, 0.0, 0.0}; };
  const control::VelocityGradient still = [](double, double) { return std::array<double, 4>{0.0, 0.0, 0.0, 0.0}; };
  double quad = 0;
  for (const fields::Ellipse e : {fields::Ellipse{0.12, 0.12}, fields::Ellipse{0.2, 0.072}}) {
    quad = std::max(quad, std::abs(control::dissipation(shear, e, 200) - (1 - pi * e.a * e.b)));
    quad = std::max(quad, std::abs(control::dissipation(still, e, 200)));
  }
  {
    auto zero = nets::init_deeponet(arch_for(Benchmark::stokes, 100, 8, 3, 9), 1);
    for (std::size_t i = 0; i < zero.params.count(); ++i) zero.params.tensor(i).setZero();
    quad = std::max(quad, std::abs(control::stokes_cost(0.12, zero, control::stokes_cost_spec(100, 200))));
  }

  const Cli cli{work / "stokes", "stokes"};
  fs::remove_all(cli.dir);
  const auto t0 = std::chrono::steady_clock::now();
  if (!cli.run("make-dataset") || !cli.run("train-operator") || !cli.run("optimize-control")) {
    return {false, "pipeline failed; quadrature deviation " + fmt("%.1e", quad)};
  }
  const double secs = seconds_since(t0);
  const auto tm = read_metrics(cli.dir / "train-operator.metrics");
  const auto cm = read_metrics(cli.dir / "optimize-control.metrics");
  const double ratio = tm.at("divergence_ratio");
  const double a = cm.at("a_star"), b = cm.at("b_star");
  const double off = std::abs(a - cm.at("sweep_a_min")) / cm.at("sweep_cell");
  const bool ok = ratio <= 10 && quad < 1e-3 && a > b && off <= 1.0 + 1e-9;
  return {ok, "divergence test/train " + fmt("%.3f", ratio) + ", quadrature deviation " + fmt("%.1e", quad) +
                  ", a* " + fmt("%.4f", a) + " b* " + fmt("%.4f", b) + ", sweep offset " + fmt("%.2f", off) +
                  " cells, " + fmt("%.0f", secs) + " s"};
}

// ----- 8 ----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& work) {
  const fs::path a = work / "det_a", b = work / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::vector<std::string> small{"--set", "data.n_train=40", "--set", "data.n_test=8", "--set", "train.iterations=20",
                                       "--set", "train.log_every=5", "--set", "train.batch_samples=8",
                                       "--set", "control.iterations=20", "--set", "train.adaptive=true",
                                       "--set", "train.weight_interval=10", "--threads", "1"};
  const Cli first{a, "poisson"};
  if (!first.run("make-dataset", small) || !first.run("train-operator", small) || !first.run("optimize-control", small)) {
    return {false, "pipeline failed"};
  }
  std::ostringstream sink;
  for (const char* cmd : {"make-dataset", "train-operator", "optimize-control"}) {
    const std::vector<std::string> args{cmd, "--config", (a / (std::string(cmd) + ".manifest")).string(), "--out", b.string()};
    if (cli::run_cli(args, sink, sink) != 0) return {false, std::string("rerun of ") + cmd + " failed: " + sink.str()};
  }
  std::size_t same = 0, total = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    if (entry.path().extension() == ".metrics") continue;  // wall-clock time
    ++total;
    same += slurp(entry.path()) == slurp(b / entry.path().filename()) ? 1 : 0;
  }
  // Checkpoint write -> read -> write round trip.
  const auto ck = nets::read_checkpoint(a / "checkpoint.bin");
  nets::write_checkpoint(work / "det_roundtrip.bin", ck);
  const auto back = nets::read_checkpoint(work / "det_roundtrip.bin");
  const bool exact = back.manifest == ck.manifest && back.tensors == ck.tensors &&
                     slurp(work / "det_roundtrip.bin") == slurp(a / "checkpoint.bin");
  return {same == total && exact, std::to_string(same) + "/" + std::to_string(total) +
                                      " artifacts identical on manifest rerun; checkpoint round trip " +
                                      (exact ? "exact" : "differs")};
}

// ----- 9 ----------------------------------------------------------------------

Outcome weight_fixed_point() {
  // Two linear residual terms whose trace proxies are 100 : 1.
  ad::ParamSet ps;
  ps.add("w", Mat::Constant(1, 4, 0.3));
  Mat x(1, 4);
  x << 1.0, -2.0, 0.5, 3.0;
  const std::vector<std::size_t> probes{4, 4};
  const auto build = [&](ad::Tape& t, std::size_t term, std::size_t) {
    const auto b = ad::bind(t, ps);
    const Mat scale = term == 0 ? Mat(10.0 * x) : x;
    return physics::ProbeResidual{ad::mul(t, b[0], t.constant(scale)), b};
  };
  physics::LossWeights w = physics::LossWeights::uniform(2);
  w.smoothing = 0.9;
  for (int i = 0; i < 200; ++i) w = physics::apply_trace_update(w, physics::trace_proxies(probes, build));
  const double ratio = w.lambda[1] / w.lambda[0];
  return {std::abs(ratio / 100.0 - 1.0) < 0.05, "lambda ratio " + fmt("%.4f", ratio) + " (fixed point 100)"};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
  fs::path work = fs::temp_directory_path() / "pidon_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string n;
      while (std::getline(ss, n, ',')) only.insert(std::stoi(n));
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"input-derivative correctness", input_derivatives},
      {"analytic-residual zeros", residual_zeros},
      {"oracle convergence", oracle_convergence},
      {"poisson end-to-end", [&] { return poisson_end_to_end(work); }},
      {"heat manufactured control", [&] { return heat_manufactured(work); }},
      {"stokes properties", [&] { return stokes_properties(work); }},
      {"determinism and persistence", [&] { return determinism(work); }},
      {"loss-weighting fixed point", weight_fixed_point},
  };
  int failed = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = "criterion " + std::to_string(id) + " [" + criteria[i].first + "]: " +
                             (o.pass ? "PASS" : "FAIL") + " -- " + o.detail + " (" + fmt("%.1f", seconds_since(t0)) + " s)";
    std::cout << line << std::endl;
    lines.push_back(line);
    failed += o.pass ? 0 : 1;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  return failed == 0 ? 0 : 1;
}
