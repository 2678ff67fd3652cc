#include "pidon/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include "pidon/cli/config.hpp"
#include "pidon/control/control.hpp"
#include "pidon/errors.hpp"
#include "pidon/nets/deeponet.hpp"
#include "pidon/nets/mlp.hpp"
#include "pidon/oracle/fd.hpp"
#include "pidon/trainer/trainer.hpp"

namespace pidon::cli {

namespace fs = std::filesystem;
using ad::Index;
using ad::Mat;
using fields::Benchmark;
using std::numbers::pi;

namespace {

struct Options {
  std::string benchmark;
  std::string preset;
  std::string config;
  std::string out = ".";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool resume = false;
  std::string data;
  std::string checkpoint;
  std::string pred;
  std::string ref;
  std::string input;
};

// Seeds of the independent random streams of one run.
enum SeedTag : std::uint64_t { seed_train_data = 11, seed_test_data, seed_init, seed_batches, seed_control };

std::uint64_t derive_seed(std::uint64_t seed, SeedTag tag) { return fields::stream_rng(seed, tag, 0)(); }

Config resolve(const Options& o) {
  std::optional<Config> file;
  if (!o.config.empty()) file = load_config_file(o.config);
  std::string bench = o.benchmark;
  if (bench.empty() && file && file->has("run.benchmark")) bench = file->str("run.benchmark");
  if (bench.empty()) throw ConfigError("no benchmark given (--benchmark or run.benchmark in the config file)");
  std::string name = o.preset;
  if (name.empty() && file && file->has("run.preset")) name = file->str("run.preset");
  if (name.empty()) name = "desk";
  Config cfg = preset(fields::parse_benchmark(bench), name);
  if (file) cfg.merge(*file);
  if (!o.benchmark.empty()) cfg.set("run.benchmark", o.benchmark);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.set("run.seed", std::to_string(*o.seed));
  if (o.threads) cfg.set("run.threads", std::to_string(*o.threads));
  if (cfg.benchmark() != fields::parse_benchmark(bench)) throw ConfigError("config file and --benchmark disagree");
  return cfg;
}

fs::path prepare_out(const std::string& out) {
  const fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create output directory " + p.string());
  const fs::path probe = p / ".write-test";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory " + p.string() + " is not writable");
  }
  fs::remove(probe, ec);
  return p;
}

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  std::vector<std::string> lines{"pidon " + command, "re-run: pidon " + command + " --config <this file> --out <dir>"};
  for (const auto& p : inputs) {
    if (fs::exists(p)) lines.push_back("input " + p.filename().string() + " " + git_blob_hash_file(p));
  }
  for (const auto& p : outputs) {
    if (fs::exists(p)) lines.push_back("output " + p.filename().string() + " " + git_blob_hash_file(p));
  }
  std::ofstream f(dir / (command + ".manifest"));
  if (!f) throw IoError("cannot write manifest in " + dir.string());
  f << cfg.to_ini(lines);
}

class Metrics {
 public:
  explicit Metrics(std::ostream& out) : out_(out) {}
  void add(const std::string& key, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    add(key, std::string(buf));
  }
  void add(const std::string& key, const std::string& v) {
    rows_.emplace_back(key, v);
    out_ << key << " = " << v << '\n';
  }
  void write(const fs::path& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    for (const auto& [k, v] : rows_) f << k << " = " << v << '\n';
  }

 private:
  std::ostream& out_;
  std::vector<std::pair<std::string, std::string>> rows_;
};

// ----- numeric CSV with a header ---------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(std::size_t c) const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
  }
};

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  Table t;
  std::string line, cell;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  std::stringstream hs(line);
  while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(path.string() + ": non-numeric cell '" + cell + "'");
      }
    }
    if (row.size() != t.header.size()) throw IoError(path.string() + ": row width differs from the header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_matrix_csv(const fs::path& path, const std::vector<std::string>& header, const Mat& m) {
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(m.cols()));
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) cols[static_cast<std::size_t>(c)].push_back(m(r, c));
  oracle::write_columns_csv(path, header, cols);
}

Mat read_matrix_csv(const fs::path& path) {
  const Table t = read_table(path);
  Mat m(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.header.size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = t.rows[r][c];
  return m;
}

// ----- configuration -> library structs --------------------------------------

nets::DeepONetArch arch_from(const Config& c) {
  nets::DeepONetArch a;
  const Benchmark b = c.benchmark();
  a.kind = nets::parse_deeponet_kind(c.str("model.kind"));
  a.branch_input = (b == Benchmark::stokes ? 2 : 1) * c.count("data.m");
  a.coord_dim = b == Benchmark::poisson ? 1 : b == Benchmark::heat ? 3 : 2;
  a.width = c.count("model.width");
  a.depth = c.count("model.depth");
  a.latent = c.count("model.latent");
  a.outputs = b == Benchmark::stokes ? 3 : 1;
  a.validate();
  return a;
}

physics::ResidualSpec residual_spec(const Config& c) {
  physics::ResidualSpec s;
  s.benchmark = c.benchmark();
  s.kappa = c.num("physics.kappa");
  s.nu = c.num("physics.nu");
  s.final_time = c.num("physics.final_time");
  s.validate();
  return s;
}

physics::LossWeights weights_from(const Config& c) {
  const std::size_t terms = physics::term_names(c.benchmark()).size();
  auto w = physics::LossWeights::uniform(terms);
  // Comma-separated starting weights in term order; one value applies to all terms.
  std::vector<double> init;
  std::stringstream ss(c.str("train.initial_weights"));
  for (std::string v; std::getline(ss, v, ',');) {
    try {
      init.push_back(std::stod(v));
    } catch (const std::exception&) {
      throw ConfigError("train.initial_weights: '" + v + "' is not a number");
    }
    if (!(init.back() > 0) || !std::isfinite(init.back())) throw ConfigError("train.initial_weights must be positive");
  }
  if (init.size() == 1) init.assign(terms, init[0]);
  if (init.size() != terms) {
    throw ConfigError("train.initial_weights needs " + std::to_string(terms) + " values (" + c.str("run.benchmark") + ")");
  }
  w.lambda = init;
  w.adaptive = c.flag("train.adaptive");
  w.interval = c.count("train.weight_interval");
  w.smoothing = c.num("train.weight_smoothing");
  w.probe_samples = c.count("train.probe_samples");
  w.probe_points = c.count("train.probe_points");
  return w;
}

trainer::TrainConfig train_config(const Config& c, const fs::path& out) {
  trainer::TrainConfig t;
  t.iterations = c.count("train.iterations");
  t.batch_samples = c.count("train.batch_samples");
  t.collocation = {c.benchmark(), c.count("train.boundary_points"), c.count("train.interior_points"),
                   c.num("physics.final_time")};
  t.schedule = {c.num("train.lr"), c.num("train.decay_rate"), c.count("train.decay_steps")};
  t.seed = derive_seed(c.u64("run.seed"), seed_batches);
  t.log_every = c.count("train.log_every");
  t.checkpoint_every = c.count("train.checkpoint_every");
  t.out_dir = out;
  t.shard_samples = c.count("train.shard_samples");
  t.threads = std::max<std::size_t>(1, c.count("run.threads"));
  t.validate();
  return t;
}

oracle::HeatGrid heat_grid(const Config& c) {
  oracle::HeatGrid g{c.count("oracle.heat_space"), c.count("oracle.heat_steps"), c.num("physics.final_time"),
                     c.num("physics.nu")};
  g.validate();
  return g;
}

fields::GrfConfig grf_config(const Config& c, SeedTag tag) {
  fields::GrfConfig g;
  g.length_scale = c.num("data.length_scale");
  g.m = c.count("data.m");
  g.lo = 0.0;
  g.hi = c.benchmark() == Benchmark::heat ? c.num("physics.final_time") : 1.0;
  g.seed = derive_seed(c.u64("run.seed"), tag);
  return g;
}

fields::Dataset make_inputs(const Config& c, std::size_t n, SeedTag tag) {
  if (c.benchmark() == Benchmark::stokes) {
    return fields::sample_ellipses(n, c.count("data.m"), c.num("data.axis_lo"), c.num("data.axis_hi"),
                                   derive_seed(c.u64("run.seed"), tag));
  }
  return fields::sample_grf(grf_config(c, tag), n);
}

// Reference solutions of the test inputs on the oracle grid.
trainer::TestSet make_test_set(const Config& c, const fields::Dataset& test) {
  trainer::TestSet ts;
  ts.inputs = test.values;
  const std::span<const double> xs(test.sensors.data(), static_cast<std::size_t>(test.sensors.rows()));
  if (c.benchmark() == Benchmark::poisson) {
    const oracle::Grid1D g{c.count("oracle.intervals")};
    const auto nodes = g.nodes();
    ts.points = Eigen::Map<const Mat>(nodes.data(), static_cast<Index>(nodes.size()), 1);
    ts.reference.resize(test.values.rows(), static_cast<Index>(nodes.size()));
    std::vector<double> u(nodes.size()), row(xs.size());
    for (Index s = 0; s < test.values.rows(); ++s) {
      for (std::size_t i = 0; i < xs.size(); ++i) row[i] = test.values(s, static_cast<Index>(i));
      for (std::size_t i = 0; i < nodes.size(); ++i) u[i] = oracle::interp1(xs, row, nodes[i]);
      const auto sol = oracle::solve_poisson_fd(u, g.h());
      for (std::size_t i = 0; i < sol.size(); ++i) ts.reference(s, static_cast<Index>(i)) = sol[i];
    }
    return ts;
  }
  if (c.benchmark() != Benchmark::heat) throw ConfigError("no reference solver for " + c.str("run.benchmark"));
  const auto grid = heat_grid(c);
  const std::size_t stride = std::max<std::size_t>(1, c.count("oracle.test_stride"));
  const std::size_t tstride = std::max<std::size_t>(1, stride * grid.time_steps / grid.space_intervals);
  std::vector<std::array<std::size_t, 3>> idx;
  for (std::size_t k = 0; k <= grid.time_steps; k += tstride)
    for (std::size_t i = 0; i <= grid.space_intervals; i += stride)
      for (std::size_t j = 0; j <= grid.space_intervals; j += stride) idx.push_back({i, j, k});
  ts.points.resize(static_cast<Index>(idx.size()), 3);
  for (std::size_t p = 0; p < idx.size(); ++p) {
    ts.points(static_cast<Index>(p), 0) = static_cast<double>(idx[p][0]) * grid.h();
    ts.points(static_cast<Index>(p), 1) = static_cast<double>(idx[p][1]) * grid.h();
    ts.points(static_cast<Index>(p), 2) = static_cast<double>(idx[p][2]) * grid.dt();
  }
  ts.reference.resize(test.values.rows(), static_cast<Index>(idx.size()));
  std::vector<double> row(xs.size());
  for (Index s = 0; s < test.values.rows(); ++s) {
    for (std::size_t i = 0; i < xs.size(); ++i) row[i] = test.values(s, static_cast<Index>(i));
    const auto sol = oracle::solve_heat_fd(xs, row, grid);
    for (std::size_t p = 0; p < idx.size(); ++p) ts.reference(s, static_cast<Index>(p)) = sol.at(idx[p][0], idx[p][1], idx[p][2]);
  }
  return ts;
}

std::vector<std::string> coordinate_names(Benchmark b) {
  if (b == Benchmark::poisson) return {"y"};
  if (b == Benchmark::heat) return {"x", "y", "t"};
  return {"x", "y"};
}

void write_test_set(const fs::path& dir, Benchmark b, const trainer::TestSet& ts) {
  write_matrix_csv(dir / "test_points.csv", coordinate_names(b), ts.points);
  std::vector<std::string> h;
  for (Index p = 0; p < ts.reference.cols(); ++p) h.push_back("p" + std::to_string(p));
  write_matrix_csv(dir / "test_reference.csv", h, ts.reference);
}

std::optional<trainer::TestSet> read_test_set(const fs::path& dir) {
  if (!fs::exists(dir / "test.csv") || !fs::exists(dir / "test_reference.csv")) return std::nullopt;
  trainer::TestSet ts;
  ts.inputs = fields::read_dataset(dir / "test.csv").values;
  ts.points = read_matrix_csv(dir / "test_points.csv");
  ts.reference = read_matrix_csv(dir / "test_reference.csv");
  return ts;
}

fields::Dataset read_training_data(const fs::path& dir, const Config& c) {
  const fs::path p = dir / "train.csv";
  if (!fs::exists(p)) throw IoError("no dataset at " + p.string() + " (run make-dataset first)");
  fields::Dataset d = fields::read_dataset(p);
  const bool curves = c.benchmark() == Benchmark::stokes;
  if ((d.kind == "ellipse") != curves) throw ArtifactMismatch(p.string() + " holds " + d.kind + " inputs, not " + c.str("run.benchmark") + " inputs");
  return d;
}

// Interior points of `shapes` rows drawn from a fixed stream: divergence probes.
physics::TrainingBatch probe_batch(const Config& c, const fields::Dataset& d, std::size_t count, std::uint64_t stream) {
  physics::TrainingBatch b;
  const std::size_t n = std::min(count, d.samples());
  b.inputs = d.values.topRows(static_cast<Index>(n));
  b.sensors = d.sensors;
  const fields::CollocationConfig cc{Benchmark::stokes, 1, c.count("oracle.div_points"), 1.0};
  for (std::size_t s = 0; s < n; ++s) {
    const Mat row = d.values.row(static_cast<Index>(s));
    const auto shape = fields::ellipse_from_boundary(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    auto rng = fields::stream_rng(c.u64("run.seed"), stream, s);
    b.collocation.push_back(fields::sample_collocation(cc, shape, rng));
  }
  return b;
}

void report_generalization(const Config& c, const nets::DeepONetParams& params, const fs::path& data_dir,
                           const fields::Dataset& train, Metrics& m) {
  if (c.benchmark() == Benchmark::stokes) {
    if (!fs::exists(data_dir / "test.csv")) return;
    const auto test = fields::read_dataset(data_dir / "test.csv");
    const std::size_t k = std::min<std::size_t>(c.count("data.n_test"), 50);
    const auto spec = residual_spec(c);
    const auto rt = physics::mean_abs_residuals(params, probe_batch(c, train, k, 901), spec);
    const auto rs = physics::mean_abs_residuals(params, probe_batch(c, test, k, 902), spec);
    m.add("divergence_train", rt[5]);
    m.add("divergence_test", rs[5]);
    m.add("divergence_ratio", rs[5] / rt[5]);
    m.add("momentum_x_test", rs[3]);
    m.add("momentum_y_test", rs[4]);
    return;
  }
  if (const auto ts = read_test_set(data_dir)) m.add("test_error", trainer::test_error(params, *ts));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ----- commands ----------------------------------------------------------------

int cmd_sample_grf(const Options& o, std::ostream& out) {
  const Config c = resolve(o);
  if (c.benchmark() == Benchmark::stokes) throw ConfigError("sample-grf: stokes inputs are ellipses (use make-dataset)");
  const fs::path dir = prepare_out(o.out);
  const auto g = grf_config(c, seed_train_data);
  double jitter = 0;
  fields::grf_cholesky(g, &jitter);
  const auto ds = fields::sample_grf(g, c.count("data.n_train"));
  fields::write_dataset(dir / "grf.csv", ds);
  write_manifest(dir, "sample-grf", c, {}, {dir / "grf.csv", fields::sensor_grid_path(dir / "grf.csv")});
  Metrics m(out);
  m.add("samples", static_cast<double>(ds.samples()));
  m.add("sensors", static_cast<double>(ds.values.cols()));
  m.add("length_scale", g.length_scale);
  m.add("jitter", jitter);
  return exit_ok;
}

int cmd_make_dataset(const Options& o, std::ostream& out) {
  const Config c = resolve(o);
  const fs::path dir = prepare_out(o.out);
  const auto train = make_inputs(c, c.count("data.n_train"), seed_train_data);
  const auto test = make_inputs(c, c.count("data.n_test"), seed_test_data);
  fields::write_dataset(dir / "train.csv", train);
  fields::write_dataset(dir / "test.csv", test);
  std::vector<fs::path> outputs{dir / "train.csv", dir / "test.csv"};
  if (c.benchmark() != Benchmark::stokes) {
    write_test_set(dir, c.benchmark(), make_test_set(c, test));
    outputs.push_back(dir / "test_points.csv");
    outputs.push_back(dir / "test_reference.csv");
  }
  write_manifest(dir, "make-dataset", c, {}, outputs);
  Metrics m(out);
  m.add("train_samples", static_cast<double>(train.samples()));
  m.add("test_samples", static_cast<double>(test.samples()));
  m.add("columns", static_cast<double>(train.values.cols()));
  return exit_ok;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const Config c = resolve(o);
  const fs::path dir = prepare_out(o.out);
  const fs::path data_dir = o.data.empty() ? dir : fs::path(o.data);
  const auto data = read_training_data(data_dir, c);
  const auto arch = arch_from(c);
  const auto tc = train_config(c, dir);

  trainer::TrainState st;
  if (o.resume) {
    const fs::path ck = o.checkpoint.empty() ? dir / "checkpoint.bin" : fs::path(o.checkpoint);
    st = trainer::restore_checkpoint(nets::read_checkpoint(ck));
    if (!(st.params.arch == arch)) throw ArtifactMismatch("checkpoint " + ck.string() + " was trained with a different architecture");
    const auto w = weights_from(c);
    if (st.weights.lambda.size() != w.lambda.size()) throw ArtifactMismatch("checkpoint loss weights do not fit the benchmark");
    st.weights.interval = w.interval;
    st.weights.smoothing = w.smoothing;
    st.weights.probe_samples = w.probe_samples;
    st.weights.probe_points = w.probe_points;
    out << "resuming at iteration " << st.iteration << '\n';
  } else {
    st.params = nets::init_deeponet(arch, derive_seed(c.u64("run.seed"), seed_init));
    st.weights = weights_from(c);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto log = [&](const physics::LossReport& r) {
    out << "iter " << r.iteration << " total " << fmt(r.total);
    for (std::size_t k = 0; k < r.names.size(); ++k) out << ' ' << r.names[k] << ' ' << fmt(r.terms[k]);
    out << '\n' << std::flush;
  };
  trainer::TrainResult res;
  try {
    res = trainer::train_operator(std::move(st), data, residual_spec(c), tc, log);
  } catch (const NumericError& e) {
    write_manifest(dir, "train-operator", c, {data_dir / "train.csv"}, {dir / "loss.csv", dir / "checkpoint.bin"});
    err << "error: " << e.what() << " (loss.csv and the last checkpoint are kept)\n";
    return exit_numeric;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Metrics m(out);
  m.add("iterations", static_cast<double>(res.state.iteration));
  m.add("train_seconds", secs);
  if (!res.history.empty()) {
    const auto& last = res.history.back();
    m.add("final_total", last.total);
    for (std::size_t k = 0; k < last.names.size(); ++k) m.add("final_L_" + last.names[k], last.terms[k]);
  }
  report_generalization(c, res.state.params, data_dir, data, m);
  m.write(dir / "train-operator.metrics");
  write_manifest(dir, "train-operator", c, {data_dir / "train.csv", data_dir / "test.csv"},
                 {dir / "checkpoint.bin", dir / "loss.csv"});
  return exit_ok;
}

nets::DeepONetParams load_surrogate(const Options& o, const fs::path& dir, const Config& c) {
  const fs::path ck = o.checkpoint.empty() ? dir / "checkpoint.bin" : fs::path(o.checkpoint);
  auto st = trainer::restore_checkpoint(nets::read_checkpoint(ck));
  if (!(st.params.arch == arch_from(c))) {
    throw ArtifactMismatch("checkpoint " + ck.string() + " does not match the configured architecture");
  }
  return st.params;
}

Mat sensor_grid(const Options& o, const fs::path& dir, const Config& c) {
  const fs::path data_dir = o.data.empty() ? dir : fs::path(o.data);
  if (fs::exists(data_dir / "train.csv")) return read_training_data(data_dir, c).sensors;
  const auto x = fields::uniform_grid(0.0, c.benchmark() == Benchmark::heat ? c.num("physics.final_time") : 1.0,
                                      c.count("data.m"));
  return Eigen::Map<const Mat>(x.data(), static_cast<Index>(x.size()), 1);
}

control::OptimizeConfig optimize_config(const Config& c) {
  control::OptimizeConfig oc;
  oc.iterations = c.count("control.iterations");
  oc.schedule = {c.num("control.lr"), c.num("control.decay_rate"), c.count("control.decay_steps")};
  oc.snapshot_every = c.count("control.snapshot_every");
  return oc;
}

void write_trace(const fs::path& dir, const control::OptimizationTrace& tr) {
  std::vector<double> it(tr.J.size());
  for (std::size_t i = 0; i < it.size(); ++i) it[i] = static_cast<double>(i);
  oracle::write_columns_csv(dir / "trace.csv", {"iteration", "J"}, {it, tr.J});
  if (tr.snapshots.empty()) return;
  std::ofstream f(dir / "control_snapshots.csv");
  f << "iteration";
  for (std::size_t k = 0; k < tr.snapshots.front().second.size(); ++k) f << ",c" << k;
  f << '\n';
  char buf[32];
  for (const auto& [i, v] : tr.snapshots) {
    f << i;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      f << ',' << buf;
    }
    f << '\n';
  }
}

double control_error(const std::vector<double>& u, const std::vector<double>& ref) {
  return trainer::relative_l2_error(u, ref).value;
}

int cmd_optimize(const Options& o, std::ostream& out, std::ostream& err) {
  const Config c = resolve(o);
  const fs::path dir = prepare_out(o.out);
  const auto net = load_surrogate(o, dir, c);
  const auto oc = optimize_config(c);
  Metrics m(out);
  const fs::path ck = o.checkpoint.empty() ? dir / "checkpoint.bin" : fs::path(o.checkpoint);
  std::vector<fs::path> outputs{dir / "trace.csv"};

  if (c.benchmark() == Benchmark::stokes) {
    auto spec = control::stokes_cost_spec(c.count("data.m"), c.count("control.grid_nodes"));
    const std::size_t n = c.count("control.sweep_points");
    if (n < 2) throw ConfigError("control.sweep_points must be >= 2");
    std::vector<double> as(n), bs(n), js(n);
    for (std::size_t k = 0; k < n; ++k) {
      as[k] = spec.a_min + (spec.a_max - spec.a_min) * static_cast<double>(k) / static_cast<double>(n - 1);
      bs[k] = fields::volume_constrained_b(as[k], spec.area);
      js[k] = control::stokes_cost(as[k], net, spec);
    }
    oracle::write_columns_csv(dir / "sweep.csv", {"a", "b", "J"}, {as, bs, js});
    const std::size_t best = static_cast<std::size_t>(std::min_element(js.begin(), js.end()) - js.begin());
    const double a0 = c.num("control.a0");
    if (a0 < spec.a_min || a0 > spec.a_max) err << "warning: a0 = " << a0 << " clamped into [" << spec.a_min << ", " << spec.a_max << "]\n";
    const auto r = control::optimize_shape(a0, net, spec, oc);
    write_trace(dir, r.trace);
    if (r.clamped) err << "warning: the semi-axis reached the bounds [" << spec.a_min << ", " << spec.a_max << "]\n";
    const double b = fields::volume_constrained_b(r.a, spec.area);
    const double jf = control::stokes_cost(r.a, net, spec);
    oracle::write_columns_csv(dir / "shape.csv", {"a", "b", "J"}, {{r.a}, {b}, {jf}});
    outputs.insert(outputs.end(), {dir / "sweep.csv", dir / "shape.csv"});
    m.add("a_star", r.a);
    m.add("b_star", b);
    m.add("J_star", jf);
    m.add("sweep_a_min", as[best]);
    m.add("sweep_J_min", js[best]);
    m.add("sweep_cell", as[1] - as[0]);
    m.write(dir / "optimize-control.metrics");
    write_manifest(dir, "optimize-control", c, {ck}, outputs);
    if (r.trace.failure) {
      err << "error: cost diverged at " << *r.trace.failure << '\n';
      return exit_numeric;
    }
    return exit_ok;
  }

  const Mat sensors = sensor_grid(o, dir, c);
  control::CostSpec spec;
  std::vector<double> reference;  // known optimal control on the sensors, if any
  const double T = c.num("physics.final_time");
  if (c.benchmark() == Benchmark::poisson) {
    spec = control::poisson_cost_spec(sensors, c.count("control.quadrature_nodes"));
    if (c.str("control.target") != "closed-form") throw ConfigError("poisson supports control.target = closed-form only");
    for (Index i = 0; i < sensors.rows(); ++i) reference.push_back(std::sin(pi * sensors(i, 0)));
  } else {
    const std::string target = c.str("control.target");
    const std::size_t ns = c.count("control.quadrature_nodes"), nt = c.count("control.time_nodes");
    if (target == "closed-form") {
      spec = control::heat_cost_spec(sensors, ns, nt, T, control::heat_default_target);
    } else if (target == "manufactured") {
      const auto u_star = [T](double t) { return std::sin(pi * t / T); };
      spec = control::heat_cost_spec(sensors, ns, nt, T, [](double, double, double) { return 0.0; });
      const auto& q = spec.quadrature.points;
      std::vector<double> x, y, t;
      for (Index i = 0; i < q.rows(); ++i) {
        x.push_back(q(i, 0));
        y.push_back(q(i, 1));
        t.push_back(q(i, 2));
      }
      spec.target = oracle::manufacture_heat_target(u_star, heat_grid(c), x, y, t);
      for (Index i = 0; i < sensors.rows(); ++i) reference.push_back(u_star(sensors(i, 0)));
    } else {
      throw ConfigError("control.target must be closed-form or manufactured");
    }
  }
  spec.alpha_reg = c.num("control.alpha_reg");

  const auto ctrl0 = nets::init_mlp(nets::MlpArch::uniform(1, c.count("control.width"), c.count("control.depth"), 1),
                                    derive_seed(c.u64("control.seed"), seed_control));
  const auto r = control::optimize_mlp_control(ctrl0, net, spec, oc);
  write_trace(dir, r.trace);
  const auto u = control::control_values(r.control, sensors);
  std::vector<double> xs(sensors.data(), sensors.data() + sensors.rows());
  std::vector<std::vector<double>> cols{xs, u};
  std::vector<std::string> head{c.benchmark() == Benchmark::poisson ? "x" : "t", "u"};
  if (!reference.empty()) {
    cols.push_back(reference);
    head.push_back("u_reference");
  }
  oracle::write_columns_csv(dir / "control.csv", head, cols);
  outputs.push_back(dir / "control.csv");

  // Controlled state against the target on the quadrature grid (t = 1 slice for heat).
  const Mat urow = Eigen::Map<const Mat>(u.data(), 1, static_cast<Index>(u.size()));
  const Mat s = nets::deeponet_predict(net, urow, spec.quadrature.points);
  if (c.benchmark() == Benchmark::poisson) {
    std::vector<double> y(spec.quadrature.points.data(), spec.quadrature.points.data() + spec.quadrature.points.rows());
    oracle::write_columns_csv(dir / "state.csv", {"y", "s", "d"}, {y, std::vector<double>(s.data(), s.data() + s.rows()), spec.target});
    outputs.push_back(dir / "state.csv");
  } else {
    const auto& q = spec.quadrature.points;
    Index nearest = 0;
    for (Index i = 0; i < q.rows(); ++i) {
      if (std::abs(q(i, 2) - 1.0) < std::abs(q(nearest, 2) - 1.0)) nearest = i;
    }
    std::vector<std::vector<double>> slice(5);
    for (Index i = 0; i < q.rows(); ++i) {
      if (q(i, 2) != q(nearest, 2)) continue;
      slice[0].push_back(q(i, 0));
      slice[1].push_back(q(i, 1));
      slice[2].push_back(q(i, 2));
      slice[3].push_back(s(i, 0));
      slice[4].push_back(spec.target[static_cast<std::size_t>(i)]);
    }
    oracle::write_columns_csv(dir / "state_t1.csv", {"x", "y", "t", "s", "d"}, slice);
    outputs.push_back(dir / "state_t1.csv");
  }

  if (!r.trace.J.empty()) m.add("J_initial", r.trace.J.front());
  m.add("J_final", control::mlp_control_cost(r.control, net, spec, false).J);
  if (!reference.empty()) m.add("control_error", control_error(u, reference));
  m.write(dir / "optimize-control.metrics");
  write_manifest(dir, "optimize-control", c, {ck}, outputs);
  if (r.trace.failure) {
    err << "error: cost diverged at " << *r.trace.failure << '\n';
    return exit_numeric;
  }
  return exit_ok;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  Metrics m(out);
  if (!o.pred.empty() || !o.ref.empty()) {
    if (o.pred.empty() || o.ref.empty()) throw ConfigError("evaluate needs both --pred and --ref");
    const Table p = read_table(o.pred), r = read_table(o.ref);
    if (p.rows.size() != r.rows.size()) throw ShapeError("--pred and --ref have different row counts");
    std::size_t matched = 0;
    for (std::size_t j = 0; j < r.header.size(); ++j) {
      const auto it = std::find(p.header.begin(), p.header.end(), r.header[j]);
      if (it == p.header.end()) continue;
      ++matched;
      const auto e = trainer::relative_l2_error(p.column(static_cast<std::size_t>(it - p.header.begin())), r.column(j));
      m.add(std::string(e.zero_reference ? "absolute_l2_" : "relative_l2_") + r.header[j], e.value);
    }
    if (matched == 0) throw ConfigError("--pred and --ref share no column names");
    return exit_ok;
  }
  const Config c = resolve(o);
  const fs::path dir(o.out);
  const fs::path data_dir = o.data.empty() ? dir : fs::path(o.data);
  const auto net = load_surrogate(o, dir, c);
  const auto train = read_training_data(data_dir, c);
  report_generalization(c, net, data_dir, train, m);
  return exit_ok;
}

int cmd_oracle(const Options& o, std::ostream& out) {
  const Config c = resolve(o);
  if (o.input.empty()) throw ConfigError("oracle needs --input <csv>");
  const fs::path dir = prepare_out(o.out);
  const Table in = read_table(o.input);
  if (in.header.size() < 2 || in.rows.size() < 3) throw ConfigError(o.input + ": need two columns and at least 3 rows");
  const auto xs = in.column(0), us = in.column(1);
  Metrics m(out);
  if (c.benchmark() == Benchmark::poisson) {
    const double h = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (std::abs(xs[i] - static_cast<double>(i) * h) > 1e-9) throw ConfigError(o.input + ": x must be a uniform grid on [0, 1]");
    }
    if (std::abs(xs.back() - 1.0) > 1e-12) throw ConfigError(o.input + ": x must end at 1");
    const auto s = oracle::solve_poisson_fd(us, h);
    oracle::write_columns_csv(dir / "oracle.csv", {"x", "s"}, {xs, s});
    m.add("nodes", static_cast<double>(xs.size()));
  } else if (c.benchmark() == Benchmark::heat) {
    const auto grid = heat_grid(c);
    const auto sol = oracle::solve_heat_fd(xs, us, grid);
    std::vector<std::vector<double>> cols(4);
    for (std::size_t k = 0; k <= grid.time_steps; ++k)
      for (std::size_t i = 0; i <= grid.space_intervals; ++i)
        for (std::size_t j = 0; j <= grid.space_intervals; ++j) {
          cols[0].push_back(static_cast<double>(i) * grid.h());
          cols[1].push_back(static_cast<double>(j) * grid.h());
          cols[2].push_back(static_cast<double>(k) * grid.dt());
          cols[3].push_back(sol.at(i, j, k));
        }
    oracle::write_columns_csv(dir / "oracle.csv", {"x", "y", "t", "s"}, cols);
    m.add("nodes", static_cast<double>(cols[0].size()));
  } else {
    throw ConfigError("there is no finite-difference oracle for stokes");
  }
  write_manifest(dir, "oracle", c, {fs::path(o.input)}, {dir / "oracle.csv"});
  return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Physics-informed DeepONet surrogates for PDE-constrained optimization", "pidon"};
  app.require_subcommand(1);
  Options o;
  const auto common = [&](CLI::App* s) {
    s->add_option("--benchmark,-b", o.benchmark, "poisson, heat or stokes");
    s->add_option("--preset", o.preset, "paper-text, paper-table or desk (default desk)");
    s->add_option("--config", o.config, "key = value file with [section] headers");
    s->add_option("--set", o.sets, "override one key, e.g. --set train.iterations=500");
    s->add_option("--seed", o.seed, "run seed");
    s->add_option("--out", o.out, "output directory");
    s->add_option("--threads", o.threads, "worker threads (1: bit-reproducible)");
  };
  auto* grf = app.add_subcommand("sample-grf", "sample GRF input functions");
  auto* make = app.add_subcommand("make-dataset", "training and test inputs with reference solutions");
  auto* train = app.add_subcommand("train-operator", "step 1: physics-informed operator training");
  auto* opt = app.add_subcommand("optimize-control", "step 2: optimize the control through the surrogate");
  auto* eval = app.add_subcommand("evaluate", "relative L2 errors");
  auto* orc = app.add_subcommand("oracle", "finite-difference reference solve");
  for (auto* s : {grf, make, train, opt, eval, orc}) common(s);
  for (auto* s : {train, opt, eval}) {
    s->add_option("--data", o.data, "dataset directory (default: --out)");
    s->add_option("--checkpoint", o.checkpoint, "checkpoint file (default: <out>/checkpoint.bin)");
  }
  train->add_flag("--resume", o.resume, "continue from the checkpoint");
  eval->add_option("--pred", o.pred, "CSV of predictions");
  eval->add_option("--ref", o.ref, "CSV of reference values (columns matched by name)");
  orc->add_option("--input", o.input, "CSV: x,u (poisson) or t,u (heat)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_config;
  }

  try {
    if (*grf) return cmd_sample_grf(o, out);
    if (*make) return cmd_make_dataset(o, out);
    if (*train) return cmd_train(o, out, err);
    if (*opt) return cmd_optimize(o, out, err);
    if (*eval) return cmd_evaluate(o, out);
    return cmd_oracle(o, out);
  } catch (const ArtifactMismatch& e) {
    err << "error: " << e.what() << '\n';
    return exit_mismatch;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return exit_numeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_config;
  }
}

}  // namespace pidon::cli
