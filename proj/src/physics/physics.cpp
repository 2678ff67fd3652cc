#include "pidon/physics/physics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numbers>
#include <sstream>

#include "pidon/errors.hpp"
#include "pidon/oracle/fd.hpp"

namespace pidon::physics {

using ad::Index;
using ad::Mat;
using ad::Var;

void ResidualSpec::validate() const {
  if (!(kappa > 0) || !(nu > 0) || !(final_time > 0)) throw ConfigError("physical constants must be positive");
}

std::vector<std::string> term_names(Benchmark b) {
  switch (b) {
    case Benchmark::poisson: return {"bc", "pde"};
    case Benchmark::heat: return {"ic", "bc", "pde"};
    case Benchmark::stokes: return {"bc1", "bc2", "bc3", "pde1", "pde2", "pde3"};
  }
  return {};
}

// -------------------------------------------------------------------------------

double poisson_residual(const ScalarField& s, double u, double y, double kappa) {
  const double x[1] = {y};
  return kappa * jet_eval(s, x, 0).d2 + u;
}

double heat_residual(const ScalarField& s, double u, double x, double y, double t, double nu) {
  const double c[3] = {x, y, t};
  const Jet2 jx = jet_eval(s, c, 0);
  const Jet2 jy = jet_eval(s, c, 1);
  const Jet2 jt = jet_eval(s, c, 2);
  return jt.d1 - nu * (jx.d2 + jy.d2) - u;
}

std::array<double, 3> stokes_residuals(const VectorField& f, double x, double y) {
  const double c[2] = {x, y};
  std::array<Jet2, 3> dx{}, dy{};
  for (int k = 0; k < 3; ++k) {
    const auto comp = [&f, k](std::span<const Jet2> z) { return f(z)[static_cast<std::size_t>(k)]; };
    dx[static_cast<std::size_t>(k)] = jet_eval(comp, c, 0);
    dy[static_cast<std::size_t>(k)] = jet_eval(comp, c, 1);
  }
  return {-(dx[0].d2 + dy[0].d2) + dx[2].d1, -(dx[1].d2 + dy[1].d2) + dy[2].d1, dx[0].d1 + dy[1].d1};
}

// -------------------------------------------------------------------------------

namespace {

std::vector<std::string> point_tags(Benchmark b) {
  switch (b) {
    case Benchmark::poisson: return {"bc", "interior"};
    case Benchmark::heat: return {"ic", "bc", "interior"};
    case Benchmark::stokes: return {"bc1", "bc2", "bc3", "interior"};
  }
  return {};
}

// Which point set feeds each loss term.
std::string term_tag(Benchmark b, std::size_t term) {
  switch (b) {
    case Benchmark::poisson: return term == 0 ? "bc" : "interior";
    case Benchmark::heat: return term == 0 ? "ic" : term == 1 ? "bc" : "interior";
    case Benchmark::stokes: return term < 3 ? "bc" + std::to_string(term + 1) : "interior";
  }
  return {};
}

// Points of `tag` for samples [first, first + count), stacked sample-major.
Mat stacked_points(const TrainingBatch& batch, const std::string& tag, std::size_t first, std::size_t count) {
  const Mat& p0 = batch.collocation[first].get(tag);
  Mat out(p0.rows() * static_cast<Index>(count), p0.cols());
  for (std::size_t s = 0; s < count; ++s) out.middleRows(static_cast<Index>(s) * p0.rows(), p0.rows()) = batch.collocation[first + s].get(tag);
  return out;
}

// Source value u(coordinate) at every point: linear interpolation of the sensor values.
Mat source_at(const TrainingBatch& batch, const Mat& pts, Index coord, std::size_t first, std::size_t count) {
  const Index per = pts.rows() / static_cast<Index>(count);
  const std::span<const double> xs(batch.sensors.data(), static_cast<std::size_t>(batch.sensors.rows()));
  Mat out(pts.rows(), 1);
  std::vector<double> row(xs.size());
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t i = 0; i < xs.size(); ++i) row[i] = batch.inputs(static_cast<Index>(first + s), static_cast<Index>(i));
    for (Index r = 0; r < per; ++r) {
      const Index k = static_cast<Index>(s) * per + r;
      out(k, 0) = oracle::interp1(xs, row, pts(k, coord));
    }
  }
  return out;
}

Var component(ad::Tape& t, Var jet, const ad::JetLayout& layout, int block, Index col) {
  return ad::slice_cols(t, ad::jet_block(t, jet, block, layout), col, 1);
}

}  // namespace

void TrainingBatch::validate(Benchmark b) const {
  if (inputs.rows() == 0) throw ConfigError("training batch is empty");
  if (collocation.size() != static_cast<std::size_t>(inputs.rows())) {
    throw ShapeError("training batch: one collocation batch per input function required");
  }
  const Index width = (b == Benchmark::stokes ? 2 : 1) * sensors.rows();
  if (sensors.cols() != 1 || inputs.cols() != width) {
    throw ShapeError("training batch: input width " + std::to_string(inputs.cols()) +
                     " does not match the sensor grid (" + std::to_string(sensors.rows()) + " sensors)");
  }
  for (const auto& tag : point_tags(b)) {
    const Index n = collocation.front().get(tag).rows();
    for (const auto& c : collocation) {
      if (c.get(tag).rows() != n) throw ShapeError("training batch: point count of '" + tag + "' differs between samples");
    }
  }
}

std::vector<double> term_counts(const TrainingBatch& batch, const ResidualSpec& spec) {
  std::vector<double> out;
  const auto names = term_names(spec.benchmark);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto rows = batch.collocation.front().get(term_tag(spec.benchmark, k)).rows();
    out.push_back(static_cast<double>(rows) * static_cast<double>(batch.samples()));
  }
  return out;
}

std::vector<Var> term_residuals(nets::DeepONetGraph& g, const TrainingBatch& batch, const ResidualSpec& spec,
                                std::size_t first, std::size_t count) {
  ad::Tape& t = g.tape();
  const nets::BranchState br = g.encode(t.constant(batch.inputs.middleRows(static_cast<Index>(first), static_cast<Index>(count))));
  const auto per = [&](const Mat& pts) { return pts.rows() / static_cast<Index>(count); };
  std::vector<Var> out;
  switch (spec.benchmark) {
    case Benchmark::poisson: {
      const Mat bc = stacked_points(batch, "bc", first, count);
      out.push_back(g.evaluate(br, bc, per(bc)));
      const Mat in = stacked_points(batch, "interior", first, count);
      const Var s = g.evaluate(br, in, per(in), {0}, {2});
      const auto layout = nets::DeepONetGraph::layout_for(in.rows(), {2});
      const Var sxx = ad::jet_block(t, s, layout.second_block(0), layout);
      out.push_back(ad::add(t, ad::scale(t, sxx, spec.kappa), t.constant(source_at(batch, in, 0, first, count))));
      break;
    }
    case Benchmark::heat: {
      for (const char* tag : {"ic", "bc"}) {
        const Mat p = stacked_points(batch, tag, first, count);
        out.push_back(g.evaluate(br, p, per(p)));
      }
      const Mat in = stacked_points(batch, "interior", first, count);
      const std::vector<int> orders{2, 2, 1};
      const Var s = g.evaluate(br, in, per(in), {0, 1, 2}, orders);
      const auto layout = nets::DeepONetGraph::layout_for(in.rows(), orders);
      const Var lap = ad::add(t, ad::jet_block(t, s, layout.second_block(0), layout),
                              ad::jet_block(t, s, layout.second_block(1), layout));
      const Var st = ad::jet_block(t, s, layout.first_block(2), layout);
      const Var r = ad::sub(t, st, ad::scale(t, lap, spec.nu));
      out.push_back(ad::sub(t, r, t.constant(source_at(batch, in, 2, first, count))));
      break;
    }
    case Benchmark::stokes: {
      const Mat bc1 = stacked_points(batch, "bc1", first, count);
      out.push_back(ad::slice_cols(t, g.evaluate(br, bc1, per(bc1)), 0, 2));
      const Mat bc2 = stacked_points(batch, "bc2", first, count);
      Mat inflow = Mat::Zero(bc2.rows(), 2);
      for (Index i = 0; i < bc2.rows(); ++i) inflow(i, 0) = std::sin(std::numbers::pi * bc2(i, 1));
      out.push_back(ad::sub(t, ad::slice_cols(t, g.evaluate(br, bc2, per(bc2)), 0, 2), t.constant(inflow)));
      const Mat bc3 = stacked_points(batch, "bc3", first, count);
      out.push_back(ad::slice_cols(t, g.evaluate(br, bc3, per(bc3)), 2, 1));
      const Mat in = stacked_points(batch, "interior", first, count);
      const std::vector<int> orders{2, 2};
      const Var f = g.evaluate(br, in, per(in), {0, 1}, orders);
      const auto L = nets::DeepONetGraph::layout_for(in.rows(), orders);
      const int dx = L.first_block(0), dxx = L.second_block(0), dy = L.first_block(1), dyy = L.second_block(1);
      const auto c = [&](int block, Index col) { return component(t, f, L, block, col); };
      out.push_back(ad::sub(t, c(dx, 2), ad::add(t, c(dxx, 0), c(dyy, 0))));
      out.push_back(ad::sub(t, c(dy, 2), ad::add(t, c(dxx, 1), c(dyy, 1))));
      out.push_back(ad::add(t, c(dx, 0), c(dy, 1)));
      break;
    }
  }
  return out;
}

ad::Var build_loss(ad::Tape& t, const nets::DeepONetParams& params, const ad::BoundParams& bound,
                   const TrainingBatch& batch, const ResidualSpec& spec, const LossWeights& weights) {
  batch.validate(spec.benchmark);
  nets::DeepONetGraph g(t, params, bound);
  const auto res = term_residuals(g, batch, spec, 0, batch.samples());
  const auto counts = term_counts(batch, spec);
  if (weights.lambda.size() != res.size()) throw ConfigError("loss weights: wrong number of terms");
  Var total = t.constant(Mat::Zero(1, 1));
  for (std::size_t k = 0; k < res.size(); ++k) {
    const Var sq = ad::sum(t, ad::square(t, res[k]));
    total = ad::add(t, total, ad::scale(t, sq, weights.lambda[k] / counts[k]));
  }
  return total;
}

namespace {

struct ShardResult {
  std::vector<double> sums;
  std::vector<double> gradient;
};

ShardResult run_shard(const nets::DeepONetParams& params, const TrainingBatch& batch, const ResidualSpec& spec,
                      const std::vector<double>& scale, bool gradient, std::size_t first, std::size_t count) {
  ad::Tape t;
  nets::DeepONetGraph g(t, params, gradient);
  const auto res = term_residuals(g, batch, spec, first, count);
  ShardResult out;
  Var root = t.constant(Mat::Zero(1, 1));
  for (std::size_t k = 0; k < res.size(); ++k) {
    const Var sq = ad::sum(t, ad::square(t, res[k]));
    out.sums.push_back(t.scalar(sq));
    if (gradient) root = ad::add(t, root, ad::scale(t, sq, scale[k]));
  }
  if (gradient) {
    const NdArray gvec = ad::grad_params(t, root, g.bound());
    out.gradient.assign(gvec.data().begin(), gvec.data().end());
  }
  return out;
}

}  // namespace

LossEvaluation evaluate_loss(const nets::DeepONetParams& params, const TrainingBatch& batch,
                             const ResidualSpec& spec, const LossWeights& weights, const EvalOptions& opts) {
  spec.validate();
  batch.validate(spec.benchmark);
  const auto names = term_names(spec.benchmark);
  if (weights.lambda.size() != names.size()) throw ConfigError("loss weights: wrong number of terms");
  const auto counts = term_counts(batch, spec);
  std::vector<double> scale(names.size());
  for (std::size_t k = 0; k < names.size(); ++k) scale[k] = weights.lambda[k] / counts[k];

  const std::size_t shard = std::max<std::size_t>(1, opts.shard_samples);
  const std::size_t n = batch.samples();
  const std::size_t shards = (n + shard - 1) / shard;
  std::vector<ShardResult> results(shards);
  const auto run = [&](std::size_t i) {
    const std::size_t first = i * shard;
    results[i] = run_shard(params, batch, spec, scale, opts.gradient, first, std::min(shard, n - first));
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, shards));
  if (threads == 1) {
    for (std::size_t i = 0; i < shards; ++i) run(i);
  } else {
    std::vector<std::future<void>> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < shards; i += threads) run(i);
      }));
    }
    for (auto& f : workers) f.get();
  }

  LossEvaluation ev;
  ev.report.names = names;
  ev.report.lambda = weights.lambda;
  ev.report.terms.assign(names.size(), 0.0);
  std::vector<double> grad(opts.gradient ? params.params.total_size() : 0, 0.0);
  for (const auto& r : results) {
    for (std::size_t k = 0; k < names.size(); ++k) ev.report.terms[k] += r.sums[k];
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += r.gradient[j];
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    ev.report.terms[k] /= counts[k];
    ev.report.total += weights.lambda[k] * ev.report.terms[k];
  }
  if (!std::isfinite(ev.report.total)) throw NumericError("composite loss is not finite");
  if (opts.gradient) ev.gradient = NdArray::vector(std::move(grad));
  return ev;
}

std::vector<double> mean_abs_residuals(const nets::DeepONetParams& params, const TrainingBatch& batch,
                                       const ResidualSpec& spec, std::size_t shard_samples) {
  spec.validate();
  batch.validate(spec.benchmark);
  const std::size_t terms = term_names(spec.benchmark).size();
  std::vector<double> sum(terms, 0.0), n(terms, 0.0);
  const std::size_t shard = std::max<std::size_t>(1, shard_samples);
  for (std::size_t first = 0; first < batch.samples(); first += shard) {
    ad::Tape t;
    nets::DeepONetGraph g(t, params, false);
    const auto res = term_residuals(g, batch, spec, first, std::min(shard, batch.samples() - first));
    for (std::size_t k = 0; k < terms; ++k) {
      const Mat& r = t.value(res[k]);
      sum[k] += r.abs().sum();
      n[k] += static_cast<double>(r.size());
    }
  }
  for (std::size_t k = 0; k < terms; ++k) sum[k] /= n[k];
  return sum;
}

LossReport assemble_loss(const nets::DeepONetParams& params, const TrainingBatch& batch, const ResidualSpec& spec,
                         const LossWeights& weights) {
  return evaluate_loss(params, batch, spec, weights, EvalOptions{}).report;
}

std::string LossReport::csv_header() const {
  std::string h = "iteration";
  for (const auto& n : names) h += ",L_" + n;
  for (const auto& n : names) h += ",lambda_" + n;
  return h + ",total";
}

std::string LossReport::csv_row() const {
  std::ostringstream out;
  char buf[32];
  out << iteration;
  for (double v : terms) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out << ',' << buf;
  }
  for (double v : lambda) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out << ',' << buf;
  }
  std::snprintf(buf, sizeof buf, "%.10g", total);
  out << ',' << buf;
  return out.str();
}

// -------------------------------------------------------------------------------

std::vector<double> trace_proxies(std::span<const std::size_t> probes_per_term, const ProbeBuilder& build) {
  std::vector<double> traces(probes_per_term.size(), 0.0);
  for (std::size_t k = 0; k < probes_per_term.size(); ++k) {
    for (std::size_t p = 0; p < probes_per_term[k]; ++p) {
      ad::Tape t;
      const ProbeResidual pr = build(t, k, p);
      const Mat r = t.value(pr.residual);
      for (Index c = 0; c < r.size(); ++c) {
        Mat seed = Mat::Zero(r.rows(), r.cols());
        seed.data()[c] = 1.0;
        t.backward(pr.residual, seed);
        const NdArray g = ad::collect_gradient(t, pr.params);
        for (double v : g.data()) traces[k] += v * v;
      }
    }
    if (probes_per_term[k] > 0) traces[k] /= static_cast<double>(probes_per_term[k]);
  }
  return traces;
}

LossWeights apply_trace_update(const LossWeights& w, std::span<const double> traces) {
  if (traces.size() != w.lambda.size()) throw ShapeError("apply_trace_update: one trace per term required");
  double total = 0;
  for (double v : traces) {
    if (!std::isfinite(v) || v < 0) throw NumericError("trace proxy is not a finite non-negative number");
    total += v;
  }
  LossWeights out = w;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    if (traces[k] == 0) continue;
    out.lambda[k] = w.smoothing * w.lambda[k] + (1.0 - w.smoothing) * total / traces[k];
  }
  return out;
}

LossWeights update_loss_weights(const nets::DeepONetParams& params, const TrainingBatch& batch,
                                const ResidualSpec& spec, const LossWeights& weights) {
  batch.validate(spec.benchmark);
  const auto names = term_names(spec.benchmark);
  const std::size_t samples = std::min(weights.probe_samples, batch.samples());
  std::vector<std::size_t> points(names.size()), probes(names.size()), rows(names.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    rows[k] = static_cast<std::size_t>(batch.collocation.front().get(term_tag(spec.benchmark, k)).rows());
    points[k] = std::min(weights.probe_points, rows[k]);
    probes[k] = samples * points[k];
  }
  const ProbeBuilder build = [&](ad::Tape& t, std::size_t term, std::size_t probe) {
    const std::size_t s = probe / points[term];
    const auto row = static_cast<Index>(probe % points[term]);
    // A one-sample, one-point batch sharing the probe point.
    TrainingBatch one;
    one.inputs = batch.inputs.row(static_cast<Index>(s));
    one.sensors = batch.sensors;
    fields::CollocationBatch c = batch.collocation[s];
    for (auto& p : c.points) p = p.row(std::min(row, p.rows() - 1)).eval();
    one.collocation = {std::move(c)};
    nets::DeepONetGraph g(t, params, true);
    const auto res = term_residuals(g, one, spec, 0, 1);
    return ProbeResidual{res[term], g.bound()};
  };
  // Per-point mean -> trace over all points of the term (up to the common factor N).
  auto traces = trace_proxies(probes, build);
  for (std::size_t k = 0; k < traces.size(); ++k) traces[k] *= static_cast<double>(rows[k]);
  return apply_trace_update(weights, traces);
}

}  // namespace pidon::physics
