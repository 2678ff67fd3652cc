#include "pidon/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pidon/errors.hpp"

namespace pidon::trainer {

using ad::Index;
using ad::Mat;

double lr_at(std::size_t iter, const LrSchedule& s) {
  if (s.decay_steps == 0) return s.lr0;
  return s.lr0 * std::pow(s.decay_rate, static_cast<double>(iter / s.decay_steps));
}

void adam_step(AdamState& st, std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != grad.size() || st.m.size() != params.size() || st.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

void TrainConfig::validate() const {
  if (batch_samples < 1) throw ConfigError("batch size must be >= 1");
  if (!(schedule.decay_rate > 0) || schedule.decay_rate > 1) throw ConfigError("decay rate must be in (0, 1]");
  if (!(schedule.lr0 >= 0)) throw ConfigError("learning rate must be non-negative");
}

physics::TrainingBatch make_batch(const fields::Dataset& data, const TrainConfig& cfg, std::size_t iter) {
  const std::size_t n = data.samples();
  if (n == 0) throw ConfigError("dataset is empty");
  const std::size_t bs = std::min(cfg.batch_samples, n);
  const std::size_t per_epoch = n / bs;
  const std::size_t epoch = iter / per_epoch;
  const std::size_t slot = iter % per_epoch;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = fields::stream_rng(cfg.seed, 1, epoch);
  std::shuffle(perm.begin(), perm.end(), rng);

  physics::TrainingBatch b;
  b.sensors = data.sensors;
  b.inputs.resize(static_cast<Index>(bs), data.values.cols());
  for (std::size_t i = 0; i < bs; ++i) {
    const std::size_t s = perm[slot * bs + i];
    b.inputs.row(static_cast<Index>(i)) = data.values.row(static_cast<Index>(s));
    fields::Ellipse shape;
    if (cfg.collocation.benchmark == fields::Benchmark::stokes) {
      const Mat row = data.values.row(static_cast<Index>(s));
      shape = fields::ellipse_from_boundary(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
    auto crng = fields::stream_rng(cfg.seed, 2 + iter, s);
    b.collocation.push_back(fields::sample_collocation(cfg.collocation, shape, crng));
  }
  return b;
}

TrainResult train_operator(TrainState start, const fields::Dataset& data, const physics::ResidualSpec& spec,
                           const TrainConfig& cfg, const std::function<void(const physics::LossReport&)>& on_log) {
  cfg.validate();
  if (data.values.cols() != static_cast<Index>(start.params.arch.branch_input)) {
    throw ArtifactMismatch("dataset width " + std::to_string(data.values.cols()) + " does not match the branch input " +
                           std::to_string(start.params.arch.branch_input));
  }
  const std::size_t nparam = start.params.params.total_size();
  if (start.adam.m.size() != nparam) start.adam = AdamState(nparam);
  if (start.weights.lambda.empty()) start.weights.lambda.assign(physics::term_names(spec.benchmark).size(), 1.0);

  TrainResult res{std::move(start), {}};
  TrainState& st = res.state;
  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = cfg.out_dir / "loss.csv";
    const bool fresh = st.iteration == 0 || !std::filesystem::exists(path);
    log.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + path.string());
    if (fresh) {
      physics::LossReport h;
      h.names = physics::term_names(spec.benchmark);
      log << h.csv_header() << '\n';
    }
  }
  const auto save = [&](const char* name) {
    if (cfg.out_dir.empty()) return;
    nets::write_checkpoint(cfg.out_dir / name, make_checkpoint(st));
  };

  const physics::EvalOptions opts{true, cfg.shard_samples, cfg.threads};
  while (st.iteration < cfg.iterations) {
    const std::size_t it = st.iteration;
    const physics::TrainingBatch batch = make_batch(data, cfg, it);
    if (st.weights.adaptive && st.weights.interval > 0 && it % st.weights.interval == 0) {
      st.weights = physics::update_loss_weights(st.params, batch, spec, st.weights);
    }
    physics::LossEvaluation ev;
    try {
      ev = physics::evaluate_loss(st.params, batch, spec, st.weights, opts);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    ev.report.iteration = it;
    if (cfg.log_every > 0 && it % cfg.log_every == 0) {
      res.history.push_back(ev.report);
      if (log.is_open()) log << ev.report.csv_row() << '\n' << std::flush;
      if (on_log) on_log(ev.report);
    }
    std::vector<double> flat(ev.gradient.data().begin(), ev.gradient.data().end());
    NdArray p = st.params.params.flatten();
    std::vector<double> pv(p.data().begin(), p.data().end());
    try {
      adam_step(st.adam, pv, flat, lr_at(it, cfg.schedule));
    } catch (const NumericError& e) {
      throw NumericError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    st.params.params.assign(pv);
    ++st.iteration;
    if (cfg.checkpoint_every > 0 && st.iteration % cfg.checkpoint_every == 0) save("checkpoint.bin");
  }
  save("checkpoint.bin");
  return res;
}

nets::Checkpoint make_checkpoint(const TrainState& s, const std::map<std::string, std::string>& extra) {
  nets::Checkpoint c;
  c.manifest = s.params.arch.to_manifest();
  for (const auto& [k, v] : extra) c.manifest[k] = v;
  c.manifest["iteration"] = std::to_string(s.iteration);
  c.manifest["adam.step"] = std::to_string(s.adam.step);
  c.manifest["weights.adaptive"] = s.weights.adaptive ? "1" : "0";
  c.tensors = s.params.params;
  const auto vec = [](const std::vector<double>& v) {
    return Mat(Eigen::Map<const Mat>(v.data(), 1, static_cast<Index>(v.size())));
  };
  if (!s.adam.m.empty()) {
    c.tensors.add("adam.m", vec(s.adam.m));
    c.tensors.add("adam.v", vec(s.adam.v));
  }
  if (!s.weights.lambda.empty()) c.tensors.add("weights.lambda", vec(s.weights.lambda));
  return c;
}

TrainState restore_checkpoint(const nets::Checkpoint& c) {
  TrainState s;
  s.params.arch = nets::DeepONetArch::from_manifest(c.manifest);
  const auto skeleton = nets::init_deeponet(s.params.arch, 0);
  for (std::size_t i = 0; i < skeleton.params.count(); ++i) {
    const auto& name = skeleton.params.name(i);
    if (!c.tensors.contains(name)) throw ArtifactMismatch("checkpoint lacks tensor " + name);
    const Mat& m = c.tensors.at(name);
    if (m.rows() != skeleton.params.tensor(i).rows() || m.cols() != skeleton.params.tensor(i).cols()) {
      throw ArtifactMismatch("checkpoint tensor " + name + " has the wrong shape");
    }
    s.params.params.add(name, m);
  }
  const auto get = [&](const char* key) -> std::string {
    auto it = c.manifest.find(key);
    return it == c.manifest.end() ? std::string() : it->second;
  };
  const auto it = get("iteration");
  s.iteration = it.empty() ? 0 : std::stoull(it);
  const std::size_t n = s.params.params.total_size();
  s.adam = AdamState(n);
  if (c.tensors.contains("adam.m")) {
    const Mat& m = c.tensors.at("adam.m");
    const Mat& v = c.tensors.at("adam.v");
    if (static_cast<std::size_t>(m.size()) != n || static_cast<std::size_t>(v.size()) != n) {
      throw ArtifactMismatch("optimizer moments do not match the parameter count");
    }
    s.adam.m.assign(m.data(), m.data() + m.size());
    s.adam.v.assign(v.data(), v.data() + v.size());
    const auto step = get("adam.step");
    s.adam.step = step.empty() ? 0 : std::stoull(step);
  }
  if (c.tensors.contains("weights.lambda")) {
    const Mat& l = c.tensors.at("weights.lambda");
    s.weights.lambda.assign(l.data(), l.data() + l.size());
  }
  s.weights.adaptive = get("weights.adaptive") == "1";
  return s;
}

RelativeError relative_l2_error(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size()) throw ShapeError("relative_l2_error: lengths differ");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - ref[i]) * (pred[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  if (den == 0) return {std::sqrt(num), true};
  return {std::sqrt(num / den), false};
}

double test_error(const nets::DeepONetParams& params, const TestSet& test) {
  if (test.reference.rows() != test.inputs.rows() || test.reference.cols() != test.points.rows()) {
    throw ShapeError("test set: reference must be samples x points");
  }
  if (test.inputs.rows() == 0) throw ConfigError("test set is empty");
  double acc = 0;
  const Index P = test.points.rows();
  constexpr Index chunk = 16;
  for (Index s0 = 0; s0 < test.inputs.rows(); s0 += chunk) {
    const Index cnt = std::min(chunk, test.inputs.rows() - s0);
    const Mat pred = nets::deeponet_predict(params, test.inputs.middleRows(s0, cnt), test.points);
    for (Index s = 0; s < cnt; ++s) {
      const Mat p = pred.block(s * P, 0, P, 1);
      const Mat r = test.reference.row(s0 + s);
      acc += relative_l2_error(std::span<const double>(p.data(), static_cast<std::size_t>(P)),
                               std::span<const double>(r.data(), static_cast<std::size_t>(P)))
                 .value;
    }
  }
  return acc / static_cast<double>(test.inputs.rows());
}

}  // namespace pidon::trainer
