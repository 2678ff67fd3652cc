#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pidon/fields/fields.hpp"
#include "pidon/nets/checkpoint.hpp"
#include "pidon/nets/deeponet.hpp"
#include "pidon/physics/physics.hpp"

namespace pidon::trainer {

struct LrSchedule {
  double lr0 = 1e-3;
  double decay_rate = 0.9;
  std::size_t decay_steps = 2000;
};

/// lr0 * decay_rate^floor(iter / decay_steps).
double lr_at(std::size_t iter, const LrSchedule& s);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update in place. Throws NumericError (leaving params and
/// state untouched) when the gradient has a non-finite entry.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double lr);

struct TrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch_samples = 100;  ///< input functions per step
  fields::CollocationConfig collocation;
  LrSchedule schedule;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;         ///< loss-history rows
  std::size_t checkpoint_every = 0;    ///< 0: final checkpoint only
  std::filesystem::path out_dir;       ///< empty: write nothing
  std::size_t shard_samples = 4;
  std::size_t threads = 1;
  void validate() const;
};

struct TrainState {
  nets::DeepONetParams params;
  AdamState adam;
  physics::LossWeights weights;
  std::size_t iteration = 0;  ///< completed iterations
};

struct TrainResult {
  TrainState state;
  std::vector<physics::LossReport> history;
};

/// Builds the minibatch of iteration `iter`: samples drawn without replacement
/// from an epoch permutation fixed by (seed, epoch); collocation points from the
/// (seed, iter, sample) stream.
physics::TrainingBatch make_batch(const fields::Dataset& data, const TrainConfig& cfg, std::size_t iter);

/// Step 1: minibatch Adam on the physics-informed loss, starting from `start`
/// (iteration 0 for a fresh run, later for a resumed one).
TrainResult train_operator(TrainState start, const fields::Dataset& data, const physics::ResidualSpec& spec,
                           const TrainConfig& cfg,
                           const std::function<void(const physics::LossReport&)>& on_log = {});

/// Checkpoint with network, optimizer moments, loss weights and iteration.
nets::Checkpoint make_checkpoint(const TrainState& s, const std::map<std::string, std::string>& extra = {});
TrainState restore_checkpoint(const nets::Checkpoint& c);

struct RelativeError {
  double value = 0.0;
  bool zero_reference = false;  ///< value is the absolute norm
};

/// ||pred - ref||_2 / ||ref||_2.
RelativeError relative_l2_error(std::span<const double> pred, std::span<const double> ref);

/// Reference solutions of several inputs on one evaluation grid.
struct TestSet {
  ad::Mat inputs;     ///< samples x branch width
  ad::Mat points;     ///< P x coordinates
  ad::Mat reference;  ///< samples x P (first output component)
};

/// Mean over samples of the relative L2 error of output 0.
double test_error(const nets::DeepONetParams& params, const TestSet& test);

}  // namespace pidon::trainer
