#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pidon/diffcore/jet.hpp"
#include "pidon/diffcore/ndarray.hpp"
#include "pidon/diffcore/tape.hpp"
#include "pidon/fields/fields.hpp"
#include "pidon/nets/deeponet.hpp"

namespace pidon::physics {

using fields::Benchmark;

struct ResidualSpec {
  Benchmark benchmark = Benchmark::poisson;
  double kappa = 1.0;       ///< poisson diffusivity
  double nu = 0.01;         ///< heat diffusivity
  double final_time = 2.0;  ///< heat horizon T

  void validate() const;
};

/// Loss-term names in report order.
std::vector<std::string> term_names(Benchmark b);

// -------------------------------------------------------------------------------
// Residuals of closed-form fields (coordinates are passed as jets)
// -------------------------------------------------------------------------------

using ScalarField = std::function<Jet2(std::span<const Jet2>)>;
using VectorField = std::function<std::array<Jet2, 3>(std::span<const Jet2>)>;  ///< (u, v, p)

/// kappa * s''(y) + u.
double poisson_residual(const ScalarField& s, double u, double y, double kappa = 1.0);
/// s_t - nu (s_xx + s_yy) - u.
double heat_residual(const ScalarField& s, double u, double x, double y, double t, double nu);
/// (-Lap u + p_x, -Lap v + p_y, u_x + v_y).
std::array<double, 3> stokes_residuals(const VectorField& f, double x, double y);

// -------------------------------------------------------------------------------
// Composite loss
// -------------------------------------------------------------------------------

/// Input functions with their collocation points. Every sample carries the same
/// number of points per tag.
struct TrainingBatch {
  ad::Mat inputs;   ///< samples x branch width
  ad::Mat sensors;  ///< sensor grid (m x 1): x_i (poisson), t_i (heat), phi_i (stokes)
  std::vector<fields::CollocationBatch> collocation;

  std::size_t samples() const { return static_cast<std::size_t>(inputs.rows()); }
  void validate(Benchmark b) const;
};

struct LossWeights {
  std::vector<double> lambda;
  bool adaptive = false;
  std::size_t interval = 100;  ///< iterations between updates
  double smoothing = 0.9;
  std::size_t probe_samples = 32;
  std::size_t probe_points = 32;

  static LossWeights uniform(std::size_t terms) { return LossWeights{std::vector<double>(terms, 1.0)}; }
};

struct LossReport {
  std::size_t iteration = 0;
  std::vector<std::string> names;
  std::vector<double> terms;
  std::vector<double> lambda;
  double total = 0.0;

  std::string csv_header() const;
  std::string csv_row() const;
};

/// Per-point residuals (rows = points of the term's point set, columns =
/// components) for samples [first, first + count) of the batch, built on g's tape.
std::vector<ad::Var> term_residuals(nets::DeepONetGraph& g, const TrainingBatch& batch, const ResidualSpec& spec,
                                    std::size_t first, std::size_t count);

/// Normalizers N*P or N*Q of every term for the whole batch.
std::vector<double> term_counts(const TrainingBatch& batch, const ResidualSpec& spec);

/// Weighted loss sum_k lambda_k L_k of the whole batch on one tape (tiny problems,
/// gradient checks). `bound` are the network parameters bound on `t`.
ad::Var build_loss(ad::Tape& t, const nets::DeepONetParams& params, const ad::BoundParams& bound,
                   const TrainingBatch& batch, const ResidualSpec& spec, const LossWeights& weights);

struct LossEvaluation {
  LossReport report;
  NdArray gradient;  ///< empty unless requested
};

struct EvalOptions {
  bool gradient = false;
  std::size_t shard_samples = 4;  ///< input functions per tape
  std::size_t threads = 1;
};

/// Evaluates the composite loss shard by shard; shard results are reduced in
/// sample order, so the result does not depend on `threads`.
LossEvaluation evaluate_loss(const nets::DeepONetParams& params, const TrainingBatch& batch,
                             const ResidualSpec& spec, const LossWeights& weights, const EvalOptions& opts);

/// Mean |r| of every residual component per term, without gradients.
std::vector<double> mean_abs_residuals(const nets::DeepONetParams& params, const TrainingBatch& batch,
                                       const ResidualSpec& spec, std::size_t shard_samples = 4);

LossReport assemble_loss(const nets::DeepONetParams& params, const TrainingBatch& batch, const ResidualSpec& spec,
                         const LossWeights& weights);

// -------------------------------------------------------------------------------
// Adaptive weights (trace balancing)
// -------------------------------------------------------------------------------

/// Residual of one probe point (1 x components) with the parameters it depends on.
struct ProbeResidual {
  ad::Var residual;
  ad::BoundParams params;
};
using ProbeBuilder = std::function<ProbeResidual(ad::Tape&, std::size_t term, std::size_t probe)>;

/// T_k: mean over the term's probes of the squared parameter-gradient norm of
/// every residual component.
std::vector<double> trace_proxies(std::span<const std::size_t> probes_per_term, const ProbeBuilder& build);

/// lambda_k <- s lambda_k + (1 - s) sum_j T_j / T_k; terms with T_k = 0 keep lambda_k.
LossWeights apply_trace_update(const LossWeights& w, std::span<const double> traces);

/// Trace proxies on the leading probe_samples x probe_points of `batch`, scaled by
/// the number of points per sample of each term, then one update.
LossWeights update_loss_weights(const nets::DeepONetParams& params, const TrainingBatch& batch,
                                const ResidualSpec& spec, const LossWeights& weights);

}  // namespace pidon::physics
