#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pidon/diffcore/tape.hpp"

namespace pidon::nets {

enum class DeepONetKind {
  modified,  ///< shared U/V encoders gate every hidden layer of both stacks
  vanilla,   ///< plain branch and trunk MLPs (ablation only)
};

/// Shape of a DeepONet. Both stacks have `depth` affine layers: an input layer,
/// depth-2 gated hidden layers and a final layer of width `latent`.
struct DeepONetArch {
  DeepONetKind kind = DeepONetKind::modified;
  std::size_t branch_input = 0;  ///< sensor values per input function (m, or 2m for curves)
  std::size_t coord_dim = 1;     ///< trunk input width
  std::size_t width = 0;         ///< hidden width shared by branch and trunk
  std::size_t depth = 2;
  std::size_t latent = 0;        ///< q
  std::size_t outputs = 1;       ///< n_out; q is split into n_out contiguous chunks

  void validate() const;
  std::map<std::string, std::string> to_manifest() const;
  static DeepONetArch from_manifest(const std::map<std::string, std::string>& kv);
  friend bool operator==(const DeepONetArch&, const DeepONetArch&) = default;
};

std::string to_string(DeepONetKind kind);
DeepONetKind parse_deeponet_kind(const std::string& s);

struct DeepONetParams {
  DeepONetArch arch;
  ad::ParamSet params;
};

DeepONetParams init_deeponet(const DeepONetArch& arch, std::uint64_t seed);

/// Per-input-function quantities of the branch: everything that does not depend
/// on the query point, evaluated once per sample.
struct BranchState {
  ad::Index samples = 0;
  ad::Var encoder;                  ///< U (modified) ; unused for vanilla
  ad::Var first;                    ///< H_u^(1) (modified) or final branch latent (vanilla)
  std::optional<ad::Var> first_gate;  ///< Z_u^(1) when depth > 2
};

/// A DeepONet whose parameters are bound to one tape.
class DeepONetGraph {
 public:
  /// `trainable` binds parameters as tape variables (gradients wanted).
  DeepONetGraph(ad::Tape& tape, const DeepONetParams& params, bool trainable);
  /// Uses parameters already bound on `tape` (same order as params.params).
  DeepONetGraph(ad::Tape& tape, const DeepONetParams& params, ad::BoundParams bound);

  const ad::BoundParams& bound() const { return bound_; }
  const DeepONetArch& arch() const { return arch_; }
  ad::Tape& tape() { return *tape_; }

  /// Branch pass for a (samples x branch_input) matrix of input functions.
  BranchState encode(ad::Var branch_inputs);

  /// Evaluates the operator at `points` ((samples * per_sample) x coord_dim, sample-major).
  /// `dirs[k]` is the coordinate seeded by jet direction k with order `orders[k]`;
  /// empty `dirs` gives plain values. Returns a stacked jet with `outputs` columns.
  ad::Var evaluate(const BranchState& branch, const ad::Mat& points, ad::Index per_sample,
                   const std::vector<int>& dirs = {}, const std::vector<int>& orders = {});

  /// Layout of the jet returned by evaluate() for the same arguments.
  static ad::JetLayout layout_for(ad::Index rows, const std::vector<int>& orders);

 private:
  ad::Var param(const std::string& name) const;

  ad::Tape* tape_;
  DeepONetArch arch_;
  const ad::ParamSet* params_;
  ad::BoundParams bound_;
};

/// Final combination: per-row dot products of the branch and trunk latents over
/// `outputs` equal contiguous chunks.
ad::Var combine_latents(ad::Tape& t, ad::Var branch_latent, ad::Var trunk_latent, ad::Index outputs,
                        const ad::JetLayout& layout);

/// Evaluates G(u)(y) for one input function and one query point.
std::vector<double> deeponet_forward(const DeepONetParams& p, std::span<const double> u,
                                     std::span<const double> y);

/// Plain predictions for several input functions (rows of `inputs`) at the shared
/// query points `points`; result is (samples * points) x outputs, sample-major.
ad::Mat deeponet_predict(const DeepONetParams& p, const ad::Mat& inputs, const ad::Mat& points);

}  // namespace pidon::nets
