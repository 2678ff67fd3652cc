#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pidon/diffcore/tape.hpp"

namespace pidon::nets {

/// Layer widths of a fully connected tanh network, input first, output last.
struct MlpArch {
  std::vector<std::size_t> layers;

  /// `depth` affine layers: depth-1 hidden layers of `width`, then the output layer.
  static MlpArch uniform(std::size_t input, std::size_t width, std::size_t depth, std::size_t output);

  std::size_t input() const { return layers.front(); }
  std::size_t output() const { return layers.back(); }
  std::size_t depth() const { return layers.size() - 1; }
  void validate() const;
};

/// Weights and biases of an MLP: tensors "l<i>.W" (out x in) and "l<i>.b" (1 x out).
struct MlpParams {
  MlpArch arch;
  ad::ParamSet params;
};

/// Glorot-normal weights, zero biases; identical parameters for identical seeds.
MlpParams init_mlp(const MlpArch& arch, std::uint64_t seed);

/// Applies the MLP row-wise on the tape: tanh on hidden layers, affine output.
ad::Var mlp_apply(ad::Tape& t, const MlpArch& arch, const ad::BoundParams& bound, ad::Var x);

/// Evaluates the MLP at one input vector.
std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x);

/// Evaluates the MLP at every row of `x`.
ad::Mat mlp_forward_batch(const MlpParams& p, const ad::Mat& x);

}  // namespace pidon::nets
