#pragma once

#include <functional>

#include "pidon/diffcore/tape.hpp"

namespace pidon::ad {

/// Builds a scalar loss on a fresh tape from bound parameters.
using LossBuilder = std::function<Var(Tape&, const BoundParams&)>;

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  NdArray analytic;
  NdArray numeric;
};

/// Central finite differences of `loss` with respect to every parameter component.
NdArray finite_difference_gradient(const LossBuilder& loss, const ParamSet& params, double h);

/// Compares reverse-mode and central-difference gradients componentwise with
/// |AD - FD| / (|FD| + 1e-12). Throws ConfigError unless h > 0.
GradientCheckResult check_gradient(const LossBuilder& loss, const ParamSet& params, double h);

/// Evaluates `loss` once and returns its value.
double evaluate_loss(const LossBuilder& loss, const ParamSet& params);

}  // namespace pidon::ad
