#include "pidon/diffcore/gradcheck.hpp"

#include <cmath>

#include "pidon/errors.hpp"

namespace pidon::ad {

double evaluate_loss(const LossBuilder& loss, const ParamSet& params) {
  Tape t;
  const BoundParams bp = bind_frozen(t, params);
  return t.scalar(loss(t, bp));
}

NdArray finite_difference_gradient(const LossBuilder& loss, const ParamSet& params, double h) {
  if (!(h > 0.0)) throw ConfigError("finite differences need a positive step");
  ParamSet probe = params;
  NdArray flat = params.flatten();
  NdArray out({flat.size()});
  std::vector<double> work(flat.data().begin(), flat.data().end());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double x0 = work[i];
    work[i] = x0 + h;
    probe.assign(work);
    const double fp = evaluate_loss(loss, probe);
    work[i] = x0 - h;
    probe.assign(work);
    const double fm = evaluate_loss(loss, probe);
    work[i] = x0;
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

GradientCheckResult check_gradient(const LossBuilder& loss, const ParamSet& params, double h) {
  if (!(h > 0.0)) throw ConfigError("check_gradient: step h must be > 0");
  GradientCheckResult r;
  {
    Tape t;
    const BoundParams bp = bind(t, params);
    r.analytic = grad_params(t, loss(t, bp), bp);
  }
  r.numeric = finite_difference_gradient(loss, params, h);
  for (std::size_t i = 0; i < r.analytic.size(); ++i) {
    const double err = std::abs(r.analytic[i] - r.numeric[i]) / (std::abs(r.numeric[i]) + 1e-12);
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace pidon::ad
