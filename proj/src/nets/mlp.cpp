#include "pidon/nets/mlp.hpp"

#include <cmath>
#include <string>

#include "pidon/errors.hpp"
#include "pidon/nets/init.hpp"

namespace pidon::nets {

ad::Mat glorot_normal(std::size_t fan_out, std::size_t fan_in, std::mt19937_64& rng) {
  if (fan_in == 0 || fan_out == 0) throw ConfigError("glorot_normal: zero width");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  ad::Mat w(static_cast<ad::Index>(fan_out), static_cast<ad::Index>(fan_in));
  for (ad::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

MlpArch MlpArch::uniform(std::size_t input, std::size_t width, std::size_t depth, std::size_t output) {
  if (depth == 0) throw ConfigError("MlpArch: depth must be >= 1");
  MlpArch a;
  a.layers.push_back(input);
  for (std::size_t i = 0; i + 1 < depth; ++i) a.layers.push_back(width);
  a.layers.push_back(output);
  return a;
}

void MlpArch::validate() const {
  if (layers.size() < 2) throw ConfigError("MlpArch: need at least input and output widths");
  for (std::size_t w : layers) {
    if (w == 0) throw ConfigError("MlpArch: zero layer width");
  }
}

MlpParams init_mlp(const MlpArch& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  MlpParams p{arch, {}};
  for (std::size_t l = 0; l + 1 < arch.layers.size(); ++l) {
    const std::string prefix = "l" + std::to_string(l);
    p.params.add(prefix + ".W", glorot_normal(arch.layers[l + 1], arch.layers[l], rng));
    p.params.add(prefix + ".b", ad::Mat::Zero(1, static_cast<ad::Index>(arch.layers[l + 1])));
  }
  return p;
}

ad::Var mlp_apply(ad::Tape& t, const MlpArch& arch, const ad::BoundParams& bound, ad::Var x) {
  if (bound.vars.size() != 2 * arch.depth()) throw ShapeError("mlp_apply: parameter count mismatch");
  if (t.value(x).cols() != static_cast<ad::Index>(arch.input())) {
    throw ShapeError("mlp_apply: input width " + std::to_string(t.value(x).cols()) + " but network expects " +
                     std::to_string(arch.input()));
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    h = ad::linear(t, h, bound[2 * l], bound[2 * l + 1]);
    if (l + 1 < arch.depth()) h = ad::tanh(t, h);
  }
  return h;
}

ad::Mat mlp_forward_batch(const MlpParams& p, const ad::Mat& x) {
  ad::Tape t;
  const auto bound = ad::bind_frozen(t, p.params);
  return t.value(mlp_apply(t, p.arch, bound, t.constant(x)));
}

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x) {
  ad::Mat row(1, static_cast<ad::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<ad::Index>(i)) = x[i];
  const ad::Mat out = mlp_forward_batch(p, row);
  return {out.data(), out.data() + out.size()};
}

}  // namespace pidon::nets
