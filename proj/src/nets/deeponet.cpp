#include "pidon/nets/deeponet.hpp"

#include <random>

#include "pidon/errors.hpp"
#include "pidon/nets/init.hpp"

namespace pidon::nets {
namespace {

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ArtifactMismatch("architecture is missing key " + key);
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw ArtifactMismatch("architecture key " + key + " is not an integer: " + it->second);
  }
}

std::string layer_name(const char* stack, std::size_t l, const char* part) {
  return std::string(stack) + "." + std::to_string(l) + "." + part;
}

}  // namespace

std::string to_string(DeepONetKind kind) {
  return kind == DeepONetKind::modified ? "modified" : "vanilla";
}

DeepONetKind parse_deeponet_kind(const std::string& s) {
  if (s == "modified") return DeepONetKind::modified;
  if (s == "vanilla") return DeepONetKind::vanilla;
  throw ConfigError("unknown DeepONet kind '" + s + "' (expected modified or vanilla)");
}

void DeepONetArch::validate() const {
  if (branch_input == 0 || coord_dim == 0 || width == 0 || latent == 0 || outputs == 0) {
    throw ConfigError("DeepONetArch: all widths must be >= 1");
  }
  if (depth < 2) throw ConfigError("DeepONetArch: depth must be >= 2");
  if (latent % outputs != 0) {
    throw ConfigError("DeepONetArch: latent width " + std::to_string(latent) + " not divisible by " +
                      std::to_string(outputs) + " outputs");
  }
}

std::map<std::string, std::string> DeepONetArch::to_manifest() const {
  return {{"arch.kind", to_string(kind)},
          {"arch.branch_input", std::to_string(branch_input)},
          {"arch.coord_dim", std::to_string(coord_dim)},
          {"arch.width", std::to_string(width)},
          {"arch.depth", std::to_string(depth)},
          {"arch.latent", std::to_string(latent)},
          {"arch.outputs", std::to_string(outputs)}};
}

DeepONetArch DeepONetArch::from_manifest(const std::map<std::string, std::string>& kv) {
  DeepONetArch a;
  auto it = kv.find("arch.kind");
  if (it == kv.end()) throw ArtifactMismatch("architecture is missing key arch.kind");
  a.kind = parse_deeponet_kind(it->second);
  a.branch_input = parse_size(kv, "arch.branch_input");
  a.coord_dim = parse_size(kv, "arch.coord_dim");
  a.width = parse_size(kv, "arch.width");
  a.depth = parse_size(kv, "arch.depth");
  a.latent = parse_size(kv, "arch.latent");
  a.outputs = parse_size(kv, "arch.outputs");
  a.validate();
  return a;
}

DeepONetParams init_deeponet(const DeepONetArch& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  DeepONetParams p{arch, {}};
  auto& ps = p.params;
  const auto zeros = [](std::size_t n) { return ad::Mat::Zero(1, static_cast<ad::Index>(n)); };
  if (arch.kind == DeepONetKind::modified) {
    ps.add("branch_enc.W", glorot_normal(arch.width, arch.branch_input, rng));
    ps.add("branch_enc.b", zeros(arch.width));
    ps.add("trunk_enc.W", glorot_normal(arch.width, arch.coord_dim, rng));
    ps.add("trunk_enc.b", zeros(arch.width));
  }
  for (const char* stack : {"branch", "trunk"}) {
    const std::size_t in = std::string(stack) == "branch" ? arch.branch_input : arch.coord_dim;
    for (std::size_t l = 0; l < arch.depth; ++l) {
      const std::size_t fan_in = l == 0 ? in : arch.width;
      const std::size_t fan_out = l + 1 == arch.depth ? arch.latent : arch.width;
      ps.add(layer_name(stack, l, "W"), glorot_normal(fan_out, fan_in, rng));
      ps.add(layer_name(stack, l, "b"), zeros(fan_out));
    }
  }
  return p;
}

DeepONetGraph::DeepONetGraph(ad::Tape& tape, const DeepONetParams& params, bool trainable)
    : tape_(&tape), arch_(params.arch), params_(&params.params) {
  arch_.validate();
  bound_ = trainable ? ad::bind(tape, params.params) : ad::bind_frozen(tape, params.params);
}

DeepONetGraph::DeepONetGraph(ad::Tape& tape, const DeepONetParams& params, ad::BoundParams bound)
    : tape_(&tape), arch_(params.arch), params_(&params.params), bound_(std::move(bound)) {
  arch_.validate();
  if (bound_.vars.size() != params.params.count()) throw ShapeError("DeepONetGraph: bound parameter count differs");
}

ad::Var DeepONetGraph::param(const std::string& name) const {
  for (std::size_t i = 0; i < params_->count(); ++i) {
    if (params_->name(i) == name) return bound_[i];
  }
  throw ArtifactMismatch("DeepONet parameters lack tensor " + name);
}

ad::JetLayout DeepONetGraph::layout_for(ad::Index rows, const std::vector<int>& orders) {
  return ad::JetLayout{rows, orders};
}

BranchState DeepONetGraph::encode(ad::Var branch_inputs) {
  ad::Tape& t = *tape_;
  const ad::Mat& x = t.value(branch_inputs);
  if (x.cols() != static_cast<ad::Index>(arch_.branch_input)) {
    throw ShapeError("DeepONet: branch input has " + std::to_string(x.cols()) + " values, expected " +
                     std::to_string(arch_.branch_input));
  }
  BranchState s;
  s.samples = x.rows();
  if (arch_.kind == DeepONetKind::vanilla) {
    ad::Var h = branch_inputs;
    for (std::size_t l = 0; l < arch_.depth; ++l) {
      h = ad::tanh(t, ad::linear(t, h, param(layer_name("branch", l, "W")), param(layer_name("branch", l, "b"))));
    }
    s.first = h;
    return s;
  }
  s.encoder = ad::tanh(t, ad::linear(t, branch_inputs, param("branch_enc.W"), param("branch_enc.b")));
  s.first = ad::tanh(t, ad::linear(t, branch_inputs, param("branch.0.W"), param("branch.0.b")));
  if (arch_.depth > 2) {
    s.first_gate = ad::tanh(t, ad::linear(t, s.first, param("branch.1.W"), param("branch.1.b")));
  }
  return s;
}

ad::Var DeepONetGraph::evaluate(const BranchState& branch, const ad::Mat& points, ad::Index per_sample,
                                const std::vector<int>& dirs, const std::vector<int>& orders) {
  ad::Tape& t = *tape_;
  if (points.cols() != static_cast<ad::Index>(arch_.coord_dim)) {
    throw ShapeError("DeepONet: query points have " + std::to_string(points.cols()) + " coordinates, expected " +
                     std::to_string(arch_.coord_dim));
  }
  if (per_sample < 1 || points.rows() != branch.samples * per_sample) {
    throw ShapeError("DeepONet: point count does not match samples x per_sample");
  }
  if (dirs.size() != orders.size()) throw ShapeError("DeepONet: one order per jet direction");
  const ad::Index n = points.rows();
  const ad::JetLayout layout = layout_for(n, orders);
  const ad::Var y = dirs.empty() ? t.constant(points) : ad::jet_coordinates(t, points, layout, dirs);

  const auto affine = [&](ad::Var in, const char* stack, std::size_t l) {
    return ad::linear(t, in, param(layer_name(stack, l, "W")), param(layer_name(stack, l, "b")), n);
  };
  const std::size_t last = arch_.depth - 1;

  if (arch_.kind == DeepONetKind::vanilla) {
    ad::Var h = y;
    for (std::size_t l = 0; l < arch_.depth; ++l) h = ad::jet_tanh(t, affine(h, "trunk", l), layout);
    const ad::Var b = ad::repeat_rows(t, branch.first, per_sample);
    return combine_latents(t, b, h, static_cast<ad::Index>(arch_.outputs), layout);
  }

  const ad::Var v = ad::jet_tanh(
      t, ad::linear(t, y, param("trunk_enc.W"), param("trunk_enc.b"), n), layout);
  const ad::Var u = ad::repeat_rows(t, branch.encoder, per_sample);

  // Branch: H1 and Z1 are per-sample; the query point enters through V.
  ad::Var hu;
  if (branch.first_gate) {
    hu = ad::jet_gate(t, ad::repeat_rows(t, *branch.first_gate, per_sample), u, v, layout);
    for (std::size_t l = 2; l < last; ++l) {
      const ad::Var z = ad::jet_tanh(t, affine(hu, "branch", l), layout);
      hu = ad::jet_gate(t, z, u, v, layout);
    }
  } else {
    hu = ad::repeat_rows(t, branch.first, per_sample);
  }

  ad::Var hy = ad::jet_tanh(t, affine(y, "trunk", 0), layout);
  for (std::size_t l = 1; l < last; ++l) {
    const ad::Var z = ad::jet_tanh(t, affine(hy, "trunk", l), layout);
    hy = ad::jet_gate(t, z, u, v, layout);
  }

  const ad::Var bl = ad::jet_tanh(t, affine(hu, "branch", last), layout);
  const ad::Var tl = ad::jet_tanh(t, affine(hy, "trunk", last), layout);
  return combine_latents(t, bl, tl, static_cast<ad::Index>(arch_.outputs), layout);
}

ad::Var combine_latents(ad::Tape& t, ad::Var branch_latent, ad::Var trunk_latent, ad::Index outputs,
                        const ad::JetLayout& layout) {
  return ad::jet_chunk_dot(t, branch_latent, trunk_latent, outputs, layout);
}

std::vector<double> deeponet_forward(const DeepONetParams& p, std::span<const double> u,
                                     std::span<const double> y) {
  ad::Mat in(1, static_cast<ad::Index>(u.size()));
  for (std::size_t i = 0; i < u.size(); ++i) in(0, static_cast<ad::Index>(i)) = u[i];
  ad::Mat pt(1, static_cast<ad::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) pt(0, static_cast<ad::Index>(i)) = y[i];
  const ad::Mat out = deeponet_predict(p, in, pt);
  return {out.data(), out.data() + out.size()};
}

ad::Mat deeponet_predict(const DeepONetParams& p, const ad::Mat& inputs, const ad::Mat& points) {
  ad::Tape t;
  DeepONetGraph g(t, p, false);
  const BranchState b = g.encode(t.constant(inputs));
  ad::Mat all(inputs.rows() * points.rows(), points.cols());
  for (ad::Index s = 0; s < inputs.rows(); ++s) all.middleRows(s * points.rows(), points.rows()) = points;
  return t.value(g.evaluate(b, all, points.rows()));
}

}  // namespace pidon::nets
