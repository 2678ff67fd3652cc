#include "pidon/diffcore/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <optional>

#include "pidon/errors.hpp"

namespace pidon::ad {
namespace {

std::atomic<std::uint64_t> next_tape_id{1};

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

// tanh through the vectorized exp; Eigen's double tanh is scalar.
Mat fast_tanh(const Mat& x) {
  const Mat e = (-2.0 * x.abs()).exp();
  return x.sign() * (1.0 - e) / (1.0 + e);
}

// One term c * Z_p * D_q of the second-order product rule, landing in block o.
struct ProductTerm {
  int out;
  int left;
  int right;
  double coeff;
};

std::vector<ProductTerm> product_terms(const JetLayout& layout) {
  std::vector<ProductTerm> terms{{0, 0, 0, 1.0}};
  for (std::size_t d = 0; d < layout.orders.size(); ++d) {
    const int i1 = layout.first_block(d);
    terms.push_back({i1, i1, 0, 1.0});
    terms.push_back({i1, 0, i1, 1.0});
    const int i2 = layout.second_block(d);
    if (i2 >= 0) {
      terms.push_back({i2, i2, 0, 1.0});
      terms.push_back({i2, i1, i1, 2.0});
      terms.push_back({i2, 0, i2, 1.0});
    }
  }
  return terms;
}

// Read-only view of a plain-or-jet operand.
struct JetView {
  const Mat* m;
  Index n;
  bool plain;

  JetView(const Mat& mat, const JetLayout& layout, const char* where)
      : m(&mat), n(layout.rows), plain(layout.is_plain(mat.rows())) {
    layout.check(mat.rows(), where);
  }
  bool has(int b) const { return !plain || b == 0; }
  auto block(int b) const { return m->middleRows(plain ? 0 : b * n, n); }
};

}  // namespace

// --------------------------------------------------------------------------------------
// JetLayout
// --------------------------------------------------------------------------------------

int JetLayout::blocks() const {
  int b = 1;
  for (int o : orders) b += o;
  return b;
}

int JetLayout::first_block(std::size_t dir) const {
  int b = 1;
  for (std::size_t d = 0; d < dir; ++d) b += orders[d];
  return b;
}

int JetLayout::second_block(std::size_t dir) const {
  return orders[dir] >= 2 ? first_block(dir) + 1 : -1;
}

void JetLayout::check(Index matrix_rows, const char* where) const {
  for (int o : orders) {
    if (o < 1 || o > 2) throw GraphError(std::string(where) + ": jet order must be 1 or 2");
  }
  if (matrix_rows != rows && matrix_rows != rows * blocks()) {
    throw ShapeError(std::string(where) + ": " + std::to_string(matrix_rows) +
                     " rows do not fit jet layout with " + std::to_string(rows) + " points and " +
                     std::to_string(blocks()) + " blocks");
  }
}

// --------------------------------------------------------------------------------------
// Tape
// --------------------------------------------------------------------------------------

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != id_ || v.index < 0 || static_cast<std::size_t>(v.index) >= nodes_.size()) {
    throw GraphError("handle does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.index)];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).node(v));
}

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var{id_, static_cast<std::int64_t>(nodes_.size() - 1)};
}

Var Tape::variable(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}});
  return Var{id_, static_cast<std::int64_t>(nodes_.size() - 1)};
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool rg = false;
  for (const Var& in : inputs) rg = rg || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, rg, false, rg ? std::move(fn) : BackwardFn{}});
  return Var{id_, static_cast<std::int64_t>(nodes_.size() - 1)};
}

const Mat& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw ShapeError("scalar(): node is not 1x1");
  return m(0, 0);
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Mat Tape::adjoint(Var v) const {
  const Node& n = node(v);
  if (n.has_adjoint) return n.adjoint;
  return Mat::Zero(n.value.rows(), n.value.cols());
}

Mat& Tape::grad(Var v) {
  Node& n = node(v);
  if (!n.has_adjoint) {
    n.adjoint = Mat::Zero(n.value.rows(), n.value.cols());
    n.has_adjoint = true;
  }
  return n.adjoint;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw GraphError("backward(): root must be a 1x1 scalar");
  backward(root, Mat::Ones(1, 1));
}

void Tape::backward(Var root, const Mat& seed) {
  require_same_shape(value(root), seed, "backward");
  for (Node& n : nodes_) {
    n.has_adjoint = false;
    n.adjoint = Mat();
  }
  if (!node(root).requires_grad) return;
  grad(root) = seed;
  for (auto i = static_cast<std::size_t>(root.index) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_adjoint || !n.backward) continue;
    n.backward(*this, n.value, n.adjoint);
    // Interior adjoints are dead once propagated; only leaves keep theirs.
    n.adjoint = Mat();
    n.has_adjoint = false;
  }
}

// --------------------------------------------------------------------------------------
// Elementwise ops
// --------------------------------------------------------------------------------------

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& t, const Mat&, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "sub");
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& t, const Mat&, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -(g));
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "mul");
  return t.record(t.value(a) * t.value(b), {a, b}, [a, b](Tape& t, const Mat&, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
    if (t.requires_grad(b)) t.accumulate(b, g * t.value(a));
  });
}

Var div(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "div");
  return t.record(t.value(a) / t.value(b), {a, b}, [a, b](Tape& t, const Mat& q, const Mat& g) {
    const Mat& vb = t.value(b);
    if (t.requires_grad(a)) t.accumulate(a, g / vb);
    if (t.requires_grad(b)) t.accumulate(b, -(g * q / vb));
  });
}

Var scale(Tape& t, Var a, double c) {
  return t.record(c * t.value(a), {a}, [a, c](Tape& t, const Mat&, const Mat& g) {
    t.accumulate(a, c * g);
  });
}

Var add_scalar(Tape& t, Var a, double c) {
  return t.record(t.value(a) + c, {a}, [a](Tape& t, const Mat&, const Mat& g) { t.accumulate(a, g); });
}

Var square(Tape& t, Var a) {
  return t.record(t.value(a).square(), {a}, [a](Tape& t, const Mat&, const Mat& g) {
    t.accumulate(a, 2.0 * g * t.value(a));
  });
}

Var tanh(Tape& t, Var a) {
  return t.record(fast_tanh(t.value(a)), {a}, [a](Tape& t, const Mat& y, const Mat& g) {
    t.accumulate(a, g * (1.0 - y.square()));
  });
}

Var sin(Tape& t, Var a) {
  return t.record(t.value(a).sin(), {a}, [a](Tape& t, const Mat&, const Mat& g) {
    t.accumulate(a, g * t.value(a).cos());
  });
}

Var cos(Tape& t, Var a) {
  return t.record(t.value(a).cos(), {a}, [a](Tape& t, const Mat&, const Mat& g) {
    t.accumulate(a, -(g * t.value(a).sin()));
  });
}

Var exp(Tape& t, Var a) {
  return t.record(t.value(a).exp(), {a}, [a](Tape& t, const Mat& y, const Mat& g) {
    t.accumulate(a, g * y);
  });
}

Var gate(Tape& t, Var z, Var u, Var v) {
  const Mat& vz = t.value(z);
  require_same_shape(vz, t.value(u), "gate");
  require_same_shape(vz, t.value(v), "gate");
  Mat out = t.value(u) + vz * (t.value(v) - t.value(u));
  return t.record(std::move(out), {z, u, v}, [z, u, v](Tape& t, const Mat&, const Mat& g) {
    const Mat& vz = t.value(z);
    if (t.requires_grad(z)) t.accumulate(z, g * (t.value(v) - t.value(u)));
    if (t.requires_grad(u)) t.accumulate(u, g * (1.0 - vz));
    if (t.requires_grad(v)) t.accumulate(v, g * vz);
  });
}

// --------------------------------------------------------------------------------------
// Linear algebra
// --------------------------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
  const Mat& va = t.value(a);
  const Mat& vb = t.value(b);
  if (va.cols() != vb.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat out(va.rows(), vb.cols());
  out.matrix().noalias() = va.matrix() * vb.matrix();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Mat&, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate_product(a, g.matrix(), t.value(b).matrix().transpose());
    if (t.requires_grad(b)) t.accumulate_product(b, t.value(a).matrix().transpose(), g.matrix());
  });
}

Var linear(Tape& t, Var x, Var w, Var b, Index bias_rows) {
  const Mat& vx = t.value(x);
  const Mat& vw = t.value(w);
  const Mat& vb = t.value(b);
  if (vx.cols() != vw.cols()) {
    throw ShapeError("linear: input width " + std::to_string(vx.cols()) + " vs weight columns " +
                     std::to_string(vw.cols()));
  }
  if (vb.rows() != 1 || vb.cols() != vw.rows()) throw ShapeError("linear: bias must be 1 x out");
  const Index nb = bias_rows < 0 ? vx.rows() : bias_rows;
  if (nb > vx.rows()) throw ShapeError("linear: bias_rows exceeds input rows");
  Mat out(vx.rows(), vw.rows());
  out.matrix().noalias() = vx.matrix() * vw.matrix().transpose();
  out.topRows(nb).rowwise() += vb.row(0);
  return t.record(std::move(out), {x, w, b}, [x, w, b, nb](Tape& t, const Mat&, const Mat& g) {
    if (t.requires_grad(x)) t.accumulate_product(x, g.matrix(), t.value(w).matrix());
    if (t.requires_grad(w)) t.accumulate_product(w, g.matrix().transpose(), t.value(x).matrix());
    if (t.requires_grad(b)) t.accumulate(b, g.topRows(nb).colwise().sum());
  });
}

Var matvec(Tape& t, Var w, Var x) {
  const Mat& vw = t.value(w);
  const Mat& vx = t.value(x);
  if (vx.cols() != 1 || vx.rows() != vw.cols()) throw ShapeError("matvec: x must be (in x 1)");
  Mat out(vw.rows(), 1);
  out.matrix().noalias() = vw.matrix() * vx.matrix();
  return t.record(std::move(out), {w, x}, [w, x](Tape& t, const Mat&, const Mat& g) {
    if (t.requires_grad(w)) t.accumulate_product(w, g.matrix(), t.value(x).matrix().transpose());
    if (t.requires_grad(x)) t.accumulate_product(x, t.value(w).matrix().transpose(), g.matrix());
  });
}

Var scalar_times(Tape& t, Var s, const Mat& c) {
  if (t.value(s).size() != 1) throw ShapeError("scalar_times: s must be 1x1");
  return t.record(t.scalar(s) * c, {s}, [s, c](Tape& t, const Mat&, const Mat& g) {
    t.grad(s)(0, 0) += (g * c).sum();
  });
}

// --------------------------------------------------------------------------------------
// Reductions and structural ops
// --------------------------------------------------------------------------------------

Var sum(Tape& t, Var a) {
  Mat out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.record(std::move(out), {a}, [a](Tape& t, const Mat&, const Mat& g) {
    t.grad(a) += g(0, 0);
  });
}

Var mean(Tape& t, Var a) {
  const auto n = static_cast<double>(t.value(a).size());
  if (n == 0) throw ShapeError("mean: empty array");
  Mat out(1, 1);
  out(0, 0) = t.value(a).sum() / n;
  return t.record(std::move(out), {a}, [a, n](Tape& t, const Mat&, const Mat& g) {
    t.grad(a) += g(0, 0) / n;
  });
}

Var repeat_rows(Tape& t, Var a, Index k) {
  if (k < 1) throw ShapeError("repeat_rows: k must be >= 1");
  const Mat& va = t.value(a);
  Mat out(va.rows() * k, va.cols());
  for (Index r = 0; r < va.rows(); ++r) out.middleRows(r * k, k).rowwise() = va.row(r);
  return t.record(std::move(out), {a}, [a, k](Tape& t, const Mat&, const Mat& g) {
    Mat& ga = t.grad(a);
    for (Index r = 0; r < ga.rows(); ++r) ga.row(r) += g.middleRows(r * k, k).colwise().sum();
  });
}

Var slice_rows(Tape& t, Var a, Index start, Index count) {
  const Mat& va = t.value(a);
  if (start < 0 || count < 0 || start + count > va.rows()) throw ShapeError("slice_rows: out of range");
  return t.record(va.middleRows(start, count), {a}, [a, start, count](Tape& t, const Mat&, const Mat& g) {
    t.grad(a).middleRows(start, count) += g;
  });
}

Var slice_cols(Tape& t, Var a, Index start, Index count) {
  const Mat& va = t.value(a);
  if (start < 0 || count < 0 || start + count > va.cols()) throw ShapeError("slice_cols: out of range");
  return t.record(va.middleCols(start, count), {a}, [a, start, count](Tape& t, const Mat&, const Mat& g) {
    t.grad(a).middleCols(start, count) += g;
  });
}

Var reshape(Tape& t, Var a, Index rows, Index cols) {
  const Mat& va = t.value(a);
  if (rows * cols != va.size()) throw ShapeError("reshape: element count changes");
  Mat out = Eigen::Map<const Mat>(va.data(), rows, cols);
  return t.record(std::move(out), {a}, [a](Tape& t, const Mat&, const Mat& g) {
    Mat& ga = t.grad(a);
    Eigen::Map<Mat>(ga.data(), g.rows(), g.cols()) += g;
  });
}

// --------------------------------------------------------------------------------------
// Jet-lifted ops
// --------------------------------------------------------------------------------------

Var jet_coordinates(Tape& t, const Mat& points, const JetLayout& layout, const std::vector<int>& dims) {
  if (points.rows() != layout.rows) throw ShapeError("jet_coordinates: point count differs from layout");
  if (dims.size() != layout.orders.size()) throw ShapeError("jet_coordinates: one coordinate per direction");
  const Index n = layout.rows;
  Mat out = Mat::Zero(n * layout.blocks(), points.cols());
  out.topRows(n) = points;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    if (dims[d] < 0 || dims[d] >= points.cols()) throw ShapeError("jet_coordinates: bad coordinate index");
    out.block(layout.first_block(d) * n, dims[d], n, 1).setOnes();
  }
  return t.constant(std::move(out));
}

Var jet_tanh(Tape& t, Var z, const JetLayout& layout) {
  const Mat& vz = t.value(z);
  layout.check(vz.rows(), "jet_tanh");
  if (layout.is_plain(vz.rows())) return tanh(t, z);
  const Index n = layout.rows;
  Mat out(vz.rows(), vz.cols());
  const Mat th = fast_tanh(vz.topRows(n));
  const Mat s = 1.0 - th.square();
  const Mat sp = -2.0 * th * s;
  out.topRows(n) = th;
  for (std::size_t d = 0; d < layout.orders.size(); ++d) {
    const int i1 = layout.first_block(d);
    const int i2 = layout.second_block(d);
    const auto z1 = vz.middleRows(i1 * n, n);
    out.middleRows(i1 * n, n) = s * z1;
    if (i2 >= 0) out.middleRows(i2 * n, n) = s * vz.middleRows(i2 * n, n) + sp * z1.square();
  }
  return t.record(std::move(out), {z}, [z, layout](Tape& t, const Mat& y, const Mat& g) {
    const Index n = layout.rows;
    const Mat& vz = t.value(z);
    const auto th = y.topRows(n);
    const Mat s = 1.0 - th.square();
    const Mat sp = -2.0 * th * s;
    const Mat spp = -2.0 * s.square() + 4.0 * th.square() * s;
    Mat& gz = t.grad(z);
    Mat acc_s = Mat::Zero(n, vz.cols());
    Mat acc_sp = Mat::Zero(n, vz.cols());
    for (std::size_t d = 0; d < layout.orders.size(); ++d) {
      const int i1 = layout.first_block(d);
      const int i2 = layout.second_block(d);
      const auto z1 = vz.middleRows(i1 * n, n);
      const auto g1 = g.middleRows(i1 * n, n);
      gz.middleRows(i1 * n, n) += g1 * s;
      acc_s += g1 * z1;
      if (i2 >= 0) {
        const auto z2 = vz.middleRows(i2 * n, n);
        const auto g2 = g.middleRows(i2 * n, n);
        gz.middleRows(i2 * n, n) += g2 * s;
        gz.middleRows(i1 * n, n) += 2.0 * g2 * sp * z1;
        acc_s += g2 * z2;
        acc_sp += g2 * z1.square();
      }
    }
    gz.topRows(n) += g.topRows(n) * s + acc_s * sp + acc_sp * spp;
  });
}

Var jet_gate(Tape& t, Var z, Var u, Var v, const JetLayout& layout) {
  const JetView Z(t.value(z), layout, "jet_gate");
  const JetView U(t.value(u), layout, "jet_gate");
  const JetView V(t.value(v), layout, "jet_gate");
  if (Z.plain && U.plain && V.plain) return gate(t, z, u, v);
  const Index n = layout.rows;
  const Index cols = Z.m->cols();
  if (U.m->cols() != cols || V.m->cols() != cols) throw ShapeError("jet_gate: column mismatch");
  const int nb = layout.blocks();

  // D = V - U, materialized only where either operand has a block.
  std::vector<std::optional<Mat>> dblk(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    if (U.has(b) && V.has(b)) dblk[b] = V.block(b) - U.block(b);
    else if (V.has(b)) dblk[b] = V.block(b);
    else if (U.has(b)) dblk[b] = -U.block(b);
  }
  Mat out = Mat::Zero(n * nb, cols);
  for (int b = 0; b < nb; ++b) {
    if (U.has(b)) out.middleRows(b * n, n) = U.block(b);
  }
  const auto terms = product_terms(layout);
  for (const auto& tm : terms) {
    if (!Z.has(tm.left) || !dblk[tm.right]) continue;
    out.middleRows(tm.out * n, n) += tm.coeff * Z.block(tm.left) * (*dblk[tm.right]);
  }

  return t.record(std::move(out), {z, u, v}, [z, u, v, layout, terms](Tape& t, const Mat&, const Mat& g) {
    const Index n = layout.rows;
    const int nb = layout.blocks();
    const JetView Z(t.value(z), layout, "jet_gate");
    const JetView U(t.value(u), layout, "jet_gate");
    const JetView V(t.value(v), layout, "jet_gate");
    const Index cols = Z.m->cols();
    const bool need_z = t.requires_grad(z);
    const bool need_d = t.requires_grad(u) || t.requires_grad(v);
    std::vector<std::optional<Mat>> dblk(static_cast<std::size_t>(nb));
    if (need_z) {
      for (int b = 0; b < nb; ++b) {
        if (U.has(b) && V.has(b)) dblk[b] = V.block(b) - U.block(b);
        else if (V.has(b)) dblk[b] = V.block(b);
        else if (U.has(b)) dblk[b] = -U.block(b);
      }
    }
    // Adjoint of D, accumulated for every block D can have.
    std::vector<Mat> gd(static_cast<std::size_t>(nb));
    for (const auto& tm : terms) {
      const auto go = g.middleRows(tm.out * n, n);
      if (need_z && Z.has(tm.left) && dblk[tm.right]) {
        t.grad(z).middleRows(Z.plain ? 0 : tm.left * n, n) += tm.coeff * go * (*dblk[tm.right]);
      }
      if (need_d && Z.has(tm.left) && (U.has(tm.right) || V.has(tm.right))) {
        Mat& acc = gd[tm.right];
        if (acc.size() == 0) acc = Mat::Zero(n, cols);
        acc += tm.coeff * go * Z.block(tm.left);
      }
    }
    for (int b = 0; b < nb; ++b) {
      if (t.requires_grad(u) && U.has(b)) {
        auto gu = t.grad(u).middleRows(U.plain ? 0 : b * n, n);
        gu += g.middleRows(b * n, n);
        if (gd[b].size()) gu -= gd[b];
      }
      if (t.requires_grad(v) && V.has(b) && gd[b].size()) {
        t.grad(v).middleRows(V.plain ? 0 : b * n, n) += gd[b];
      }
    }
  });
}

Var jet_chunk_dot(Tape& t, Var a, Var b, Index chunks, const JetLayout& layout) {
  const JetView A(t.value(a), layout, "jet_chunk_dot");
  const JetView B(t.value(b), layout, "jet_chunk_dot");
  const Index cols = A.m->cols();
  if (B.m->cols() != cols) throw ShapeError("jet_chunk_dot: latent widths differ");
  if (chunks < 1 || cols % chunks != 0) {
    throw ShapeError("jet_chunk_dot: latent width " + std::to_string(cols) + " not divisible by " +
                     std::to_string(chunks) + " outputs");
  }
  const Index n = layout.rows;
  const Index cw = cols / chunks;
  const bool plain = A.plain && B.plain;
  const int nb = plain ? 1 : layout.blocks();
  Mat out = Mat::Zero(n * nb, chunks);
  const auto terms = product_terms(layout);
  for (const auto& tm : terms) {
    if (tm.out >= nb || !A.has(tm.left) || !B.has(tm.right)) continue;
    for (Index k = 0; k < chunks; ++k) {
      out.block(tm.out * n, k, n, 1) +=
          tm.coeff * (A.block(tm.left).middleCols(k * cw, cw) * B.block(tm.right).middleCols(k * cw, cw))
                         .rowwise()
                         .sum();
    }
  }
  return t.record(std::move(out), {a, b}, [a, b, layout, terms, chunks, cw, nb](Tape& t, const Mat&, const Mat& g) {
    const Index n = layout.rows;
    const JetView A(t.value(a), layout, "jet_chunk_dot");
    const JetView B(t.value(b), layout, "jet_chunk_dot");
    const bool need_a = t.requires_grad(a);
    const bool need_b = t.requires_grad(b);
    for (const auto& tm : terms) {
      if (tm.out >= nb || !A.has(tm.left) || !B.has(tm.right)) continue;
      for (Index k = 0; k < chunks; ++k) {
        const auto go = g.block(tm.out * n, k, n, 1);
        if (need_a) {
          t.grad(a).block(A.plain ? 0 : tm.left * n, k * cw, n, cw) +=
              tm.coeff * (B.block(tm.right).middleCols(k * cw, cw).colwise() * go.col(0));
        }
        if (need_b) {
          t.grad(b).block(B.plain ? 0 : tm.right * n, k * cw, n, cw) +=
              tm.coeff * (A.block(tm.left).middleCols(k * cw, cw).colwise() * go.col(0));
        }
      }
    }
  });
}

Var jet_block(Tape& t, Var a, int block, const JetLayout& layout) {
  const Mat& va = t.value(a);
  layout.check(va.rows(), "jet_block");
  if (block < 0 || block >= layout.blocks()) throw ShapeError("jet_block: block index out of range");
  if (layout.is_plain(va.rows())) {
    if (block == 0) return a;
    return t.constant(Mat::Zero(layout.rows, va.cols()));
  }
  return slice_rows(t, a, block * layout.rows, layout.rows);
}

// --------------------------------------------------------------------------------------
// Parameters
// --------------------------------------------------------------------------------------

void ParamSet::add(std::string name, Mat value) {
  if (contains(name)) throw ConfigError("ParamSet: duplicate tensor name " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

Mat& ParamSet::at(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  throw ConfigError("ParamSet: no tensor named " + name);
}

const Mat& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

bool ParamSet::contains(const std::string& name) const {
  for (const auto& n : names_) {
    if (n == name) return true;
  }
  return false;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& m : tensors_) n += static_cast<std::size_t>(m.size());
  return n;
}

NdArray ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& m : tensors_) flat.insert(flat.end(), m.data(), m.data() + m.size());
  return NdArray::vector(std::move(flat));
}

void ParamSet::assign(std::span<const double> flat) {
  if (flat.size() != total_size()) throw ShapeError("ParamSet::assign: flat size mismatch");
  std::size_t off = 0;
  for (auto& m : tensors_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m.size(), m.data());
    off += static_cast<std::size_t>(m.size());
  }
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    const Mat& x = a.tensors_[i];
    const Mat& y = b.tensors_[i];
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0) return false;
  }
  return true;
}

BoundParams bind(Tape& t, const ParamSet& params) {
  BoundParams bp;
  for (std::size_t i = 0; i < params.count(); ++i) bp.vars.push_back(t.variable(params.tensor(i)));
  bp.total_size = params.total_size();
  return bp;
}

BoundParams bind_frozen(Tape& t, const ParamSet& params) {
  BoundParams bp;
  for (std::size_t i = 0; i < params.count(); ++i) bp.vars.push_back(t.constant(params.tensor(i)));
  bp.total_size = params.total_size();
  return bp;
}

NdArray collect_gradient(const Tape& t, const BoundParams& params) {
  std::vector<double> flat;
  flat.reserve(params.total_size);
  for (const Var& v : params.vars) {
    const Mat g = t.adjoint(v);
    flat.insert(flat.end(), g.data(), g.data() + g.size());
  }
  return NdArray::vector(std::move(flat));
}

NdArray grad_params(Tape& t, Var loss, const BoundParams& params) {
  if (!std::isfinite(t.scalar(loss))) throw NumericError("grad_params: loss is not finite");
  t.backward(loss);
  return collect_gradient(t, params);
}

}  // namespace pidon::ad
