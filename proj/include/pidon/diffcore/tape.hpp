#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pidon/diffcore/ndarray.hpp"

namespace pidon::ad {

using Mat = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Handle to a node recorded on a Tape. Only valid for the tape that created it.
struct Var {
  std::uint64_t tape = 0;
  std::int64_t index = -1;
  bool valid() const { return index >= 0; }
};

/// Block structure of a stacked jet matrix.
///
/// A jet over `rows` points is stored as one matrix with `blocks() * rows` rows:
/// block 0 holds values, then for every direction its first-derivative block and,
/// when the direction has order 2, its second-derivative block. A matrix with
/// exactly `rows` rows is "plain": constant along every direction.
struct JetLayout {
  Index rows = 0;
  std::vector<int> orders;

  int blocks() const;
  int first_block(std::size_t dir) const;
  /// -1 when the direction is first order only.
  int second_block(std::size_t dir) const;
  bool is_plain(Index matrix_rows) const { return matrix_rows == rows; }
  void check(Index matrix_rows, const char* where) const;
};

/// Reverse-mode tape over dense matrix values.
///
/// Nodes are appended in evaluation order, so the recording is a topological
/// order by construction; an op may only consume handles that already exist on
/// this tape. backward() visits nodes once, newest first.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& out_value, const Mat& out_adjoint)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf that never receives an adjoint.
  Var constant(Mat value);
  /// Leaf that receives an adjoint during backward().
  Var variable(Mat value);

  /// Appends an op node. `fn` is called during backward() if any input requires a gradient.
  Var record(Mat value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Mat& value(Var v) const;
  double scalar(Var v) const;
  bool requires_grad(Var v) const;

  /// Adjoint of `v` after backward(); zeros when nothing flowed into it.
  Mat adjoint(Var v) const;

  /// Mutable adjoint buffer, allocated on first use. For op implementations.
  Mat& grad(Var v);

  /// adjoint(v) += e; the first contribution is assigned (no zero fill).
  template <class E>
  void accumulate(Var v, const E& e) {
    Node& n = node(v);
    if (n.has_adjoint) {
      n.adjoint += e;
    } else {
      n.adjoint = e;
      n.has_adjoint = true;
    }
  }
  /// adjoint(v) += l * r as a matrix product.
  template <class L, class R>
  void accumulate_product(Var v, const L& l, const R& r) {
    Node& n = node(v);
    if (n.has_adjoint) {
      n.adjoint.matrix().noalias() += l * r;
    } else {
      n.adjoint.resize(l.rows(), r.cols());
      n.adjoint.matrix().noalias() = l * r;
      n.has_adjoint = true;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every variable.
  void backward(Var root);
  /// Propagates an explicit seed with the shape of `root`.
  void backward(Var root, const Mat& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat adjoint;
    bool requires_grad = false;
    bool has_adjoint = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::uint64_t id_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise arithmetic on equal shapes.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var add_scalar(Tape& t, Var a, double c);
Var square(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var sin(Tape& t, Var a);
Var cos(Tape& t, Var a);
Var exp(Tape& t, Var a);

/// (1 - z) * u + z * v, elementwise.
Var gate(Tape& t, Var z, Var u, Var v);

/// a (n x k) times b (k x m).
Var matmul(Tape& t, Var a, Var b);
/// Affine map x W^T + b applied to each row; W is (out x in), b is (1 x out).
/// With `bias_rows` >= 0 only the first `bias_rows` rows receive the bias.
Var linear(Tape& t, Var x, Var w, Var b, Index bias_rows = -1);
/// Row vector (1 x in) times W^T.
Var matvec(Tape& t, Var w, Var x);

/// s (1 x 1) times a constant matrix.
Var scalar_times(Tape& t, Var s, const Mat& c);

Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);

/// Repeats every row `k` times consecutively.
Var repeat_rows(Tape& t, Var a, Index k);
Var slice_rows(Tape& t, Var a, Index start, Index count);
Var slice_cols(Tape& t, Var a, Index start, Index count);
/// Row-major reshape (no data movement).
Var reshape(Tape& t, Var a, Index rows, Index cols);

// Jet-lifted ops over stacked jet matrices (see JetLayout).

/// Constant jet for coordinates `points` (n x dim): direction k seeds coordinate `dims[k]`.
Var jet_coordinates(Tape& t, const Mat& points, const JetLayout& layout,
                    const std::vector<int>& dims);
Var jet_tanh(Tape& t, Var z, const JetLayout& layout);
/// Gate rule with the jet product rule; each operand may be plain or a full jet.
Var jet_gate(Tape& t, Var z, Var u, Var v, const JetLayout& layout);
/// Per-row dot products of `a` and `b` over `chunks` equal contiguous column slices.
/// Result has `chunks` columns; each operand may be plain or a full jet.
Var jet_chunk_dot(Tape& t, Var a, Var b, Index chunks, const JetLayout& layout);
/// Extracts one block of a stacked jet (a plain operand yields zeros for derivative blocks).
Var jet_block(Tape& t, Var a, int block, const JetLayout& layout);

/// Ordered set of named parameter tensors.
class ParamSet {
 public:
  void add(std::string name, Mat value);
  std::size_t count() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Mat& tensor(std::size_t i) { return tensors_[i]; }
  const Mat& tensor(std::size_t i) const { return tensors_[i]; }
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t total_size() const;

  NdArray flatten() const;
  /// Overwrites every tensor from a flat vector in tensor order.
  void assign(std::span<const double> flat);

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<std::string> names_;
  std::vector<Mat> tensors_;
};

/// A ParamSet registered as variables on one tape.
struct BoundParams {
  std::vector<Var> vars;
  std::size_t total_size = 0;
  const Var& operator[](std::size_t i) const { return vars[i]; }
};

BoundParams bind(Tape& t, const ParamSet& params);
/// Binds the parameters as constants (no gradient), e.g. a frozen surrogate.
BoundParams bind_frozen(Tape& t, const ParamSet& params);

/// Runs backward from the scalar `loss` and returns d(loss)/d(params) flattened in
/// parameter order; parameters not on the path get zeros.
NdArray grad_params(Tape& t, Var loss, const BoundParams& params);

/// Gathers adjoints after a backward pass without running it again.
NdArray collect_gradient(const Tape& t, const BoundParams& params);

}  // namespace pidon::ad
