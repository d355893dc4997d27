#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace sgt::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  /// Accumulated gradient; zero-sized until backward() reaches the node.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order and backward()
/// walks them in reverse, calling each node's pullback with its gradient.
class Tape {
 public:
  using Pullback = std::function<void(const Matrix& grad)>;

  Var constant(Matrix value);
  /// Leaf whose gradient is wanted.
  Var variable(Matrix value);
  /// Node produced by an op. `needs_grad` should be true iff any input needs
  /// a gradient; the pullback is dropped otherwise.
  Var push(Matrix value, bool needs_grad, Pullback pullback);

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  /// Adds `g` into the gradient of `v` if it needs one.
  void accumulate(Var v, const Matrix& g);

  /// Non-smooth ops (relu, max, absolute values, nearest neighbors) record
  /// which branch they took so gradient checks can spot probes that straddle
  /// a kink.
  void note_branch(std::uint64_t h) { branches_ = branches_ * 1099511628211ull ^ h; }
  std::uint64_t branch_signature() const { return branches_; }

  /// Seeds d out / d out = 1 for a 1x1 output and propagates.
  void backward(Var out);
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Pullback pullback;
  };
  std::vector<Node> nodes_;
  std::uint64_t branches_ = 1469598103934665603ull;
};

/// FNV-1a over the pattern of a boolean or integer matrix.
template <typename Derived>
std::uint64_t pattern_hash(const Eigen::DenseBase<Derived>& m) {
  std::uint64_t h = 1469598103934665603ull;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      h ^= static_cast<std::uint64_t>(static_cast<std::int64_t>(m(i, j)) + 2);
      h *= 1099511628211ull;
    }
  return h;
}

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1 x cols row to every row.
Var add_row(Var a, Var row);
Var hadamard(Var a, Var b);
/// Multiplies every row elementwise by a 1 x cols row.
Var mul_row(Var a, Var row);
/// Constant sparse matrix times a.
Var sparse_left(const Eigen::SparseMatrix<double>& s, Var a);
/// Constant dense matrix times a.
Var dense_left(const Matrix& m, Var a);

// Shape plumbing.
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var vstack(const std::vector<Var>& parts);
Var hstack(const std::vector<Var>& parts);
Var gather_rows(Var a, const std::vector<int>& index);
/// Row-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Elementwise maximum over equally shaped inputs; ties go to the first.
Var max_of(const std::vector<Var>& parts);
/// im2col for a 3x3 valid convolution of an (h*w) x c row-major image:
/// output row (y*(w-2)+x) holds the 9 neighbors (dy-major, then dx) each
/// contributing c columns.
Var im2col3x3(Var image, int h, int w);

/// Adjoint arrangement of a 3x3 valid convolution: `taps` is (h*w) x 9c
/// with column block (dy*3+dx) holding each pixel's contribution to the
/// output pixel above-left of it by (dy, dx). Output row (y*(w-2)+x) sums
/// taps((y+dy)*w + x+dx, block dy*3+dx). conv(X) = shift_sum3x3(X W).
Var shift_sum3x3(Var taps, int h, int w);

// Elementwise.
Var relu(Var a);
/// Exact GELU, x Φ(x).
Var gelu(Var a);
Var exp(Var a);

// Normalizations.
/// Softmax along each row.
Var softmax_rows(Var a);
/// Softmax along each column (over the rows).
Var softmax_cols(Var a);
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
/// Per-column normalization with statistics over all rows. The biased batch
/// mean and variance are written to `mean` / `var` when non-null.
Var channel_norm(Var a, Var gamma, Var beta, double eps, Eigen::RowVectorXd* mean,
                 Eigen::RowVectorXd* var);

// Reductions.
Var sum(Var a);
Var mean_rows(Var a);

}  // namespace sgt::ad
