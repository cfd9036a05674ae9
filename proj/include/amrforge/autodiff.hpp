#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

namespace amrforge {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Reverse-mode differentiation over dense matrices. Nodes are appended in
/// evaluation order; backward() walks them in reverse.
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  /// Leaf holding its own copy; never receives a gradient.
  Var constant(Mat value);
  /// Leaf that reads `value` in place; it must outlive the tape.
  Var input(const Mat& value, bool requires_grad);

  const Mat& value(Var v) const;
  /// Accumulated gradient; a zero matrix of the right shape if none arrived.
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and back-propagates.
  void backward(Var output);

  Var matmul(Var a, Var b);
  /// x * w^T, the usual linear layer with w stored (out x in).
  Var matmul_nt(Var x, Var w);
  Var add(Var a, Var b);
  /// Adds a 1 x n row to every row of x.
  Var add_row(Var x, Var row);
  Var scale(Var x, double s);
  /// Tanh approximation.
  Var gelu(Var x);
  /// Per-row normalization with 1 x n gain and bias.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);
  Var gather_rows(Var table, std::vector<int> rows);
  /// Multi-head scaled dot-product attention over packed sequences. Rows
  /// q_offsets[b]..q_offsets[b+1] of q attend to rows k_offsets[b]..k_offsets[b+1]
  /// of k and v. With `causal`, query i of a segment sees keys 0..i only, and
  /// segment lengths must agree.
  Var attention(Var q, Var k, Var v, int heads, std::vector<int> q_offsets, std::vector<int> k_offsets,
                bool causal);
  /// Sum of -log softmax(logits)[label] over rows with label >= 0, divided by
  /// `normalizer`. Returns 1 x 1.
  Var cross_entropy(Var logits, std::vector<int> labels, double normalizer);

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Mat&)> backward;
  };

  Var push(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> backward);
  void accumulate(Var v, const Mat& g);
  template <class Expr>
  void accumulate_expr(Var v, const Expr& g);
  bool any_grad(std::initializer_list<Var> vars) const;

  std::vector<Node> nodes_;
};

namespace detail {
double gelu(double x);
double gelu_derivative(double x);
/// Row-wise layer norm; `inv_std` receives 1/sigma per row when non-null.
Mat layer_norm_rows(const Mat& x, const Mat& gain, const Mat& bias, double eps, Eigen::VectorXd* inv_std = nullptr);
/// In-place stable softmax of each row.
void softmax_rows(Mat& m);
}  // namespace detail

}  // namespace amrforge
