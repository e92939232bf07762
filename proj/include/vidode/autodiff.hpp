#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a handle to a node in a dynamically built graph. Ops record their
// inputs and a backward closure; vidode::ad::backward() walks the graph in
// reverse topological order and accumulates gradients into leaf nodes and
// into the Parameter objects they were created from.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vidode::ad {

using Shape = std::vector<int>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Named trainable tensor. Gradients accumulate into `grad` during backward().
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

struct Node {
  std::vector<double> value;
  std::vector<double> grad;
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  Parameter* param = nullptr;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var constant(std::vector<double> value, Shape shape);
  static Var constant(double scalar);
  static Var zeros(const Shape& shape);
  /// Leaf that requires gradients but is not bound to a Parameter.
  static Var variable(std::vector<double> value, Shape shape);
  /// Leaf bound to a parameter; backward() adds into p.grad.
  static Var leaf(Parameter& p);

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<double>& value() const { return node_->value; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  int dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Runs reverse accumulation from a scalar output.
void backward(const Var& output);

bool grad_enabled();

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise (shapes must match exactly).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var silu(const Var& a);
Var gelu(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var clamp(const Var& a, double lo, double hi);
/// Elementwise pick: out[i] = take_a[i] ? a[i] : b[i].
Var select(const std::vector<bool>& take_a, const Var& a, const Var& b);

// Scalar-valued Var (size 1) interactions.
Var mul_scalar(const Var& a, const Var& s);
Var div_scalar(const Var& a, const Var& s);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);
/// Euclidean norm; gradient taken as zero at the origin.
Var norm(const Var& a);
/// a / max(|a|, eps).
Var normalize(const Var& a, double eps = 1e-12);
/// Row-wise normalize of a 2-D tensor.
Var normalize_rows(const Var& a, double eps = 1e-12);
/// Mean over the first axis of a 2-D tensor: [n, m] -> [m].
Var mean_rows(const Var& a);
/// sum_i coefs[i] * xs[i], accumulated left to right in one node.
Var linear_combination(const std::vector<Var>& xs, const std::vector<double>& coefs);
/// Sum of a list of same-shaped Vars.
Var sum_all(const std::vector<Var>& xs);

// Shape manipulation.
Var reshape(const Var& a, Shape shape);
Var transpose(const Var& a);
/// Contiguous slice [r0, r1) along the first axis.
Var slice_rows(const Var& a, int r0, int r1);
/// Slice [c0, c1) along the last axis.
Var slice_last(const Var& a, int c0, int c1);
/// Concatenate along the first axis.
Var concat_rows(const std::vector<Var>& xs);
/// Concatenate along the last axis; all leading dims must agree.
Var concat_last(const std::vector<Var>& xs);

// Linear algebra.
/// [m, k] x [k, n] -> [m, n].
Var matmul(const Var& a, const Var& b);
/// Adds a bias of size last-dim to every row.
Var add_bias(const Var& x, const Var& b);
/// x[.., in] W[in, out] + b[out].
Var linear(const Var& x, const Var& w, const Var& b);
/// W x + b for a frozen row-major matrix W [out, in] and vector x [in].
/// The matrix and bias are captured by pointer and must outlive the graph.
Var affine_frozen(const RowMatrix& w, const Eigen::VectorXd* bias, const Var& x);
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Spatial ops on channel-last tensors [H, W, C].
/// Weights [kh, kw, Cin, Cout], bias [Cout]; zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Non-overlapping average pooling with window (ph, pw); H, W must divide.
Var avg_pool2d(const Var& x, int ph, int pw);

}  // namespace vidode::ad
