#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace gvqa {

// Dense double tensor with reverse-mode automatic differentiation.
//
// Design: every differentiable op is a free function that computes its output
// eagerly and, when a Tape is active and some input requires gradients,
// records a backward closure on the tape. Tape::backward replays closures in
// reverse order; gradients from fan-out accumulate additively. Gradients are
// stored alongside the values on the shared TensorImpl, so Tensor handles are
// cheap to copy and a closure keeps its operands alive via shared_ptr.

using Shape = std::vector<int>;

int numel_of(const Shape& s);
std::string shape_str(const Shape& s);

// Raised by every op whose input shapes are inconsistent; message names the
// op and the offending shapes.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from(Shape s, std::vector<double> v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int numel() const { return static_cast<int>(impl_->data.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  double item() const;  // requires numel() == 1
  double value_at(int flat) const { return impl_->data[static_cast<size_t>(flat)]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on);
  double* grad() { return impl_->grad.data(); }
  const double* grad() const { return impl_->grad.data(); }
  void zero_grad();

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor make_out(Shape s, bool rg);
};

// Records the backward closures of one forward pass. Exactly one tape is
// active at a time (activation nests); with no active tape, ops run in
// inference mode and record nothing. Cleared between training steps so
// closures (and the tensors they capture) are released.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(root)/d(root) = 1 and replays all recorded closures in reverse.
  // root must be a scalar recorded under this tape.
  void backward(const Tensor& root);

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* prev_ = nullptr;
};

// ----- elementwise / arithmetic -----
Tensor add(const Tensor& a, const Tensor& b);   // same shape
Tensor sub(const Tensor& a, const Tensor& b);   // same shape
Tensor mul(const Tensor& a, const Tensor& b);   // same shape (Hadamard)
Tensor div_scalar(const Tensor& a, const Tensor& s);  // s: scalar tensor
Tensor scale(const Tensor& x, const Tensor& s);       // s: scalar tensor
Tensor scale_const(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// log with its argument clamped to [1e-6, inf) so downstream losses cannot
// produce -inf; the clamped region contributes zero gradient.
Tensor log_clamped(const Tensor& x);

// Ties route the full subgradient to the FIRST argument attaining the
// extremum (a for the binary forms, the lowest flat index for reductions).
Tensor min_elem(const Tensor& a, const Tensor& b);
Tensor max_elem(const Tensor& a, const Tensor& b);
Tensor min_reduce(const Tensor& x);  // -> scalar
Tensor max_reduce(const Tensor& x);  // -> scalar

// ----- reductions / shape -----
Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar
Tensor mean_spatial(const Tensor& x);  // [H,W,C] -> [C], mean over H,W
Tensor reshape(const Tensor& x, Shape s);
Tensor transpose(const Tensor& x);              // 2-D
Tensor concat(const std::vector<Tensor>& xs, int axis);  // matching ranks
Tensor select_row(const Tensor& x, int row);    // 2-D -> 1-D view copy

// ----- linear algebra -----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor dot(const Tensor& a, const Tensor& b);     // 1-D . 1-D -> scalar

// Softmax over axis 0 of a 2-D tensor (independently per column),
// max-subtracted for stability.
Tensor softmax_cols(const Tensor& x);

// 2-D convolution over [H,W,Cin] with kernel [kh,kw,Cin,Cout] (odd kh,kw),
// stride 1, zero padding that preserves H,W; bias [Cout] added per channel.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b);

// All ordered pairs of rows: [n,c] -> [n*n, 2c]; row i*n+j is [row_i | row_j].
Tensor pair_concat(const Tensor& v);

// ----- verification helper -----
// Central finite differences of f at every coordinate of x (in-place nudges),
// used by the gradient tests to validate the analytic backward pass.
std::vector<double> finite_difference(const std::function<double()>& f,
                                      Tensor x, double step);

}  // namespace gvqa
