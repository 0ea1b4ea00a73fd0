#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace duedl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data iff requires_grad
  bool requires_grad = false;
  Tape* tape = nullptr;  // set while a live tape owns the op producing this node
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

// Dense row-major f64 array. Values produced by ops are immutable; only
// leaves (parameters) are mutated in place by the optimizer.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t flat) const { return node_->data[flat]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  // Empty span when the tensor does not carry a gradient buffer.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();

  // Tape-connected means produced by a recorded op on a live tape.
  bool on_tape() const { return node_->tape != nullptr; }

  // Copy of the values with no gradient tracking.
  Tensor detach() const;

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

// Ordered record of differentiable ops. Install with Tape::Scope to make ops
// on the current thread record onto it; without an active tape ops are
// evaluated without gradient tracking.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<detail::NodePtr> inputs, detail::NodePtr output, BackwardFn fn);

  // Accumulates d(loss)/d(leaf) into every requires_grad leaf. A second call
  // without reset() throws.
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* current();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  // Suspends recording on the current thread for its lifetime.
  class NoGrad {
   public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Op {
    std::vector<detail::NodePtr> inputs;
    detail::NodePtr output;
    BackwardFn fn;
  };
  std::vector<Op> ops_;
  bool consumed_ = false;
};

// Runs the backward pass of the tape that produced `loss`.
void backward(const Tensor& loss);

enum class Unary { neg, exp, log, square, relu, softplus, sqrt, lgamma, digamma };
enum class Binary { add, sub, mul, div };

// Broadcasting: one operand may have fewer elements if, after dropping its
// leading 1-extents, its shape equals the trailing extents of the other.
Tensor elementwise(Binary kind, const Tensor& a, const Tensor& b);
Tensor elementwise(Unary kind, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor lgamma(const Tensor& a);
Tensor digamma(const Tensor& a);

// Shape manipulation (differentiable copies).
Tensor reshape(const Tensor& a, Shape shape);
// Concatenate [N,C1,H,W] and [N,C2,H,W] along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Gathers columns of a tensor viewed as [rows, cols] where cols is the
// product of the last `trailing` extents. Result is [rows, idx.size()].
Tensor gather_columns(const Tensor& a, std::size_t trailing, std::span<const std::size_t> idx);

// Reductions. Axes are sorted and unique; the reduced axes are removed.
Tensor sum(const Tensor& a, std::vector<std::size_t> axes);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a, std::vector<std::size_t> axes);
Tensor mean(const Tensor& a);
Tensor max(const Tensor& a, std::size_t axis);
// Index of the maximum along `axis` (ties to the lowest index). Never on tape.
Tensor argmax(const Tensor& a, std::size_t axis);

// NCHW cross-correlation.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
// Adds bias[C] to every channel of [N,C,H,W], optionally followed by relu
// in the same op.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias, bool fuse_relu = false);
Tensor maxpool2(const Tensor& input);
Tensor nearest_upsample2(const Tensor& input);

}  // namespace duedl
