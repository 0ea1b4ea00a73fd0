#include "duedl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "duedl/dropout.hpp"
#include "duedl/errors.hpp"
#include "duedl/special.hpp"

namespace duedl {

using detail::Node;
using detail::NodePtr;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= ndim()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape::~Tape() { reset(); }

Tape* Tape::current() { return g_current_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
Tape::Scope::~Scope() { g_current_tape = previous_; }

Tape::NoGrad::NoGrad() : previous_(g_current_tape) { g_current_tape = nullptr; }
Tape::NoGrad::~NoGrad() { g_current_tape = previous_; }

void Tape::record(std::vector<NodePtr> inputs, NodePtr output, BackwardFn fn) {
  if (consumed_) throw TapeError("tape: cannot record after backward; call reset()");
  output->requires_grad = true;
  output->grad.assign(output->data.size(), 0.0);
  output->tape = this;
  ops_.push_back(Op{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (loss.node()->tape != this) throw TapeError("backward: loss is not connected to this tape");
  if (consumed_) throw TapeError("backward: tape already consumed; call reset() first");
  consumed_ = true;
  loss.node()->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->fn();
}

void Tape::reset() {
  for (auto& op : ops_) {
    if (op.output->tape == this) op.output->tape = nullptr;
  }
  ops_.clear();
  consumed_ = false;
}

void backward(const Tensor& loss) {
  Tape* tape = loss.node()->tape;
  if (tape == nullptr) throw TapeError("backward: loss is detached from any tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Helpers shared by the ops below.

namespace {

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (Tape::current() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_result(Shape shape, std::vector<double> data, const char* op) {
  check_finite(data, op);
  return Tensor(std::move(shape), std::move(data), false);
}

void record(std::initializer_list<const Tensor*> inputs, const Tensor& out, Tape::BackwardFn fn) {
  std::vector<NodePtr> nodes;
  for (const Tensor* t : inputs) nodes.push_back(t->node());
  Tape::current()->record(std::move(nodes), out.node(), std::move(fn));
}

// True when `small`, stripped of leading 1-extents, equals the trailing
// extents of `big`.
bool suffix_compatible(const Shape& big, const Shape& small) {
  auto first = std::find_if(small.begin(), small.end(), [](std::size_t d) { return d != 1; });
  const std::size_t rest = static_cast<std::size_t>(small.end() - first);
  if (rest > big.size()) return false;
  return std::equal(first, small.end(), big.end() - static_cast<std::ptrdiff_t>(rest));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

const char* unary_name(Unary k) {
  switch (k) {
    case Unary::neg: return "neg";
    case Unary::exp: return "exp";
    case Unary::log: return "log";
    case Unary::square: return "square";
    case Unary::relu: return "relu";
    case Unary::softplus: return "softplus";
    case Unary::sqrt: return "sqrt";
    case Unary::lgamma: return "lgamma";
    case Unary::digamma: return "digamma";
  }
  return "unary";
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor elementwise(Binary kind, const Tensor& a, const Tensor& b) {
  Shape out_shape;
  if (a.shape() == b.shape()) {
    out_shape = a.shape();
  } else if (a.numel() >= b.numel() && suffix_compatible(a.shape(), b.shape())) {
    out_shape = a.shape();
  } else if (suffix_compatible(b.shape(), a.shape())) {
    out_shape = b.shape();
  } else {
    throw ShapeError("elementwise: cannot broadcast " + shape_str(a.shape()) + " with " +
                     shape_str(b.shape()));
  }
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const auto& x = a.node()->data;
  const auto& y = b.node()->data;
  std::vector<double> out(n);
  switch (kind) {
    case Binary::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i % na] + y[i % nb];
      break;
    case Binary::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i % na] - y[i % nb];
      break;
    case Binary::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i % na] * y[i % nb];
      break;
    case Binary::div:
      for (std::size_t i = 0; i < nb; ++i) {
        if (y[i] == 0.0) throw DomainError("div: division by zero");
      }
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i % na] / y[i % nb];
      break;
  }
  Tensor result = make_result(std::move(out_shape), std::move(out), "elementwise");
  if (wants_grad({&a, &b})) {
    record({&a, &b}, result, [kind, an = a.node(), bn = b.node(), on = result.node()] {
      const std::size_t n = on->data.size();
      const std::size_t na = an->data.size();
      const std::size_t nb = bn->data.size();
      const auto& g = on->grad;
      const auto& x = an->data;
      const auto& y = bn->data;
      const bool ga = an->requires_grad;
      const bool gb = bn->requires_grad;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = i % na;
        const std::size_t ib = i % nb;
        switch (kind) {
          case Binary::add:
            if (ga) an->grad[ia] += g[i];
            if (gb) bn->grad[ib] += g[i];
            break;
          case Binary::sub:
            if (ga) an->grad[ia] += g[i];
            if (gb) bn->grad[ib] -= g[i];
            break;
          case Binary::mul:
            if (ga) an->grad[ia] += g[i] * y[ib];
            if (gb) bn->grad[ib] += g[i] * x[ia];
            break;
          case Binary::div:
            if (ga) an->grad[ia] += g[i] / y[ib];
            if (gb) bn->grad[ib] -= g[i] * x[ia] / (y[ib] * y[ib]);
            break;
        }
      }
    });
  }
  return result;
}

Tensor elementwise(Unary kind, const Tensor& a) {
  const auto& x = a.node()->data;
  const std::size_t n = x.size();
  std::vector<double> out(n);
  auto require = [&](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string(unary_name(kind)) + ": " + what);
  };
  switch (kind) {
    case Unary::neg:
      for (std::size_t i = 0; i < n; ++i) out[i] = -x[i];
      break;
    case Unary::exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
      break;
    case Unary::log:
      for (std::size_t i = 0; i < n; ++i) {
        require(x[i] > 0.0, "argument must be > 0");
        out[i] = std::log(x[i]);
      }
      break;
    case Unary::square:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * x[i];
      break;
    case Unary::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Unary::softplus:
      for (std::size_t i = 0; i < n; ++i) out[i] = softplus_value(x[i]);
      break;
    case Unary::sqrt:
      for (std::size_t i = 0; i < n; ++i) {
        require(x[i] > 0.0, "argument must be > 0");
        out[i] = std::sqrt(x[i]);
      }
      break;
    case Unary::lgamma:
      for (std::size_t i = 0; i < n; ++i) out[i] = log_gamma(x[i]);
      break;
    case Unary::digamma:
      for (std::size_t i = 0; i < n; ++i) out[i] = digamma(x[i]);
      break;
  }
  Tensor result = make_result(a.shape(), std::move(out), unary_name(kind));
  if (wants_grad({&a})) {
    record({&a}, result, [kind, an = a.node(), on = result.node()] {
      const auto& g = on->grad;
      const auto& x = an->data;
      const auto& y = on->data;
      auto& gx = an->grad;
      const std::size_t n = x.size();
      switch (kind) {
        case Unary::neg:
          for (std::size_t i = 0; i < n; ++i) gx[i] -= g[i];
          break;
        case Unary::exp:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i];
          break;
        case Unary::log:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / x[i];
          break;
        case Unary::square:
          for (std::size_t i = 0; i < n; ++i) gx[i] += 2.0 * g[i] * x[i];
          break;
        case Unary::relu:
          for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > 0.0 ? g[i] : 0.0;
          break;
        case Unary::softplus:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * sigmoid(x[i]);
          break;
        case Unary::sqrt:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * 0.5 / y[i];
          break;
        case Unary::lgamma:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * digamma(x[i]);
          break;
        case Unary::digamma:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * trigamma(x[i]);
          break;
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Binary::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Binary::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Binary::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(Binary::div, a, b); }
Tensor add(const Tensor& a, double s) { return elementwise(Binary::add, a, Tensor::scalar(s)); }
Tensor mul(const Tensor& a, double s) { return elementwise(Binary::mul, a, Tensor::scalar(s)); }
Tensor neg(const Tensor& a) { return elementwise(Unary::neg, a); }
Tensor exp(const Tensor& a) { return elementwise(Unary::exp, a); }
Tensor log(const Tensor& a) { return elementwise(Unary::log, a); }
Tensor square(const Tensor& a) { return elementwise(Unary::square, a); }
Tensor relu(const Tensor& a) { return elementwise(Unary::relu, a); }
Tensor softplus(const Tensor& a) { return elementwise(Unary::softplus, a); }
Tensor sqrt(const Tensor& a) { return elementwise(Unary::sqrt, a); }
Tensor lgamma(const Tensor& a) { return elementwise(Unary::lgamma, a); }
Tensor digamma(const Tensor& a) { return elementwise(Unary::digamma, a); }

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Tensor result(std::move(shape), a.node()->data);
  if (wants_grad({&a})) {
    record({&a}, result, [an = a.node(), on = result.node()] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return result;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 4 || b.ndim() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0);
  const std::size_t ca = a.dim(1);
  const std::size_t cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  std::vector<double> out;
  out.reserve(n * (ca + cb) * plane);
  for (std::size_t s = 0; s < n; ++s) {
    auto ab = a.data().begin() + static_cast<std::ptrdiff_t>(s * ca * plane);
    out.insert(out.end(), ab, ab + static_cast<std::ptrdiff_t>(ca * plane));
    auto bb = b.data().begin() + static_cast<std::ptrdiff_t>(s * cb * plane);
    out.insert(out.end(), bb, bb + static_cast<std::ptrdiff_t>(cb * plane));
  }
  Tensor result(Shape{n, ca + cb, a.dim(2), a.dim(3)}, std::move(out));
  if (wants_grad({&a, &b})) {
    record({&a, &b}, result, [an = a.node(), bn = b.node(), on = result.node(), n, ca, cb, plane] {
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t base = s * (ca + cb) * plane;
        if (an->requires_grad) {
          for (std::size_t i = 0; i < ca * plane; ++i) an->grad[s * ca * plane + i] += on->grad[base + i];
        }
        if (bn->requires_grad) {
          for (std::size_t i = 0; i < cb * plane; ++i) {
            bn->grad[s * cb * plane + i] += on->grad[base + ca * plane + i];
          }
        }
      }
    });
  }
  return result;
}

Tensor gather_columns(const Tensor& a, std::size_t trailing, std::span<const std::size_t> idx) {
  if (trailing > a.ndim()) throw ShapeError("gather_columns: too many trailing axes");
  Shape tail(a.shape().end() - static_cast<std::ptrdiff_t>(trailing), a.shape().end());
  const std::size_t cols = shape_numel(tail);
  const std::size_t rows = a.numel() / cols;
  for (std::size_t c : idx) {
    if (c >= cols) throw ShapeError("gather_columns: index out of range");
  }
  std::vector<double> out(rows * idx.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < idx.size(); ++k) out[r * idx.size() + k] = a[r * cols + idx[k]];
  }
  Tensor result(Shape{rows, idx.size()}, std::move(out));
  if (wants_grad({&a})) {
    std::vector<std::size_t> cols_copy(idx.begin(), idx.end());
    record({&a}, result, [an = a.node(), on = result.node(), rows, cols, sel = std::move(cols_copy)] {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < sel.size(); ++k) an->grad[r * cols + sel[k]] += on->grad[r * sel.size() + k];
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

// Maps each flat input index to its flat output index after removing `axes`.
std::vector<std::size_t> reduction_map(const Shape& shape, const std::vector<std::size_t>& axes,
                                       Shape& out_shape) {
  std::vector<bool> reduced(shape.size(), false);
  for (std::size_t ax : axes) {
    if (ax >= shape.size()) throw ShapeError("reduce: axis out of range for " + shape_str(shape));
    if (reduced[ax]) throw ShapeError("reduce: duplicate axis");
    reduced[ax] = true;
  }
  out_shape.clear();
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (!reduced[d]) out_shape.push_back(shape[d]);
  }
  const std::size_t n = shape_numel(shape);
  if (n == 0) throw ShapeError("reduce: empty reduction");
  // Output stride of every input axis (0 for reduced axes).
  std::vector<std::size_t> ostride(shape.size(), 0);
  std::size_t acc = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    if (!reduced[d]) {
      ostride[d] = acc;
      acc *= shape[d];
    }
  }
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  const std::size_t last = shape.empty() ? 1 : shape.back();
  const std::size_t step = shape.empty() ? 0 : ostride.back();
  std::size_t o = 0;
  for (std::size_t flat = 0; flat < n; flat += last) {
    for (std::size_t k = 0; k < last; ++k) map[flat + k] = o + k * step;
    // Advance the odometer over all but the last axis.
    for (std::size_t d = shape.size() - (shape.empty() ? 0 : 1); d-- > 0;) {
      o += ostride[d];
      if (++idx[d] < shape[d]) break;
      o -= ostride[d] * shape[d];
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor sum(const Tensor& a, std::vector<std::size_t> axes) {
  Shape out_shape;
  auto map = reduction_map(a.shape(), axes, out_shape);
  std::vector<double> out(shape_numel(out_shape), 0.0);
  for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] += a[i];
  Tensor result = make_result(std::move(out_shape), std::move(out), "sum");
  if (wants_grad({&a})) {
    record({&a}, result, [an = a.node(), on = result.node(), map = std::move(map)] {
      for (std::size_t i = 0; i < map.size(); ++i) an->grad[i] += on->grad[map[i]];
    });
  }
  return result;
}

Tensor sum(const Tensor& a) {
  std::vector<std::size_t> axes(a.ndim());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return sum(a, std::move(axes));
}

Tensor mean(const Tensor& a, std::vector<std::size_t> axes) {
  std::size_t count = 1;
  for (std::size_t ax : axes) count *= a.dim(ax);
  return mul(sum(a, std::move(axes)), 1.0 / static_cast<double>(count));
}

Tensor mean(const Tensor& a) { return mul(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor max(const Tensor& a, std::size_t axis) {
  Shape out_shape;
  auto map = reduction_map(a.shape(), {axis}, out_shape);
  const std::size_t m = shape_numel(out_shape);
  std::vector<double> out(m, 0.0);
  std::vector<std::size_t> arg(m, a.numel());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const std::size_t o = map[i];
    if (arg[o] == a.numel() || a[i] > out[o]) {
      out[o] = a[i];
      arg[o] = i;
    }
  }
  Tensor result = make_result(std::move(out_shape), std::move(out), "max");
  if (wants_grad({&a})) {
    record({&a}, result, [an = a.node(), on = result.node(), arg = std::move(arg)] {
      for (std::size_t o = 0; o < arg.size(); ++o) an->grad[arg[o]] += on->grad[o];
    });
  }
  return result;
}

Tensor argmax(const Tensor& a, std::size_t axis) {
  Shape out_shape;
  auto map = reduction_map(a.shape(), {axis}, out_shape);
  const std::size_t m = shape_numel(out_shape);
  std::vector<double> best(m, 0.0);
  std::vector<double> arg(m, -1.0);
  std::vector<std::size_t> count(m, 0);
  // Elements along `axis` arrive in increasing index order per output slot.
  for (std::size_t i = 0; i < map.size(); ++i) {
    const std::size_t o = map[i];
    if (arg[o] < 0.0 || a[i] > best[o]) {
      best[o] = a[i];
      arg[o] = static_cast<double>(count[o]);
    }
    ++count[o];
  }
  return Tensor(std::move(out_shape), std::move(arg));
}

// ---------------------------------------------------------------------------
// Convolution, pooling, upsampling

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
  std::size_t n, c, h, w, f, kh, kw, ho, wo;
  int stride, pad;
};

// Output columns [lo, hi) whose input column ox*stride + j - pad is inside
// the image.
void valid_range(const ConvGeom& g, std::size_t j, std::size_t& lo, std::size_t& hi) {
  const long s = g.stride;
  const long off = static_cast<long>(j) - g.pad;
  long first = off >= 0 ? 0 : (-off + s - 1) / s;
  long last = (static_cast<long>(g.w) - 1 - off) / s + 1;  // exclusive
  if (static_cast<long>(g.w) - 1 - off < 0) last = 0;
  first = std::min<long>(first, static_cast<long>(g.wo));
  last = std::clamp<long>(last, first, static_cast<long>(g.wo));
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(last);
}

void im2col(const double* in, const ConvGeom& g, double* cols) {
  const std::size_t plane = g.ho * g.wo;
  const auto s = static_cast<std::size_t>(g.stride);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((ch * g.kh + i) * g.kw + j) * plane;
        std::size_t lo = 0;
        std::size_t hi = 0;
        valid_range(g, j, lo, hi);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long y = static_cast<long>(oy) * g.stride + static_cast<long>(i) - g.pad;
          double* dst = row + oy * g.wo;
          if (y < 0 || y >= static_cast<long>(g.h)) {
            for (std::size_t ox = 0; ox < g.wo; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = in + (ch * g.h + static_cast<std::size_t>(y)) * g.w;
          for (std::size_t ox = 0; ox < lo; ++ox) dst[ox] = 0.0;
          const long base = static_cast<long>(j) - g.pad;
          if (s == 1) {
            const double* from = src + static_cast<long>(lo) + base;
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = from[ox - lo];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<long>(ox * s) + base];
          }
          for (std::size_t ox = hi; ox < g.wo; ++ox) dst[ox] = 0.0;
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeom& g, double* in_grad) {
  const std::size_t plane = g.ho * g.wo;
  const auto s = static_cast<std::size_t>(g.stride);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((ch * g.kh + i) * g.kw + j) * plane;
        std::size_t lo = 0;
        std::size_t hi = 0;
        valid_range(g, j, lo, hi);
        const long base = static_cast<long>(j) - g.pad;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long y = static_cast<long>(oy) * g.stride + static_cast<long>(i) - g.pad;
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          double* dst = in_grad + (ch * g.h + static_cast<std::size_t>(y)) * g.w;
          const double* src = row + oy * g.wo;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<long>(ox * s) + base] += src[ox];
        }
      }
    }
  }
}

// Stride-1 convolution on a zero-padded grid. With the input padded to
// width wp = w + 2 pad, tap (i, j) of every output reads the contiguous
// window starting at i*wp + j, so the column matrix is built from plain
// block copies. Outputs are computed on an ho x wp grid whose trailing
// wp - wo columns are discarded.
struct PaddedConv {
  ConvGeom g;
  std::size_t wp = 0;
  std::size_t len = 0;     // ho * wp
  std::size_t padded = 0;  // per-channel stride of the padded input

  explicit PaddedConv(const ConvGeom& geom) : g(geom) {
    wp = g.w + 2 * static_cast<std::size_t>(g.pad);
    len = g.ho * wp;
    padded = (g.h + 2 * static_cast<std::size_t>(g.pad)) * wp + g.kw;  // slack for the last tap
  }

  std::size_t ckk() const { return g.c * g.kh * g.kw; }

  void pad_input(const double* in, double* xp) const {
    std::fill(xp, xp + g.c * padded, 0.0);
    const auto p = static_cast<std::size_t>(g.pad);
    for (std::size_t ch = 0; ch < g.c; ++ch) {
      for (std::size_t y = 0; y < g.h; ++y) {
        std::copy_n(in + (ch * g.h + y) * g.w, g.w, xp + ch * padded + (y + p) * wp + p);
      }
    }
  }

  // Column matrix of output positions [q0, q0 + n): rows ordered (c, i, j)
  // to match the kernel's row-major layout, row stride n.
  void columns(const double* xp, std::size_t q0, std::size_t n, double* cols) const {
    for (std::size_t ch = 0; ch < g.c; ++ch) {
      for (std::size_t i = 0; i < g.kh; ++i) {
        for (std::size_t j = 0; j < g.kw; ++j) {
          std::copy_n(xp + ch * padded + i * wp + j + q0, n, cols + ((ch * g.kh + i) * g.kw + j) * n);
        }
      }
    }
  }

  // Output positions are processed in chunks so the column block stays in
  // cache.
  std::size_t chunk() const { return std::max<std::size_t>(64, kChunkDoubles / ckk()); }
  static constexpr std::size_t kChunkDoubles = 1 << 15;

  void forward(const double* xp, const double* kernel, double* out, std::vector<double>& scratch) const {
    const std::size_t k = ckk();
    const std::size_t step = std::min(len, chunk());
    scratch.resize(k * step + g.f * len);
    double* cols = scratch.data();
    double* y = cols + k * step;
    const auto F = static_cast<Eigen::Index>(g.f);
    const auto K = static_cast<Eigen::Index>(k);
    Eigen::Map<const RowMat> wm(kernel, F, K);
    for (std::size_t q0 = 0; q0 < len; q0 += step) {
      const std::size_t n = std::min(step, len - q0);
      columns(xp, q0, n, cols);
      Eigen::Map<RowMat, 0, Eigen::OuterStride<>>(y + q0, F, static_cast<Eigen::Index>(n),
                                                  Eigen::OuterStride<>(static_cast<Eigen::Index>(len)))
          .noalias() = wm * Eigen::Map<const RowMat>(cols, K, static_cast<Eigen::Index>(n));
    }
    for (std::size_t f = 0; f < g.f; ++f) {
      for (std::size_t oy = 0; oy < g.ho; ++oy) std::copy_n(y + f * len + oy * wp, g.wo, out + (f * g.ho + oy) * g.wo);
    }
  }

  // Accumulates into dkernel and din when they are non-null.
  void backward(const double* xp, const double* kernel, const double* gout, double* dkernel, double* din,
                std::vector<double>& scratch) const {
    const std::size_t k = ckk();
    const std::size_t step = std::min(len, chunk());
    scratch.resize(g.f * len + k * step + (din ? g.c * padded : 0));
    double* gy = scratch.data();
    double* work = gy + g.f * len;
    double* dxp = work + k * step;
    for (std::size_t f = 0; f < g.f; ++f) {
      for (std::size_t oy = 0; oy < g.ho; ++oy) {
        double* dst = gy + f * len + oy * wp;
        std::copy_n(gout + (f * g.ho + oy) * g.wo, g.wo, dst);
        std::fill(dst + g.wo, dst + wp, 0.0);
      }
    }
    if (din) std::fill(dxp, dxp + g.c * padded, 0.0);
    const auto F = static_cast<Eigen::Index>(g.f);
    const auto K = static_cast<Eigen::Index>(k);
    Eigen::Map<const RowMat> wm(kernel, F, K);
    for (std::size_t q0 = 0; q0 < len; q0 += step) {
      const std::size_t n = std::min(step, len - q0);
      const auto N = static_cast<Eigen::Index>(n);
      Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> gm(gy + q0, F, N,
                                                           Eigen::OuterStride<>(static_cast<Eigen::Index>(len)));
      Eigen::Map<RowMat> wk(work, K, N);
      if (dkernel) {
        columns(xp, q0, n, work);
        Eigen::Map<RowMat>(dkernel, F, K).noalias() += gm * wk.transpose();
      }
      if (!din) continue;
      wk.noalias() = wm.transpose() * gm;
      for (std::size_t ch = 0; ch < g.c; ++ch) {
        for (std::size_t i = 0; i < g.kh; ++i) {
          for (std::size_t j = 0; j < g.kw; ++j) {
            const double* src = work + ((ch * g.kh + i) * g.kw + j) * n;
            double* dst = dxp + ch * padded + i * wp + j + q0;
            for (std::size_t q = 0; q < n; ++q) dst[q] += src[q];
          }
        }
      }
    }
    if (!din) return;
    const auto p = static_cast<std::size_t>(g.pad);
    for (std::size_t ch = 0; ch < g.c; ++ch) {
      for (std::size_t y = 0; y < g.h; ++y) {
        const double* src = dxp + ch * padded + (y + p) * wp + p;
        double* dst = din + (ch * g.h + y) * g.w;
        for (std::size_t x = 0; x < g.w; ++x) dst[x] += src[x];
      }
    }
  }
};

// Reused across calls on one thread; conv scratch never outlives a call.
std::vector<double>& conv_scratch() {
  thread_local std::vector<double> buf;
  return buf;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  if (input.ndim() != 4 || kernel.ndim() != 4 || input.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv2d: input " + shape_str(input.shape()) + " incompatible with kernel " +
                     shape_str(kernel.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  ConvGeom g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.f = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  const long span_h = static_cast<long>(g.h) + 2 * padding - static_cast<long>(g.kh);
  const long span_w = static_cast<long>(g.w) + 2 * padding - static_cast<long>(g.kw);
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
    throw ShapeError("conv2d: non-integral output extent for input " + shape_str(input.shape()));
  }
  g.ho = static_cast<std::size_t>(span_h / stride) + 1;
  g.wo = static_cast<std::size_t>(span_w / stride) + 1;

  const bool track = wants_grad({&input, &kernel});
  if (stride == 1) {
    const PaddedConv tc(g);
    std::shared_ptr<double[]> xp(new double[g.n * g.c * tc.padded]);
    std::vector<double> out(g.n * g.f * g.ho * g.wo);
    for (std::size_t s = 0; s < g.n; ++s) {
      double* x = xp.get() + s * g.c * tc.padded;
      tc.pad_input(input.data().data() + s * g.c * g.h * g.w, x);
      tc.forward(x, kernel.data().data(), out.data() + s * g.f * g.ho * g.wo, conv_scratch());
    }
    Tensor result = make_result(Shape{g.n, g.f, g.ho, g.wo}, std::move(out), "conv2d");
    if (track) {
      record({&input, &kernel}, result, [in = input.node(), kn = kernel.node(), on = result.node(), tc, xp] {
        const auto& g = tc.g;
        for (std::size_t s = 0; s < g.n; ++s) {
          tc.backward(xp.get() + s * g.c * tc.padded, kn->data.data(), on->grad.data() + s * g.f * g.ho * g.wo,
                      kn->requires_grad ? kn->grad.data() : nullptr,
                      in->requires_grad ? in->grad.data() + s * g.c * g.h * g.w : nullptr, conv_scratch());
        }
      });
    }
    return result;
  }

  const std::size_t ckk = g.c * g.kh * g.kw;
  const std::size_t plane = g.ho * g.wo;
  // Scratch buffers are fully overwritten, so they skip zero-initialization.
  std::shared_ptr<double[]> cols(new double[g.n * ckk * plane]);
  std::vector<double> out(g.n * g.f * plane);
  Eigen::Map<const RowMat> km(kernel.data().data(), static_cast<Eigen::Index>(g.f),
                              static_cast<Eigen::Index>(ckk));
  for (std::size_t s = 0; s < g.n; ++s) {
    double* col = cols.get() + s * ckk * plane;
    im2col(input.data().data() + s * g.c * g.h * g.w, g, col);
    Eigen::Map<const RowMat> cm(col, static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(plane));
    Eigen::Map<RowMat> om(out.data() + s * g.f * plane, static_cast<Eigen::Index>(g.f),
                          static_cast<Eigen::Index>(plane));
    om.noalias() = km * cm;
  }
  Tensor result = make_result(Shape{g.n, g.f, g.ho, g.wo}, std::move(out), "conv2d");
  if (track) {
    record({&input, &kernel}, result, [in = input.node(), kn = kernel.node(), on = result.node(), g, cols] {
      const std::size_t ckk = g.c * g.kh * g.kw;
      const std::size_t plane = g.ho * g.wo;
      const auto F = static_cast<Eigen::Index>(g.f);
      const auto CKK = static_cast<Eigen::Index>(ckk);
      const auto P = static_cast<Eigen::Index>(plane);
      std::unique_ptr<double[]> dcol(new double[in->requires_grad ? ckk * plane : 0]);
      for (std::size_t s = 0; s < g.n; ++s) {
        Eigen::Map<const RowMat> gm(on->grad.data() + s * g.f * plane, F, P);
        Eigen::Map<const RowMat> cm(cols.get() + s * ckk * plane, CKK, P);
        if (kn->requires_grad) {
          Eigen::Map<RowMat> dk(kn->grad.data(), F, CKK);
          dk.noalias() += gm * cm.transpose();
        }
        if (in->requires_grad) {
          Eigen::Map<const RowMat> km(kn->data.data(), F, CKK);
          Eigen::Map<RowMat> dc(dcol.get(), CKK, P);
          dc.noalias() = km.transpose() * gm;
          col2im(dcol.get(), g, in->grad.data() + s * g.c * g.h * g.w);
        }
      }
    });
  }
  return result;
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias, bool fuse_relu) {
  if (input.ndim() != 4 || bias.ndim() != 1 || bias.dim(0) != input.dim(1)) {
    throw ShapeError("add_channel_bias: input " + shape_str(input.shape()) + " with bias " +
                     shape_str(bias.shape()));
  }
  const std::size_t n = input.dim(0);
  const std::size_t c = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  std::vector<double> out(input.data().begin(), input.data().end());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = out.data() + (s * c + ch) * plane;
      const double b = bias[ch];
      if (fuse_relu) {
        for (std::size_t i = 0; i < plane; ++i) p[i] = std::max(p[i] + b, 0.0);
      } else {
        for (std::size_t i = 0; i < plane; ++i) p[i] += b;
      }
    }
  }
  Tensor result = make_result(input.shape(), std::move(out), "add_channel_bias");
  if (wants_grad({&input, &bias})) {
    record({&input, &bias}, result, [in = input.node(), bn = bias.node(), on = result.node(), n, c, plane, fuse_relu] {
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (s * c + ch) * plane;
          const double* g = on->grad.data() + base;
          const double* y = on->data.data() + base;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const double gi = (!fuse_relu || y[i] > 0.0) ? g[i] : 0.0;
            if (in->requires_grad) in->grad[base + i] += gi;
            acc += gi;
          }
          if (bn->requires_grad) bn->grad[ch] += acc;
        }
      }
    });
  }
  return result;
}

Tensor maxpool2(const Tensor& input) {
  if (input.ndim() < 2) throw ShapeError("maxpool2: need at least 2 axes");
  const std::size_t h = input.dim(input.ndim() - 2);
  const std::size_t w = input.dim(input.ndim() - 1);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2: spatial extents must be even, got " + shape_str(input.shape()));
  }
  const std::size_t planes = input.numel() / (h * w);
  const std::size_t ho = h / 2;
  const std::size_t wo = w / 2;
  Shape out_shape = input.shape();
  out_shape[out_shape.size() - 2] = ho;
  out_shape[out_shape.size() - 1] = wo;
  std::vector<double> out(planes * ho * wo);
  std::vector<std::size_t> arg(out.size());
  const auto& x = input.node()->data;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t base = p * h * w + 2 * oy * w + 2 * ox;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (x[cand[k]] > x[best]) best = cand[k];
        }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = x[best];
        arg[o] = best;
      }
    }
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (wants_grad({&input})) {
    record({&input}, result, [in = input.node(), on = result.node(), arg = std::move(arg)] {
      for (std::size_t o = 0; o < arg.size(); ++o) in->grad[arg[o]] += on->grad[o];
    });
  }
  return result;
}

Tensor nearest_upsample2(const Tensor& input) {
  if (input.ndim() < 2) throw ShapeError("nearest_upsample2: need at least 2 axes");
  const std::size_t h = input.dim(input.ndim() - 2);
  const std::size_t w = input.dim(input.ndim() - 1);
  const std::size_t planes = input.numel() / (h * w);
  Shape out_shape = input.shape();
  out_shape[out_shape.size() - 2] = 2 * h;
  out_shape[out_shape.size() - 1] = 2 * w;
  std::vector<double> out(planes * 4 * h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t x = 0; x < 2 * w; ++x) {
        out[(p * 2 * h + y) * 2 * w + x] = input[(p * h + y / 2) * w + x / 2];
      }
    }
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (wants_grad({&input})) {
    record({&input}, result, [in = input.node(), on = result.node(), planes, h, w] {
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
          for (std::size_t x = 0; x < 2 * w; ++x) {
            in->grad[(p * h + y / 2) * w + x / 2] += on->grad[(p * 2 * h + y) * 2 * w + x];
          }
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Dropout

Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training) return input;
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(input.numel());
  for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : scale;
  std::vector<double> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] * mask[i];
  Tensor result(input.shape(), std::move(out));
  if (wants_grad({&input})) {
    record({&input}, result, [in = input.node(), on = result.node(), mask = std::move(mask)] {
      for (std::size_t i = 0; i < mask.size(); ++i) in->grad[i] += on->grad[i] * mask[i];
    });
  }
  return result;
}

}  // namespace duedl
