#include "gvqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace gvqa {

int numel_of(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

[[noreturn]] void shape_fail(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

void check(bool ok, const std::string& op, const std::string& detail) {
  if (!ok) shape_fail(op, detail);
}

}  // namespace

Tensor make_out(Shape s, bool rg) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(s);
  impl->data.assign(static_cast<size_t>(numel_of(impl->shape)), 0.0);
  impl->requires_grad = rg;
  if (rg) impl->grad.assign(impl->data.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape s, bool requires_grad) { return make_out(std::move(s), requires_grad); }

Tensor Tensor::full(Shape s, double v, bool requires_grad) {
  Tensor t = make_out(std::move(s), requires_grad);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), v);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1}, v, requires_grad); }

Tensor Tensor::from(Shape s, std::vector<double> v, bool requires_grad) {
  check(numel_of(s) == static_cast<int>(v.size()), "Tensor::from",
        "value count " + std::to_string(v.size()) + " does not fill shape " + shape_str(s));
  Tensor t = make_out(std::move(s), requires_grad);
  t.impl_->data = std::move(v);
  return t;
}

double Tensor::item() const {
  check(numel() == 1, "Tensor::item", "tensor of shape " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on && impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  if (!on) impl_->grad.clear();
}

void Tensor::zero_grad() {
  if (impl_ && impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// ----- tape -----

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1)
    throw std::logic_error("Tape::backward: root has shape " + shape_str(root.shape()) +
                           ", expected a scalar");
  if (!root.requires_grad())
    throw std::logic_error("Tape::backward: root does not require gradients; "
                           "nothing was recorded for it");
  root.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ----- op plumbing -----

namespace {

bool grad_wanted(std::initializer_list<const Tensor*> ins) {
  if (!Tape::active()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

using ImplPtr = std::shared_ptr<TensorImpl>;

// Unary elementwise out = f(x) with df supplied the (x, y) pair.
template <typename F, typename DF>
Tensor unary_elem(const char* /*name*/, const Tensor& x, F f, DF df) {
  const bool rg = grad_wanted({&x});
  Tensor out = make_out(x.shape(), rg);
  const int n = x.numel();
  const double* xd = x.data();
  double* od = out.data();
  for (int i = 0; i < n; ++i) od[i] = f(xd[i]);
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi, df] {
      if (!xi->requires_grad) return;
      const size_t n = oi->data.size();
      for (size_t i = 0; i < n; ++i) xi->grad[i] += oi->grad[i] * df(xi->data[i], oi->data[i]);
    });
  }
  return out;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), op,
        "operand shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
}

}  // namespace

// ----- elementwise / arithmetic -----

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const bool rg = grad_wanted({&a, &b});
  Tensor out = make_out(a.shape(), rg);
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([ai, bi, oi] {
      const size_t n = oi->data.size();
      if (ai->requires_grad)
        for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const bool rg = grad_wanted({&a, &b});
  Tensor out = make_out(a.shape(), rg);
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([ai, bi, oi] {
      const size_t n = oi->data.size();
      if (ai->requires_grad)
        for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < n; ++i) bi->grad[i] -= oi->grad[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const bool rg = grad_wanted({&a, &b});
  Tensor out = make_out(a.shape(), rg);
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([ai, bi, oi] {
      const size_t n = oi->data.size();
      if (ai->requires_grad)
        for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * bi->data[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i] * ai->data[i];
    });
  }
  return out;
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  check(s.numel() == 1, "div_scalar", "divisor has shape " + shape_str(s.shape()) +
                                          ", expected a scalar");
  const bool rg = grad_wanted({&a, &s});
  Tensor out = make_out(a.shape(), rg);
  const int n = a.numel();
  const double sv = s.value_at(0);
  for (int i = 0; i < n; ++i) out.data()[i] = a.data()[i] / sv;
  if (rg) {
    ImplPtr ai = a.impl(), si = s.impl(), oi = out.impl();
    Tape::active()->record([ai, si, oi] {
      const size_t n = oi->data.size();
      const double sv = si->data[0];
      if (ai->requires_grad)
        for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] / sv;
      if (si->requires_grad) {
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) acc += oi->grad[i] * ai->data[i];
        si->grad[0] -= acc / (sv * sv);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, const Tensor& s) {
  check(s.numel() == 1, "scale", "factor has shape " + shape_str(s.shape()) +
                                     ", expected a scalar");
  const bool rg = grad_wanted({&x, &s});
  Tensor out = make_out(x.shape(), rg);
  const int n = x.numel();
  const double sv = s.value_at(0);
  for (int i = 0; i < n; ++i) out.data()[i] = x.data()[i] * sv;
  if (rg) {
    ImplPtr xi = x.impl(), si = s.impl(), oi = out.impl();
    Tape::active()->record([xi, si, oi] {
      const size_t n = oi->data.size();
      const double sv = si->data[0];
      if (xi->requires_grad)
        for (size_t i = 0; i < n; ++i) xi->grad[i] += oi->grad[i] * sv;
      if (si->requires_grad) {
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) acc += oi->grad[i] * xi->data[i];
        si->grad[0] += acc;
      }
    });
  }
  return out;
}

Tensor scale_const(const Tensor& x, double c) {
  return unary_elem("scale_const", x, [c](double v) { return v * c; },
                    [c](double, double) { return c; });
}

Tensor add_const(const Tensor& x, double c) {
  return unary_elem("add_const", x, [c](double v) { return v + c; },
                    [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) {
  return unary_elem("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& x) {
  return unary_elem("abs", x, [](double v) { return std::abs(v); },
                    [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
  return unary_elem("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                    [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elem("sigmoid", x,
                    [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary_elem("exp", x, [](double v) { return std::exp(v); },
                    [](double, double y) { return y; });
}

Tensor log_clamped(const Tensor& x) {
  constexpr double kFloor = 1e-6;
  return unary_elem("log_clamped", x,
                    [](double v) { return std::log(v < kFloor ? kFloor : v); },
                    [](double v, double) { return v < kFloor ? 0.0 : 1.0 / v; });
}

Tensor min_elem(const Tensor& a, const Tensor& b) {
  require_same_shape("min_elem", a, b);
  const bool rg = grad_wanted({&a, &b});
  Tensor out = make_out(a.shape(), rg);
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.data()[i] = std::min(a.data()[i], b.data()[i]);
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([ai, bi, oi] {
      const size_t n = oi->data.size();
      for (size_t i = 0; i < n; ++i) {
        // Tie goes to the first operand.
        if (ai->data[i] <= bi->data[i]) {
          if (ai->requires_grad) ai->grad[i] += oi->grad[i];
        } else if (bi->requires_grad) {
          bi->grad[i] += oi->grad[i];
        }
      }
    });
  }
  return out;
}

Tensor max_elem(const Tensor& a, const Tensor& b) {
  require_same_shape("max_elem", a, b);
  const bool rg = grad_wanted({&a, &b});
  Tensor out = make_out(a.shape(), rg);
  const int n = a.numel();
  for (int i = 0; i < n; ++i) out.data()[i] = std::max(a.data()[i], b.data()[i]);
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([ai, bi, oi] {
      const size_t n = oi->data.size();
      for (size_t i = 0; i < n; ++i) {
        if (ai->data[i] >= bi->data[i]) {
          if (ai->requires_grad) ai->grad[i] += oi->grad[i];
        } else if (bi->requires_grad) {
          bi->grad[i] += oi->grad[i];
        }
      }
    });
  }
  return out;
}

namespace {

Tensor extremum_reduce(const char* op, const Tensor& x, bool is_min) {
  check(x.numel() > 0, op, "cannot reduce an empty tensor");
  const bool rg = grad_wanted({&x});
  Tensor out = make_out({1}, rg);
  const int n = x.numel();
  int arg = 0;
  double best = x.data()[0];
  for (int i = 1; i < n; ++i) {
    const double v = x.data()[i];
    if (is_min ? v < best : v > best) {
      best = v;
      arg = i;
    }
  }
  out.data()[0] = best;
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi, arg] {
      if (xi->requires_grad) xi->grad[static_cast<size_t>(arg)] += oi->grad[0];
    });
  }
  return out;
}

}  // namespace

Tensor min_reduce(const Tensor& x) { return extremum_reduce("min_reduce", x, true); }
Tensor max_reduce(const Tensor& x) { return extremum_reduce("max_reduce", x, false); }

// ----- reductions / shape -----

Tensor sum(const Tensor& x) {
  const bool rg = grad_wanted({&x});
  Tensor out = make_out({1}, rg);
  double acc = 0.0;
  const int n = x.numel();
  for (int i = 0; i < n; ++i) acc += x.data()[i];
  out.data()[0] = acc;
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi] {
      if (!xi->requires_grad) return;
      const double g = oi->grad[0];
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  check(x.numel() > 0, "mean", "cannot average an empty tensor");
  return scale_const(sum(x), 1.0 / x.numel());
}

Tensor mean_spatial(const Tensor& x) {
  check(x.rank() == 3, "mean_spatial",
        "input has shape " + shape_str(x.shape()) + ", expected [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const bool rg = grad_wanted({&x});
  Tensor out = make_out({c}, rg);
  const double inv = 1.0 / (h * w);
  for (int p = 0; p < h * w; ++p)
    for (int ch = 0; ch < c; ++ch) out.data()[ch] += x.data()[p * c + ch];
  for (int ch = 0; ch < c; ++ch) out.data()[ch] *= inv;
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi, h, w, c, inv] {
      if (!xi->requires_grad) return;
      for (int p = 0; p < h * w; ++p)
        for (int ch = 0; ch < c; ++ch)
          xi->grad[static_cast<size_t>(p * c + ch)] += oi->grad[static_cast<size_t>(ch)] * inv;
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape s) {
  check(numel_of(s) == x.numel(), "reshape",
        "cannot view " + shape_str(x.shape()) + " as " + shape_str(s));
  const bool rg = grad_wanted({&x});
  Tensor out = make_out(std::move(s), rg);
  std::memcpy(out.data(), x.data(), sizeof(double) * static_cast<size_t>(x.numel()));
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi] {
      if (!xi->requires_grad) return;
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  check(x.rank() == 2, "transpose",
        "input has shape " + shape_str(x.shape()) + ", expected a matrix");
  const int m = x.dim(0), n = x.dim(1);
  const bool rg = grad_wanted({&x});
  Tensor out = make_out({n, m}, rg);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data()[j * m + i] = x.data()[i * n + j];
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi, m, n] {
      if (!xi->requires_grad) return;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          xi->grad[static_cast<size_t>(i * n + j)] += oi->grad[static_cast<size_t>(j * m + i)];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  check(!xs.empty(), "concat", "no inputs");
  const int rank = xs[0].rank();
  check(axis >= 0 && axis < rank, "concat",
        "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  Shape out_shape = xs[0].shape();
  int axis_total = 0;
  for (const Tensor& t : xs) {
    check(t.rank() == rank, "concat", "inputs of rank " + std::to_string(rank) + " and " +
                                          std::to_string(t.rank()) + " cannot be joined");
    for (int d = 0; d < rank; ++d)
      if (d != axis)
        check(t.dim(d) == out_shape[static_cast<size_t>(d)], "concat",
              "input shape " + shape_str(t.shape()) + " mismatches " +
                  shape_str(xs[0].shape()) + " off axis " + std::to_string(axis));
    axis_total += t.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;

  bool rg = false;
  if (Tape::active())
    for (const Tensor& t : xs)
      if (t.requires_grad()) rg = true;
  Tensor out = make_out(out_shape, rg);

  int outer = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
  int inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<size_t>(d)];
  const int out_stride = axis_total * inner;

  int offset = 0;  // in axis units
  std::vector<ImplPtr> impls;
  std::vector<int> offsets;
  for (const Tensor& t : xs) {
    const int ax = t.dim(axis);
    for (int o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * out_stride + offset * inner, t.data() + o * ax * inner,
                  sizeof(double) * static_cast<size_t>(ax * inner));
    impls.push_back(t.impl());
    offsets.push_back(offset);
    offset += ax;
  }

  if (rg) {
    ImplPtr oi = out.impl();
    Tape::active()->record([impls, offsets, oi, outer, inner, out_stride, axis] {
      for (size_t idx = 0; idx < impls.size(); ++idx) {
        const ImplPtr& xi = impls[idx];
        if (!xi->requires_grad) continue;
        const int ax = xi->shape[static_cast<size_t>(axis)];
        const int off = offsets[idx];
        for (int o = 0; o < outer; ++o) {
          const double* src = oi->grad.data() + o * out_stride + off * inner;
          double* dst = xi->grad.data() + o * ax * inner;
          for (int i = 0; i < ax * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor select_row(const Tensor& x, int row) {
  check(x.rank() == 2, "select_row",
        "input has shape " + shape_str(x.shape()) + ", expected a matrix");
  check(row >= 0 && row < x.dim(0), "select_row",
        "row " + std::to_string(row) + " out of range for " + shape_str(x.shape()));
  const int n = x.dim(1);
  const bool rg = grad_wanted({&x});
  Tensor out = make_out({n}, rg);
  std::memcpy(out.data(), x.data() + row * n, sizeof(double) * static_cast<size_t>(n));
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi, row, n] {
      if (!xi->requires_grad) return;
      for (int j = 0; j < n; ++j)
        xi->grad[static_cast<size_t>(row * n + j)] += oi->grad[static_cast<size_t>(j)];
    });
  }
  return out;
}

// ----- linear algebra -----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul",
        "operands " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
            " are not both matrices");
  check(a.dim(1) == b.dim(0), "matmul",
        "inner dimensions of " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
            " do not agree");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool rg = grad_wanted({&a, &b});
  Tensor out = make_out({m, n}, rg);
  const double* ad = a.data();
  const double* bd = b.data();
  double* od = out.data();
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const double av = ad[i * k + kk];
      const double* brow = bd + kk * n;
      double* orow = od + i * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([ai, bi, oi, m, k, n] {
      const double* go = oi->grad.data();
      if (ai->requires_grad) {
        double* ga = ai->grad.data();
        const double* bd = bi->data.data();
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* grow = go + i * n;
            const double* brow = bd + kk * n;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + kk] += acc;
          }
      }
      if (bi->requires_grad) {
        double* gb = bi->grad.data();
        const double* ad = ai->data.data();
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            const double* grow = go + i * n;
            double* gbrow = gb + kk * n;
            for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
      }
    });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check(a.rank() == 1 && b.rank() == 1, "dot",
        "operands " + shape_str(a.shape()) + " . " + shape_str(b.shape()) +
            " are not both vectors");
  require_same_shape("dot", a, b);
  const bool rg = grad_wanted({&a, &b});
  Tensor out = make_out({1}, rg);
  double acc = 0.0;
  const int n = a.numel();
  for (int i = 0; i < n; ++i) acc += a.data()[i] * b.data()[i];
  out.data()[0] = acc;
  if (rg) {
    ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([ai, bi, oi] {
      const double g = oi->grad[0];
      const size_t n = ai->data.size();
      if (ai->requires_grad)
        for (size_t i = 0; i < n; ++i) ai->grad[i] += g * bi->data[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < n; ++i) bi->grad[i] += g * ai->data[i];
    });
  }
  return out;
}

Tensor softmax_cols(const Tensor& x) {
  check(x.rank() == 2, "softmax_cols",
        "input has shape " + shape_str(x.shape()) + ", expected a matrix");
  const int m = x.dim(0), n = x.dim(1);
  const bool rg = grad_wanted({&x});
  Tensor out = make_out({m, n}, rg);
  for (int j = 0; j < n; ++j) {
    double mx = x.data()[j];
    for (int i = 1; i < m; ++i) mx = std::max(mx, x.data()[i * n + j]);
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
      const double e = std::exp(x.data()[i * n + j] - mx);
      out.data()[i * n + j] = e;
      z += e;
    }
    for (int i = 0; i < m; ++i) out.data()[i * n + j] /= z;
  }
  if (rg) {
    ImplPtr xi = x.impl(), oi = out.impl();
    Tape::active()->record([xi, oi, m, n] {
      if (!xi->requires_grad) return;
      for (int j = 0; j < n; ++j) {
        double inner = 0.0;
        for (int i = 0; i < m; ++i)
          inner += oi->grad[static_cast<size_t>(i * n + j)] * oi->data[static_cast<size_t>(i * n + j)];
        for (int i = 0; i < m; ++i) {
          const size_t idx = static_cast<size_t>(i * n + j);
          xi->grad[idx] += oi->data[idx] * (oi->grad[idx] - inner);
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
  check(x.rank() == 3, "conv2d", "input has shape " + shape_str(x.shape()) + ", expected [H,W,Cin]");
  check(k.rank() == 4, "conv2d",
        "kernel has shape " + shape_str(k.shape()) + ", expected [kh,kw,Cin,Cout]");
  const int h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  const int kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
  check(kh % 2 == 1 && kw % 2 == 1, "conv2d",
        "kernel " + shape_str(k.shape()) + " must have odd spatial extent");
  check(k.dim(2) == ci, "conv2d", "kernel " + shape_str(k.shape()) +
                                      " does not accept input channels of " + shape_str(x.shape()));
  check(b.rank() == 1 && b.dim(0) == co, "conv2d",
        "bias " + shape_str(b.shape()) + " does not match kernel " + shape_str(k.shape()));
  const int ph = kh / 2, pw = kw / 2;
  const bool rg = grad_wanted({&x, &k, &b});
  Tensor out = make_out({h, w, co}, rg);
  const double* xd = x.data();
  const double* kd = k.data();
  double* od = out.data();
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      double* ocell = od + (y * w + xx) * co;
      for (int c = 0; c < co; ++c) ocell[c] = b.data()[c];
      for (int dy = 0; dy < kh; ++dy) {
        const int sy = y + dy - ph;
        if (sy < 0 || sy >= h) continue;
        for (int dx = 0; dx < kw; ++dx) {
          const int sx = xx + dx - pw;
          if (sx < 0 || sx >= w) continue;
          const double* xcell = xd + (sy * w + sx) * ci;
          const double* ktap = kd + ((dy * kw + dx) * ci) * co;
          for (int c = 0; c < ci; ++c) {
            const double xv = xcell[c];
            const double* krow = ktap + c * co;
            for (int o = 0; o < co; ++o) ocell[o] += xv * krow[o];
          }
        }
      }
    }
  if (rg) {
    ImplPtr xi = x.impl(), ki = k.impl(), bi = b.impl(), oi = out.impl();
    Tape::active()->record([xi, ki, bi, oi, h, w, ci, kh, kw, co, ph, pw] {
      const double* go = oi->grad.data();
      const double* kd = ki->data.data();
      const double* xd = xi->data.data();
      const bool gx = xi->requires_grad, gk = ki->requires_grad, gb = bi->requires_grad;
      if (gb) {
        double* bg = bi->grad.data();
        for (int p = 0; p < h * w; ++p)
          for (int o = 0; o < co; ++o) bg[o] += go[p * co + o];
      }
      if (!gx && !gk) return;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double* gcell = go + (y * w + xx) * co;
          for (int dy = 0; dy < kh; ++dy) {
            const int sy = y + dy - ph;
            if (sy < 0 || sy >= h) continue;
            for (int dx = 0; dx < kw; ++dx) {
              const int sx = xx + dx - pw;
              if (sx < 0 || sx >= w) continue;
              const int cell = (sy * w + sx) * ci;
              const int tap = ((dy * kw + dx) * ci) * co;
              if (gx) {
                double* xg = xi->grad.data() + cell;
                for (int c = 0; c < ci; ++c) {
                  const double* krow = kd + tap + c * co;
                  double acc = 0.0;
                  for (int o = 0; o < co; ++o) acc += gcell[o] * krow[o];
                  xg[c] += acc;
                }
              }
              if (gk) {
                double* kg = ki->grad.data() + tap;
                const double* xcell = xd + cell;
                for (int c = 0; c < ci; ++c) {
                  const double xv = xcell[c];
                  double* krow = kg + c * co;
                  for (int o = 0; o < co; ++o) krow[o] += xv * gcell[o];
                }
              }
            }
          }
        }
    });
  }
  return out;
}

Tensor pair_concat(const Tensor& v) {
  check(v.rank() == 2, "pair_concat",
        "input has shape " + shape_str(v.shape()) + ", expected [n,c]");
  const int n = v.dim(0), c = v.dim(1);
  const bool rg = grad_wanted({&v});
  Tensor out = make_out({n * n, 2 * c}, rg);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double* row = out.data() + (i * n + j) * 2 * c;
      std::memcpy(row, v.data() + i * c, sizeof(double) * static_cast<size_t>(c));
      std::memcpy(row + c, v.data() + j * c, sizeof(double) * static_cast<size_t>(c));
    }
  if (rg) {
    ImplPtr vi = v.impl(), oi = out.impl();
    Tape::active()->record([vi, oi, n, c] {
      if (!vi->requires_grad) return;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double* row = oi->grad.data() + (i * n + j) * 2 * c;
          double* gi = vi->grad.data() + i * c;
          double* gj = vi->grad.data() + j * c;
          for (int t = 0; t < c; ++t) gi[t] += row[t];
          for (int t = 0; t < c; ++t) gj[t] += row[c + t];
        }
    });
  }
  return out;
}

std::vector<double> finite_difference(const std::function<double()>& f, Tensor x, double step) {
  std::vector<double> out(static_cast<size_t>(x.numel()));
  for (int i = 0; i < x.numel(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + step;
    const double hi = f();
    x.data()[i] = saved - step;
    const double lo = f();
    x.data()[i] = saved;
    out[static_cast<size_t>(i)] = (hi - lo) / (2.0 * step);
  }
  return out;
}

}  // namespace gvqa
