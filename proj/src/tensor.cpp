#include "sdsf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "op_common.hpp"
#include "sdsf/threads.hpp"

namespace sdsf {

using detail::fresh_out;
using detail::record;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

static Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(data);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->ensure_grad();
  return wrap_impl(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return make_tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), fill);
  return make_tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (data.size() != shape_numel(shape))
    throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                " values for shape " + shape_str(shape));
  return make_tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal() * stddev;
  return make_tensor(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item: tensor has shape " + shape_str(shape()));
  return impl_->value[0];
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->value = impl_->value;
  impl->requires_grad = false;
  return wrap_impl(std::move(impl));
}

Graph& Graph::active() {
  thread_local Graph g;
  return g;
}

// ---- op plumbing ----

namespace {

// Broadcast plan: `big` gives the output shape; `small` is indexed modulo its
// own length (valid for scalars and trailing-suffix shapes).
struct Bcast {
  Shape out_shape;
  bool a_is_small = false;
  std::size_t small_n = 0;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i)
    if (small[i] != big[off + i]) return false;
  return true;
}

Bcast plan_bcast(const char* op, const Tensor& a, const Tensor& b) {
  Bcast p;
  if (a.shape() == b.shape()) {
    p.out_shape = a.shape();
    p.small_n = a.numel();
    return p;
  }
  if (a.numel() == b.numel() &&
      (is_suffix(b.shape(), a.shape()) || is_suffix(a.shape(), b.shape()))) {
    // Same data layout, one side padded with leading 1-dims.
    p.out_shape = a.rank() >= b.rank() ? a.shape() : b.shape();
    p.small_n = a.numel();
    return p;
  }
  if (b.numel() == 1 || (a.numel() > b.numel() && is_suffix(b.shape(), a.shape()))) {
    p.out_shape = a.shape();
    p.small_n = b.numel();
    p.a_is_small = false;
    return p;
  }
  if (a.numel() == 1 || (b.numel() > a.numel() && is_suffix(a.shape(), b.shape()))) {
    p.out_shape = b.shape();
    p.small_n = a.numel();
    p.a_is_small = true;
    return p;
  }
  throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) +
                              " with " + shape_str(b.shape()));
}

template <class Fwd, class BwdA, class BwdB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, BwdA dfa, BwdB dfb) {
  Bcast p = plan_bcast(name, a, b);
  Tensor out = fresh_out(p.out_shape);
  const std::size_t n = out.numel();
  const std::size_t sn = p.small_n;
  const double* av = a.value().data();
  const double* bv = b.value().data();
  double* ov = out.value_mut().data();
  if (p.a_is_small) {
    for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i % sn], bv[i]);
  } else if (sn == n) {
    for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i % sn]);
  }
  record(name, {&a, &b}, out,
         [ai = a.impl(), bi = b.impl(), oi = out.impl(), p, dfa, dfb] {
           const std::size_t n = oi->value.size();
           const std::size_t sn = p.small_n;
           const double* g = oi->grad.data();
           const double* av = ai->value.data();
           const double* bv = bi->value.data();
           const bool as = p.a_is_small;
           if (ai->requires_grad) {
             ai->ensure_grad();
             double* ga = ai->grad.data();
             for (std::size_t i = 0; i < n; ++i) {
               const std::size_t ia = as ? i % sn : i;
               const std::size_t ib = as ? i : (sn == n ? i : i % sn);
               ga[ia] += g[i] * dfa(av[ia], bv[ib]);
             }
           }
           if (bi->requires_grad) {
             bi->ensure_grad();
             double* gb = bi->grad.data();
             for (std::size_t i = 0; i < n; ++i) {
               const std::size_t ia = as ? i % sn : i;
               const std::size_t ib = as ? i : (sn == n ? i : i % sn);
               gb[ib] += g[i] * dfb(av[ia], bv[ib]);
             }
           }
         });
  return out;
}

template <class Fwd, class Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd dfx) {
  Tensor out = fresh_out(x.shape());
  const std::size_t n = x.numel();
  const double* xv = x.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  record(name, {&x}, out, [xi = x.impl(), oi = out.impl(), dfx] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const std::size_t n = oi->value.size();
    const double* g = oi->grad.data();
    const double* xv = xi->value.data();
    const double* yv = oi->value.data();
    double* gx = xi->grad.data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * dfx(xv[i], yv[i]);
  });
  return out;
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor div(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor texp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor tlog(const Tensor& x) {
  for (double v : x.value())
    if (v <= 0.0) throw std::domain_error("log: input " + std::to_string(v) + " <= 0");
  return unary_op(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor tsqrt(const Tensor& x) {
  for (double v : x.value())
    if (v < 0.0) throw std::domain_error("sqrt: input " + std::to_string(v) + " < 0");
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor tpow(const Tensor& x, double p) {
  if (p != std::floor(p))
    for (double v : x.value())
      if (v < 0.0) throw std::domain_error("pow: negative base with fractional exponent");
  return unary_op(
      "pow", x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return p * std::pow(v, p - 1.0); });
}

Tensor ttanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor tsin(const Tensor& x) {
  return unary_op(
      "sin", x, [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

Tensor tcos(const Tensor& x) {
  return unary_op(
      "cos", x, [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x,
      [](double v) {
        if (v > 30.0) return v;
        if (v < -30.0) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary_op(
      "clamp", x,
      [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  Tensor out = Tensor::scalar(s);
  record("sum", {&x}, out, [xi = x.impl(), oi = out.impl()] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const double g = oi->grad[0];
    for (auto& gv : xi->grad) gv += g;
  });
  return out;
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.value()) s += v;
  Tensor out = Tensor::scalar(s * inv);
  record("mean", {&x}, out, [xi = x.impl(), oi = out.impl(), inv] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const double g = oi->grad[0] * inv;
    for (auto& gv : xi->grad) gv += g;
  });
  return out;
}

namespace {
// Folds shape around `axis` into [outer, n, inner].
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " +
                                shape_str(s));
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}
Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  if (out.empty()) out.push_back(1);
  return out;
}
}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const AxisSplit a = split_axis(x.shape(), axis);
  Tensor out = fresh_out(drop_axis(x.shape(), axis));
  const double* xv = x.value().data();
  double* ov = out.value_mut().data();
  std::fill(ov, ov + out.numel(), 0.0);
  for (std::size_t o = 0; o < a.outer; ++o)
    for (std::size_t k = 0; k < a.n; ++k) {
      const double* src = xv + (o * a.n + k) * a.inner;
      double* dst = ov + o * a.inner;
      for (std::size_t i = 0; i < a.inner; ++i) dst[i] += src[i];
    }
  record("sum_axis", {&x}, out, [xi = x.impl(), oi = out.impl(), a] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const double* g = oi->grad.data();
    double* gx = xi->grad.data();
    for (std::size_t o = 0; o < a.outer; ++o)
      for (std::size_t k = 0; k < a.n; ++k) {
        const double* src = g + o * a.inner;
        double* dst = gx + (o * a.n + k) * a.inner;
        for (std::size_t i = 0; i < a.inner; ++i) dst[i] += src[i];
      }
  });
  return out;
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const double inv = 1.0 / static_cast<double>(x.shape()[axis]);
  return mul(sum_axis(x, axis), inv);
}

Tensor max_all(const Tensor& x) {
  const auto v = x.value();
  std::size_t arg = 0;
  double best = v[0];
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > best) {
      best = v[i];
      arg = i;
    }
  Tensor out = Tensor::scalar(best);
  record("max", {&x}, out, [xi = x.impl(), oi = out.impl(), arg] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    xi->grad[arg] += oi->grad[0];
  });
  return out;
}

// ---- matmul ----

namespace {
void mm(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
        std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(C, C + m * n, 0.0);
  parallel_for(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* a = A + i * k;
      double* c = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p];
        const double* b = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  });
}
// C[m,n] = A[m,k] * B[n,k]^T
void mm_bt(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate) {
  parallel_for(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* a = A + i * k;
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* b = B + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
        c[j] = accumulate ? c[j] + s : s;
      }
    }
  });
}
// C[k,n] += A[m,k]^T * G[m,n]
void mm_at(const double* A, const double* G, double* C, std::size_t m, std::size_t k,
           std::size_t n) {
  parallel_for(k, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) {
      double* c = C + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = A[i * k + p];
        const double* g = G + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * g[j];
      }
    }
  });
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0)
    throw std::invalid_argument("matmul: ranks must be 1 or 2, got " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const std::size_t m = a_vec ? 1 : a.dim(0);
  const std::size_t k = a_vec ? a.dim(0) : a.dim(1);
  const std::size_t k2 = b_vec ? b.dim(0) : b.dim(0);
  const std::size_t n = b_vec ? 1 : b.dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  Shape out_shape;
  if (!a_vec) out_shape.push_back(m);
  if (!b_vec) out_shape.push_back(n);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out = fresh_out(out_shape);
  mm(a.value().data(), b.value().data(), out.value_mut().data(), m, k, n, false);
  record("matmul", {&a, &b}, out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n] {
    const double* g = oi->grad.data();
    if (ai->requires_grad) {
      ai->ensure_grad();
      mm_bt(g, bi->value.data(), ai->grad.data(), m, n, k, true);
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      mm_at(ai->value.data(), g, bi->grad.data(), m, k, n);
    }
  });
  return out;
}

// ---- shape ops ----

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  Tensor out = fresh_out(shape);
  std::memcpy(out.value_mut().data(), x.value().data(), x.numel() * sizeof(double));
  record("reshape", {&x}, out, [xi = x.impl(), oi = out.impl()] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const std::size_t n = oi->grad.size();
    for (std::size_t i = 0; i < n; ++i) xi->grad[i] += oi->grad[i];
  });
  return out;
}

namespace {
std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}
}  // namespace

Tensor transpose(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  if (perm.size() != s.size()) throw std::invalid_argument("transpose: perm rank mismatch");
  std::vector<char> seen(s.size(), 0);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= s.size() || seen[perm[i]]) throw std::invalid_argument("transpose: bad perm");
    seen[perm[i]] = 1;
    out_shape[i] = s[perm[i]];
  }
  Tensor out = fresh_out(out_shape);
  const auto in_st = strides_of(s);
  const auto out_st = strides_of(out_shape);
  const std::size_t n = x.numel();
  const std::size_t r = s.size();
  // out index -> in index mapping, reused by the backward pass
  auto map_index = [r, out_shape, out_st, in_st, perm](std::size_t oi) {
    std::size_t ii = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::size_t c = (oi / out_st[d]) % out_shape[d];
      ii += c * in_st[perm[d]];
    }
    return ii;
  };
  const double* xv = x.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[map_index(i)];
  record("transpose", {&x}, out, [xi = x.impl(), oi = out.impl(), map_index, n] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) xi->grad[map_index(i)] += oi->grad[i];
  });
  return out;
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose2d: need rank 2");
  return transpose(x, {1, 0});
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  Shape out_shape = s0;
  AxisSplit base = split_axis(s0, axis);
  std::size_t total = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != s0[d])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(s) + " vs " +
                                    shape_str(s0));
    total += s[axis];
  }
  out_shape[axis] = total;
  Tensor out = fresh_out(out_shape);
  double* ov = out.value_mut().data();
  const std::size_t inner = base.inner;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const std::size_t tn = t.shape()[axis];
    const double* tv = t.value().data();
    for (std::size_t o = 0; o < base.outer; ++o)
      std::memcpy(ov + (o * total + off) * inner, tv + o * tn * inner,
                  tn * inner * sizeof(double));
    off += tn;
  }
  bool any = false;
  for (const auto& t : xs) any = any || t.requires_grad();
  if (Graph::active().recording() && any) {
    out.set_requires_grad(true);
    GraphNode node;
    node.op = "concat";
    for (const auto& t : xs) node.inputs.push_back(t.impl());
    node.output = out.impl();
    std::vector<std::shared_ptr<TensorImpl>> impls = node.inputs;
    node.backward = [impls, oi = out.impl(), base, total, offsets, axis] {
      const double* g = oi->grad.data();
      for (std::size_t idx = 0; idx < impls.size(); ++idx) {
        auto& ti = impls[idx];
        if (!ti->requires_grad) continue;
        ti->ensure_grad();
        const std::size_t tn = ti->shape[axis];
        for (std::size_t o = 0; o < base.outer; ++o) {
          const double* src = g + (o * total + offsets[idx]) * base.inner;
          double* dst = ti->grad.data() + o * tn * base.inner;
          for (std::size_t i = 0; i < tn * base.inner; ++i) dst[i] += src[i];
        }
      }
    };
    Graph::active().record(std::move(node));
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit a = split_axis(x.shape(), axis);
  if (begin > end || end > a.n)
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") out of bounds for axis size " +
                                std::to_string(a.n));
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  Tensor out = fresh_out(out_shape);
  const std::size_t w = end - begin;
  const double* xv = x.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t o = 0; o < a.outer; ++o)
    std::memcpy(ov + o * w * a.inner, xv + (o * a.n + begin) * a.inner,
                w * a.inner * sizeof(double));
  record("slice", {&x}, out, [xi = x.impl(), oi = out.impl(), a, begin, w] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const double* g = oi->grad.data();
    for (std::size_t o = 0; o < a.outer; ++o) {
      const double* src = g + o * w * a.inner;
      double* dst = xi->grad.data() + (o * a.n + begin) * a.inner;
      for (std::size_t i = 0; i < w * a.inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

Tensor normalize_axis(const Tensor& x, std::size_t axis, double eps) {
  const AxisSplit a = split_axis(x.shape(), axis);
  Tensor out = fresh_out(x.shape());
  const double* xv = x.value().data();
  double* ov = out.value_mut().data();
  const double e2 = eps * eps;
  for (std::size_t o = 0; o < a.outer; ++o)
    for (std::size_t i = 0; i < a.inner; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.n; ++k) {
        const double v = xv[(o * a.n + k) * a.inner + i];
        s += v * v;
      }
      const double inv = 1.0 / std::sqrt(s + e2);
      for (std::size_t k = 0; k < a.n; ++k) {
        const std::size_t idx = (o * a.n + k) * a.inner + i;
        ov[idx] = xv[idx] * inv;
      }
    }
  record("normalize", {&x}, out, [xi = x.impl(), oi = out.impl(), a, e2] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const double* g = oi->grad.data();
    const double* xv = xi->value.data();
    double* gx = xi->grad.data();
    for (std::size_t o = 0; o < a.outer; ++o)
      for (std::size_t i = 0; i < a.inner; ++i) {
        double s = 0.0, gdotx = 0.0;
        for (std::size_t k = 0; k < a.n; ++k) {
          const std::size_t idx = (o * a.n + k) * a.inner + i;
          s += xv[idx] * xv[idx];
          gdotx += g[idx] * xv[idx];
        }
        const double inv = 1.0 / std::sqrt(s + e2);
        const double inv3 = inv * inv * inv;
        for (std::size_t k = 0; k < a.n; ++k) {
          const std::size_t idx = (o * a.n + k) * a.inner + i;
          gx[idx] += g[idx] * inv - xv[idx] * gdotx * inv3;
        }
      }
  });
  return out;
}

Tensor add_rows(const Tensor& x, const Tensor& b) {
  const std::size_t rows = b.numel();
  if (rows == 0 || x.numel() % rows != 0)
    throw std::invalid_argument("add_rows: " + std::to_string(rows) + " blocks cannot split " +
                                shape_str(x.shape()));
  const std::size_t m = x.numel() / rows;
  Tensor out = fresh_out(x.shape());
  const double* xv = x.value().data();
  const double* bv = b.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < m; ++i) ov[r * m + i] = xv[r * m + i] + bv[r];
  record("add_rows", {&x, &b}, out, [xi = x.impl(), bi = b.impl(), oi = out.impl(), rows, m] {
    const double* g = oi->grad.data();
    if (xi->requires_grad) {
      xi->ensure_grad();
      double* gx = xi->grad.data();
      for (std::size_t i = 0; i < rows * m; ++i) gx[i] += g[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      double* gb = bi->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += g[r * m + i];
        gb[r] += s;
      }
    }
  });
  return out;
}

Tensor mul_rows(const Tensor& x, const Tensor& s) {
  const std::size_t rows = s.numel();
  if (rows == 0 || x.numel() % rows != 0)
    throw std::invalid_argument("mul_rows: " + std::to_string(rows) + " blocks cannot split " +
                                shape_str(x.shape()));
  const std::size_t m = x.numel() / rows;
  Tensor out = fresh_out(x.shape());
  const double* xv = x.value().data();
  const double* sv = s.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < m; ++i) ov[r * m + i] = xv[r * m + i] * sv[r];
  record("mul_rows", {&x, &s}, out, [xi = x.impl(), si = s.impl(), oi = out.impl(), rows, m] {
    const double* g = oi->grad.data();
    if (xi->requires_grad) {
      xi->ensure_grad();
      double* gx = xi->grad.data();
      const double* sv2 = si->value.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < m; ++i) gx[r * m + i] += g[r * m + i] * sv2[r];
    }
    if (si->requires_grad) {
      si->ensure_grad();
      double* gs = si->grad.data();
      const double* xv2 = xi->value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += g[r * m + i] * xv2[r * m + i];
        gs[r] += acc;
      }
    }
  });
  return out;
}

Tensor take_rows(const Tensor& table, const std::vector<std::size_t>& idx) {
  if (table.rank() != 2)
    throw std::invalid_argument("take_rows: table must be rank 2, got " +
                                shape_str(table.shape()));
  const std::size_t rows = table.dim(0);
  const std::size_t m = table.dim(1);
  for (std::size_t i : idx)
    if (i >= rows)
      throw std::invalid_argument("take_rows: index " + std::to_string(i) + " out of " +
                                  std::to_string(rows));
  Tensor out = fresh_out({idx.size(), m});
  const double* tv = table.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t n = 0; n < idx.size(); ++n)
    std::memcpy(ov + n * m, tv + idx[n] * m, m * sizeof(double));
  record("take_rows", {&table}, out, [ti = table.impl(), oi = out.impl(), idx, m] {
    if (!ti->requires_grad) return;
    ti->ensure_grad();
    const double* g = oi->grad.data();
    double* gt = ti->grad.data();
    for (std::size_t n = 0; n < idx.size(); ++n)
      for (std::size_t i = 0; i < m; ++i) gt[idx[n] * m + i] += g[n * m + i];
  });
  return out;
}

}  // namespace sdsf
