#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdsf/rng.hpp"

namespace sdsf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Dense f64 tensor with shared storage. Copying a Tensor aliases the same
// buffer; ops always allocate fresh outputs.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->value.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  bool requires_grad() const { return impl_->requires_grad; }

  std::span<const double> value() const { return impl_->value; }
  std::span<double> value_mut() { return impl_->value; }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> grad_mut() {
    impl_->ensure_grad();
    return impl_->grad;
  }

  double item() const;
  double at(std::size_t flat) const { return impl_->value[flat]; }

  void set_requires_grad(bool v) {
    impl_->requires_grad = v;
    if (v) impl_->ensure_grad();
  }
  void zero_grad() {
    impl_->ensure_grad();
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  // Same values, cut off from the recorded graph.
  Tensor detach() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor wrap_impl(std::shared_ptr<TensorImpl>);
};

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl);

struct GraphNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  std::function<void()> backward;
  const char* op = "";
};

// Per-thread dynamic tape. Ops append nodes while recording is on; backward()
// replays the relevant slice in reverse.
class Graph {
public:
  static Graph& active();

  bool recording() const { return pause_depth_ == 0; }
  void record(GraphNode node) { nodes_.push_back(std::move(node)); }
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }

  class NoGrad {
  public:
    NoGrad() { ++active().pause_depth_; }
    ~NoGrad() { --active().pause_depth_; }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;
  };

private:
  std::vector<GraphNode> nodes_;
  int pause_depth_ = 0;
};

// Reverse-mode sweep from a scalar root. Grads of interior nodes are reset
// each call; leaf grads accumulate until zero_grad().
void backward(const Tensor& root);

// Elementwise / broadcast binary ops. Broadcasting covers equal shapes,
// scalar-vs-tensor, and a tensor whose shape is a trailing suffix of the
// other's (e.g. [B,C] op [C]). Anything else throws with both shapes named.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(double a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor texp(const Tensor& x);
Tensor tlog(const Tensor& x);
Tensor tsqrt(const Tensor& x);
Tensor tpow(const Tensor& x, double p);
Tensor ttanh(const Tensor& x);
Tensor tsin(const Tensor& x);
Tensor tcos(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor max_all(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor transpose2d(const Tensor& x);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

// L2 normalization of each vector along `axis`, smoothed near zero:
// y = x / sqrt(sum(x^2) + eps^2).
Tensor normalize_axis(const Tensor& x, std::size_t axis, double eps = 1e-12);

// Adds b[r] to the r-th contiguous block of x, where x splits into
// b.numel() equal blocks (e.g. per-(batch,channel) bias on [N,C,H,W]
// with b of length N*C).
Tensor add_rows(const Tensor& x, const Tensor& b);

// Same block scheme, multiplying instead: per-block gain.
Tensor mul_rows(const Tensor& x, const Tensor& s);

// Gathers rows of a [R, M] table into [idx.size(), M]; gradients
// scatter-add back into the table.
Tensor take_rows(const Tensor& table, const std::vector<std::size_t>& idx);

// conv2d on NCHW, odd square kernels, stride 1 or 2, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);

// Resampling on NCHW (rank 4) or CHW (rank 3). Bilinear uses half-pixel
// centers with edge clamping.
Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::size_t skipped_kinks = 0;
  double max_rel_err = 0.0;
  std::vector<std::size_t> failing;
  bool ok() const { return checked > 0 && passed == checked; }
};

// Central-difference check of d(f)/d(x) against the recorded graph.
// Coordinates where the one-sided differences disagree (nondifferentiable
// kinks, e.g. relu at 0) are excluded rather than failed.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double fd_eps = 1e-5, double tol = 1e-3);

}  // namespace sdsf
