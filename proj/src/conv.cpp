#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "op_common.hpp"
#include "sdsf/tensor.hpp"
#include "sdsf/threads.hpp"

namespace sdsf {

using detail::record;

namespace {

struct ConvDims {
  std::size_t N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument("conv2d: need NCHW input and OIHW weights, got " +
                                shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
  ConvDims d;
  d.N = x.dim(0);
  d.Ci = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.Ci)
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(w.shape()));
  if (d.H + 2 * pad < d.kh || d.W + 2 * pad < d.kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
  return d;
}

// out[n,co] += w[co,ci,ky,kx] * x[n,ci, oh*s+ky-p, ow*s+kx-p]
void conv_forward(const ConvDims& d, const double* xv, const double* wv, const double* bv,
                  double* ov) {
  const std::size_t plane_in = d.H * d.W;
  const std::size_t plane_out = d.Ho * d.Wo;
  parallel_for(d.N * d.Co, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t nc = b0; nc < b1; ++nc) {
      const std::size_t n = nc / d.Co;
      const std::size_t co = nc % d.Co;
      double* out = ov + nc * plane_out;
      const double bias = bv ? bv[co] : 0.0;
      std::fill(out, out + plane_out, bias);
      for (std::size_t ci = 0; ci < d.Ci; ++ci) {
        const double* xp = xv + (n * d.Ci + ci) * plane_in;
        const double* wp = wv + (co * d.Ci + ci) * d.kh * d.kw;
        for (std::size_t ky = 0; ky < d.kh; ++ky)
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const double wgt = wp[ky * d.kw + kx];
            if (wgt == 0.0) continue;
            const long dy = static_cast<long>(ky) - static_cast<long>(d.pad);
            const long dx = static_cast<long>(kx) - static_cast<long>(d.pad);
            for (std::size_t oh = 0; oh < d.Ho; ++oh) {
              const long ih = static_cast<long>(oh * d.stride) + dy;
              if (ih < 0 || ih >= static_cast<long>(d.H)) continue;
              const double* xrow = xp + static_cast<std::size_t>(ih) * d.W;
              double* orow = out + oh * d.Wo;
              std::size_t lo = 0, hi = d.Wo;
              if (dx < 0) lo = (static_cast<std::size_t>(-dx) + d.stride - 1) / d.stride;
              while (hi > lo && static_cast<long>((hi - 1) * d.stride) + dx >= static_cast<long>(d.W)) --hi;
              if (d.stride == 1) {
                const double* xs = xrow + dx + static_cast<long>(lo);
                for (std::size_t ow = lo; ow < hi; ++ow) orow[ow] += wgt * xs[ow - lo];
              } else {
                for (std::size_t ow = lo; ow < hi; ++ow)
                  orow[ow] += wgt * xrow[static_cast<long>(ow * d.stride) + dx];
              }
            }
          }
      }
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != d.Co))
    throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape()) + " for " +
                                std::to_string(d.Co) + " output channels");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = {d.N, d.Co, d.Ho, d.Wo};
  impl->value.resize(d.N * d.Co * d.Ho * d.Wo);
  Tensor out = wrap_impl(impl);
  conv_forward(d, x.value().data(), w.value().data(), b.defined() ? b.value().data() : nullptr,
               out.value_mut().data());

  const bool rec = Graph::active().recording() &&
                   (x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad()));
  if (!rec) return out;
  out.set_requires_grad(true);
  GraphNode node;
  node.op = "conv2d";
  node.inputs = {x.impl(), w.impl()};
  if (b.defined()) node.inputs.push_back(b.impl());
  node.output = out.impl();
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.defined() ? b.impl() : nullptr;
  auto oi = out.impl();
  node.backward = [xi, wi, bi, oi, d] {
    const double* g = oi->grad.data();
    const std::size_t plane_in = d.H * d.W;
    const std::size_t plane_out = d.Ho * d.Wo;
    if (bi && bi->requires_grad) {
      bi->ensure_grad();
      for (std::size_t n = 0; n < d.N; ++n)
        for (std::size_t co = 0; co < d.Co; ++co) {
          const double* gp = g + (n * d.Co + co) * plane_out;
          double s = 0.0;
          for (std::size_t i = 0; i < plane_out; ++i) s += gp[i];
          bi->grad[co] += s;
        }
    }
    if (wi->requires_grad) {
      wi->ensure_grad();
      const double* xv = xi->value.data();
      parallel_for(d.Co * d.Ci, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t cc = b0; cc < b1; ++cc) {
          const std::size_t co = cc / d.Ci;
          const std::size_t ci = cc % d.Ci;
          double* gw = wi->grad.data() + cc * d.kh * d.kw;
          for (std::size_t ky = 0; ky < d.kh; ++ky)
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              const long dy = static_cast<long>(ky) - static_cast<long>(d.pad);
              const long dx = static_cast<long>(kx) - static_cast<long>(d.pad);
              double acc = 0.0;
              for (std::size_t n = 0; n < d.N; ++n) {
                const double* xp = xv + (n * d.Ci + ci) * plane_in;
                const double* gp = g + (n * d.Co + co) * plane_out;
                for (std::size_t oh = 0; oh < d.Ho; ++oh) {
                  const long ih = static_cast<long>(oh * d.stride) + dy;
                  if (ih < 0 || ih >= static_cast<long>(d.H)) continue;
                  const double* xrow = xp + static_cast<std::size_t>(ih) * d.W;
                  const double* grow = gp + oh * d.Wo;
                  std::size_t lo = 0, hi = d.Wo;
                  if (dx < 0) lo = (static_cast<std::size_t>(-dx) + d.stride - 1) / d.stride;
                  while (hi > lo &&
                         static_cast<long>((hi - 1) * d.stride) + dx >= static_cast<long>(d.W))
                    --hi;
                  for (std::size_t ow = lo; ow < hi; ++ow)
                    acc += grow[ow] * xrow[static_cast<long>(ow * d.stride) + dx];
                }
              }
              gw[ky * d.kw + kx] += acc;
            }
        }
      });
    }
    if (xi->requires_grad) {
      xi->ensure_grad();
      const double* wv = wi->value.data();
      parallel_for(d.N, [&](std::size_t n0, std::size_t n1) {
        for (std::size_t n = n0; n < n1; ++n)
          for (std::size_t ci = 0; ci < d.Ci; ++ci) {
            double* gx = xi->grad.data() + (n * d.Ci + ci) * plane_in;
            for (std::size_t co = 0; co < d.Co; ++co) {
              const double* gp = g + (n * d.Co + co) * plane_out;
              const double* wp = wv + (co * d.Ci + ci) * d.kh * d.kw;
              for (std::size_t ky = 0; ky < d.kh; ++ky)
                for (std::size_t kx = 0; kx < d.kw; ++kx) {
                  const double wgt = wp[ky * d.kw + kx];
                  if (wgt == 0.0) continue;
                  const long dy = static_cast<long>(ky) - static_cast<long>(d.pad);
                  const long dx = static_cast<long>(kx) - static_cast<long>(d.pad);
                  for (std::size_t oh = 0; oh < d.Ho; ++oh) {
                    const long ih = static_cast<long>(oh * d.stride) + dy;
                    if (ih < 0 || ih >= static_cast<long>(d.H)) continue;
                    double* gxr = gx + static_cast<std::size_t>(ih) * d.W;
                    const double* grow = gp + oh * d.Wo;
                    std::size_t lo = 0, hi = d.Wo;
                    if (dx < 0) lo = (static_cast<std::size_t>(-dx) + d.stride - 1) / d.stride;
                    while (hi > lo &&
                           static_cast<long>((hi - 1) * d.stride) + dx >= static_cast<long>(d.W))
                      --hi;
                    if (d.stride == 1) {
                      double* gxs = gxr + dx + static_cast<long>(lo);
                      for (std::size_t ow = lo; ow < hi; ++ow) gxs[ow - lo] += wgt * grow[ow];
                    } else {
                      for (std::size_t ow = lo; ow < hi; ++ow)
                        gxr[static_cast<long>(ow * d.stride) + dx] += wgt * grow[ow];
                    }
                  }
                }
            }
          }
      });
    }
  };
  Graph::active().record(std::move(node));
  return out;
}

// ---- resize ----

namespace {
struct ImgDims {
  std::size_t N, C, H, W;
  Shape out_shape(std::size_t oh, std::size_t ow, bool had_batch) const {
    if (had_batch) return {N, C, oh, ow};
    return {C, oh, ow};
  }
};
ImgDims img_dims(const Tensor& x, const char* op) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  throw std::invalid_argument(std::string(op) + ": need CHW or NCHW, got " +
                              shape_str(x.shape()));
}
}  // namespace

Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const ImgDims d = img_dims(x, "resize_nearest");
  const bool had_batch = x.rank() == 4;
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = d.out_shape(out_h, out_w, had_batch);
  impl->value.resize(d.N * d.C * out_h * out_w);
  Tensor out = wrap_impl(impl);
  std::vector<std::size_t> src_y(out_h), src_x(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy)
    src_y[oy] = std::min<std::size_t>(d.H - 1, static_cast<std::size_t>(
        (static_cast<double>(oy) + 0.5) * static_cast<double>(d.H) / static_cast<double>(out_h)));
  for (std::size_t ox = 0; ox < out_w; ++ox)
    src_x[ox] = std::min<std::size_t>(d.W - 1, static_cast<std::size_t>(
        (static_cast<double>(ox) + 0.5) * static_cast<double>(d.W) / static_cast<double>(out_w)));
  const double* xv = x.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t p = 0; p < d.N * d.C; ++p) {
    const double* xp = xv + p * d.H * d.W;
    double* op_ = ov + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) op_[oy * out_w + ox] = xp[src_y[oy] * d.W + src_x[ox]];
  }
  record("resize_nearest", {&x}, out,
         [xi = x.impl(), oi = out.impl(), d, src_y, src_x, out_h, out_w] {
           if (!xi->requires_grad) return;
           xi->ensure_grad();
           const double* g = oi->grad.data();
           for (std::size_t p = 0; p < d.N * d.C; ++p) {
             double* gx = xi->grad.data() + p * d.H * d.W;
             const double* gp = g + p * out_h * out_w;
             for (std::size_t oy = 0; oy < out_h; ++oy)
               for (std::size_t ox = 0; ox < out_w; ++ox)
                 gx[src_y[oy] * d.W + src_x[ox]] += gp[oy * out_w + ox];
           }
         });
  return out;
}

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const ImgDims d = img_dims(x, "resize_bilinear");
  const bool had_batch = x.rank() == 4;
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = d.out_shape(out_h, out_w, had_batch);
  impl->value.resize(d.N * d.C * out_h * out_w);
  Tensor out = wrap_impl(impl);

  struct Tap {
    std::size_t i0, i1;
    double w0, w1;
  };
  auto taps = [](std::size_t in_n, std::size_t out_n) {
    std::vector<Tap> t(out_n);
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::max(0.0, std::min(src, static_cast<double>(in_n - 1)));
      const std::size_t i0 = static_cast<std::size_t>(src);
      const std::size_t i1 = std::min(i0 + 1, in_n - 1);
      const double f = src - static_cast<double>(i0);
      t[o] = {i0, i1, 1.0 - f, f};
    }
    return t;
  };
  const auto ty = taps(d.H, out_h);
  const auto tx = taps(d.W, out_w);
  const double* xv = x.value().data();
  double* ov = out.value_mut().data();
  for (std::size_t p = 0; p < d.N * d.C; ++p) {
    const double* xp = xv + p * d.H * d.W;
    double* op_ = ov + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[ox];
        op_[oy * out_w + ox] = a.w0 * (b.w0 * xp[a.i0 * d.W + b.i0] + b.w1 * xp[a.i0 * d.W + b.i1]) +
                               a.w1 * (b.w0 * xp[a.i1 * d.W + b.i0] + b.w1 * xp[a.i1 * d.W + b.i1]);
      }
    }
  }
  record("resize_bilinear", {&x}, out, [xi = x.impl(), oi = out.impl(), d, ty, tx, out_h, out_w] {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    const double* g = oi->grad.data();
    for (std::size_t p = 0; p < d.N * d.C; ++p) {
      double* gx = xi->grad.data() + p * d.H * d.W;
      const double* gp = g + p * out_h * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[oy];
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const Tap& b = tx[ox];
          const double gv = gp[oy * out_w + ox];
          gx[a.i0 * d.W + b.i0] += gv * a.w0 * b.w0;
          gx[a.i0 * d.W + b.i1] += gv * a.w0 * b.w1;
          gx[a.i1 * d.W + b.i0] += gv * a.w1 * b.w0;
          gx[a.i1 * d.W + b.i1] += gv * a.w1 * b.w1;
        }
      }
    }
  });
  return out;
}

}  // namespace sdsf
