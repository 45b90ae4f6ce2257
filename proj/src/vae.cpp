#include <cmath>
#include <stdexcept>
#include <string>

#include "sdsf/diffusion.hpp"

namespace sdsf {

namespace {

constexpr std::size_t kVaeWidth = 8;
constexpr std::size_t kVaeLatent = 4;

// channel-extension recipe: the grown 4th slot starts as the mean of the
// first three along `axis` of the kernel
void average_into_fourth(Tensor& W, bool input_axis) {
  auto w = W.value_mut();
  const std::size_t co = W.dim(0), ci = W.dim(1), kk = W.dim(2) * W.dim(3);
  if (input_axis) {
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t k = 0; k < kk; ++k) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += w[(o * ci + c) * kk + k];
        w[(o * ci + 3) * kk + k] = s / 3.0;
      }
  } else {
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t k = 0; k < kk; ++k) {
        double s = 0.0;
        for (std::size_t o = 0; o < 3; ++o) s += w[(o * ci + c) * kk + k];
        w[(3 * ci + c) * kk + k] = s / 3.0;
      }
  }
}

}  // namespace

TinyVAE TinyVAE::create(Rng& rng, double kl_weight) {
  TinyVAE v;
  v.kl_weight = kl_weight;
  v.e1 = Conv2dLayer::create(4, kVaeWidth, 3, 2, rng);
  v.e2 = Conv2dLayer::create(kVaeWidth, kVaeWidth, 3, 1, rng);
  v.e3 = Conv2dLayer::create(kVaeWidth, 2 * kVaeLatent, 1, 1, rng);
  v.d1 = Conv2dLayer::create(kVaeLatent, kVaeWidth, 3, 1, rng);
  v.d2 = Conv2dLayer::create(kVaeWidth, kVaeWidth, 3, 1, rng);
  v.d3 = Conv2dLayer::create(kVaeWidth, 4, 3, 1, rng);
  average_into_fourth(v.e1.W, true);
  average_into_fourth(v.d3.W, false);
  return v;
}

std::pair<Tensor, Tensor> TinyVAE::encode(const Tensor& x) const {
  if (!x.defined() || x.rank() != 4 || x.dim(1) != 4)
    throw std::invalid_argument("TinyVAE: input must be [N,4,H,W]");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw std::invalid_argument("TinyVAE: spatial size must be even");
  Tensor h = relu(e1.forward(x));
  h = relu(e2.forward(h));
  Tensor p = e3.forward(h);
  Tensor mu = slice(p, 1, 0, kVaeLatent);
  // keep the posterior variance in a sane range during training
  Tensor logvar = clamp(slice(p, 1, kVaeLatent, 2 * kVaeLatent), -12.0, 12.0);
  return {mu, logvar};
}

Tensor TinyVAE::decode(const Tensor& z) const {
  if (!z.defined() || z.rank() != 4 || z.dim(1) != kVaeLatent)
    throw std::invalid_argument("TinyVAE: latent must be [N,4,h,w]");
  Tensor h = relu(d1.forward(z));
  h = resize_nearest(h, z.dim(2) * 2, z.dim(3) * 2);
  h = relu(d2.forward(h));
  return d3.forward(h);
}

void TinyVAE::params(ParamMap& pm) const {
  e1.params(pm, "e1");
  e2.params(pm, "e2");
  e3.params(pm, "e3");
  d1.params(pm, "d1");
  d2.params(pm, "d2");
  d3.params(pm, "d3");
}

Tensor vae_kl(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape())
    throw std::invalid_argument("vae_kl: shape mismatch");
  const double n = static_cast<double>(mu.rank() > 0 ? mu.dim(0) : 1);
  Tensor t = sub(add(add(mul(mu, mu), texp(logvar)), -1.0), logvar);
  return mul(sum(t), 0.5 / n);
}

VaeRoundtrip vae_roundtrip(const TinyVAE& vae, const Tensor& x, Rng& rng) {
  Graph::NoGrad ng;
  auto [mu, logvar] = vae.encode(x);
  Tensor eps = Tensor::randn(mu.shape(), rng);
  Tensor z = add(mu, mul(texp(mul(logvar, 0.5)), eps));
  VaeRoundtrip out;
  out.recon = vae.decode(z);
  out.kl = vae_kl(mu, logvar).item();
  Tensor d = sub(out.recon, x);
  out.mse = mean(mul(d, d)).item();
  return out;
}

std::vector<double> train_vae(TinyVAE& vae, std::span<const Tensor> images, std::size_t steps,
                              double lr, Rng& rng) {
  if (images.empty()) throw std::invalid_argument("train_vae: no images");
  std::vector<Tensor> parts;
  for (const Tensor& im : images) {
    if (im.rank() != 3 || im.dim(0) != 4)
      throw std::invalid_argument("train_vae: images must be [4,H,W]");
    parts.push_back(reshape(im, {1, im.dim(0), im.dim(1), im.dim(2)}));
  }

  ParamMap pm;
  vae.params(pm);
  Adam opt(pm.tensors(), lr);
  std::vector<double> history;
  history.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    Graph::active().clear();
    Tensor x = concat(parts, 0);
    auto [mu, logvar] = vae.encode(x);
    Tensor eps = Tensor::randn(mu.shape(), rng);
    Tensor z = add(mu, mul(texp(mul(logvar, 0.5)), eps));
    Tensor recon = vae.decode(z);
    Tensor d = sub(recon, x);
    Tensor loss = add(mean(mul(d, d)), mul(vae_kl(mu, logvar), vae.kl_weight));
    const double lv = loss.item();
    if (!std::isfinite(lv))
      throw std::runtime_error("train_vae: non-finite loss at step " + std::to_string(step));
    history.push_back(lv);
    opt.zero_grad();
    backward(loss);
    opt.step();
  }
  Graph::active().clear();
  return history;
}

}  // namespace sdsf
