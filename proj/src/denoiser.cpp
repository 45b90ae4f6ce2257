#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sdsf/diffusion.hpp"
#include "sdsf/tensor_io.hpp"

namespace sdsf {

namespace {

Conv2dLayer zero_conv(std::size_t ci, std::size_t co, std::size_t k) {
  Conv2dLayer c;
  c.W = Tensor::zeros({co, ci, k, k}, true);
  c.b = Tensor::zeros({co}, true);
  c.stride = 1;
  c.pad = k / 2;
  return c;
}

}  // namespace

DenoiserNet DenoiserNet::create(const DenoiserConfig& cfg, Rng& rng) {
  if (cfg.base == 0 || cfg.emb == 0 || cfg.in_channels == 0 || cfg.out_channels == 0)
    throw std::invalid_argument("DenoiserNet: zero-sized config");
  if (cfg.in_channels != cfg.out_channels)
    throw std::invalid_argument("DenoiserNet: the input residual needs matching channel counts");
  DenoiserNet n;
  n.cfg = cfg;
  const std::size_t B = cfg.base, E = cfg.emb;
  // +2 coordinate planes: a conv stack is translation-equivariant and can't
  // otherwise place spatially anchored structure, which denoising from heavy
  // noise requires
  const std::size_t in_c = cfg.in_channels + (cfg.depth_conditioned ? 1 : 0) + 2;

  n.time1 = Linear::create(E, E, rng);
  n.time2 = Linear::create(E, E, rng);
  n.labels = Tensor::randn({cfg.n_labels + 1, E}, rng, 0.02, true);
  n.cam1 = Linear::create(12, E, rng);
  n.cam2 = Linear::create(E, E, rng);

  n.enc1a = Conv2dLayer::create(in_c, B, 3, 1, rng);
  n.enc1b = Conv2dLayer::create(B, B, 3, 1, rng);
  n.enc2a = Conv2dLayer::create(B, 2 * B, 3, 2, rng);
  n.enc2b = Conv2dLayer::create(2 * B, 2 * B, 3, 1, rng);
  n.mid_a = Conv2dLayer::create(2 * B, 4 * B, 3, 2, rng);
  n.mid_b = Conv2dLayer::create(4 * B, 4 * B, 3, 1, rng);
  n.mix = zero_conv(4 * B, 4 * B, 1);
  n.dec2a = Conv2dLayer::create(4 * B + 2 * B, 2 * B, 3, 1, rng);
  n.dec2b = Conv2dLayer::create(2 * B, 2 * B, 3, 1, rng);
  n.dec1a = Conv2dLayer::create(2 * B + B, B, 3, 1, rng);
  n.dec1b = Conv2dLayer::create(B, B, 3, 1, rng);
  n.head = zero_conv(B, cfg.out_channels, 3);

  n.eb1 = Linear::create(E, B, rng, 0.1);
  n.eb2 = Linear::create(E, 2 * B, rng, 0.1);
  n.eb3 = Linear::create(E, 4 * B, rng, 0.1);
  n.eb4 = Linear::create(E, 2 * B, rng, 0.1);
  n.eb5 = Linear::create(E, B, rng, 0.1);

  n.res_gain = Linear::zeros(E, cfg.out_channels);
  for (auto& v : n.res_gain.b.value_mut()) v = 1.0;

  if (cfg.depth_conditioned) {
    // new input channel starts disconnected; it sits right after the z slots
    auto w = n.enc1a.W.value_mut();
    const std::size_t kk = 9;
    for (std::size_t o = 0; o < B; ++o)
      std::memset(w.data() + (o * in_c + cfg.in_channels) * kk, 0, kk * sizeof(double));
  }
  return n;
}

namespace {

// conv -> conditioning bias -> relu -> conv -> relu
Tensor block(const Tensor& x, const Conv2dLayer& ca, const Conv2dLayer& cb, const Linear& eb,
             const Tensor& emb_act) {
  Tensor h = ca.forward(x);
  Tensor bias = eb.forward(emb_act);  // [N, C]
  h = relu(add_rows(h, bias));
  return relu(cb.forward(h));
}

}  // namespace

Tensor DenoiserNet::predict(const Tensor& z, std::size_t t, std::span<const int> label_ids,
                            std::span<const CameraPose> cams, const Tensor& depth) const {
  if (!z.defined() || z.rank() != 4)
    throw std::invalid_argument("DenoiserNet: input must be [N,C,H,W]");
  const std::size_t N = z.dim(0), C = z.dim(1), H = z.dim(2), W = z.dim(3);
  if (C != cfg.in_channels)
    throw std::invalid_argument("DenoiserNet: expected " + std::to_string(cfg.in_channels) +
                                " channels, got " + std::to_string(C));
  if (H % 4 != 0 || W % 4 != 0 || H == 0 || W == 0)
    throw std::invalid_argument("DenoiserNet: spatial size must be a positive multiple of 4");
  if (label_ids.size() != N)
    throw std::invalid_argument("DenoiserNet: need one label per sample");
  for (int id : label_ids)
    if (id < 0 || static_cast<std::size_t>(id) > cfg.n_labels)
      throw std::invalid_argument("DenoiserNet: label id out of range");
  if (cfg.four_view && N % 4 != 0)
    throw std::invalid_argument("DenoiserNet: four-view batches must be quad groups");
  if (cfg.camera_conditioned && cams.size() != N)
    throw std::invalid_argument("DenoiserNet: need one camera per sample");

  std::vector<Tensor> planes{z};
  if (cfg.depth_conditioned) {
    if (!depth.defined() || depth.rank() != 4 || depth.dim(0) != N || depth.dim(1) != 1)
      throw std::invalid_argument("DenoiserNet: depth condition must be [N,1,h,w]");
    Tensor d = depth;
    if (d.dim(2) != H || d.dim(3) != W) d = resize_bilinear(d, H, W);
    planes.push_back(std::move(d));
  }
  {
    // coordinate planes in [-1,1], sampled at pixel centers
    std::vector<double> cv(N * 2 * H * W);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t at = ((i * 2) * H + y) * W + x;
          cv[at] = (2.0 * x + 1.0) / W - 1.0;
          cv[at + H * W] = (2.0 * y + 1.0) / H - 1.0;
        }
    planes.push_back(Tensor::from_data({N, 2, H, W}, std::move(cv)));
  }
  Tensor h = concat(planes, 1);

  // shared conditioning embedding
  Tensor te = time2.forward(relu(time1.forward(sinusoidal_embedding(static_cast<double>(t),
                                                                    cfg.emb))));
  std::vector<std::size_t> rows(label_ids.begin(), label_ids.end());
  Tensor E = add(take_rows(labels, rows), te);
  if (cfg.camera_conditioned) {
    std::vector<double> cin(N * 12);
    for (std::size_t i = 0; i < N; ++i) {
      const auto ext = cams[i].extrinsic();
      for (std::size_t k = 0; k < 12; ++k) {
        // translation column is on the camera-distance scale; halve it so
        // every input stays order-one
        const bool trans = (k % 4) == 3;
        cin[i * 12 + k] = trans ? ext[k] * 0.5 : ext[k];
      }
    }
    Tensor ce = cam2.forward(relu(cam1.forward(Tensor::from_data({N, 12}, std::move(cin)))));
    E = add(E, ce);
  }
  Tensor ea = relu(E);

  Tensor x1 = block(h, enc1a, enc1b, eb1, ea);    // [N, B,   H,   W]
  Tensor x2 = block(x1, enc2a, enc2b, eb2, ea);   // [N, 2B,  H/2, W/2]
  Tensor x3 = block(x2, mid_a, mid_b, eb3, ea);   // [N, 4B,  H/4, W/4]

  if (cfg.four_view) {
    // blend each view with its group mean; zero-init so it fades in
    const std::size_t G = N / 4;
    const std::size_t chw = x3.dim(1) * x3.dim(2) * x3.dim(3);
    Tensor gm = mean_axis(reshape(x3, {G, 4, chw}), 1);
    Tensor one = reshape(gm, {G, 1, chw});
    Tensor tiled = reshape(concat({one, one, one, one}, 1),
                           {N, x3.dim(1), x3.dim(2), x3.dim(3)});
    x3 = add(x3, mix.forward(tiled));
  }

  Tensor u2 = resize_nearest(x3, H / 2, W / 2);
  u2 = block(concat({u2, x2}, 1), dec2a, dec2b, eb4, ea);
  Tensor u1 = resize_nearest(u2, H, W);
  u1 = block(concat({u1, x1}, 1), dec1a, dec1b, eb5, ea);
  // learned correction on top of a gained copy of the input
  Tensor gain = res_gain.forward(ea);  // [N, C]
  return add(head.forward(u1), mul_rows(z, gain));
}

void DenoiserNet::params(ParamMap& pm) const {
  time1.params(pm, "time1");
  time2.params(pm, "time2");
  pm.add("labels", labels);
  cam1.params(pm, "cam1");
  cam2.params(pm, "cam2");
  enc1a.params(pm, "enc1a");
  enc1b.params(pm, "enc1b");
  enc2a.params(pm, "enc2a");
  enc2b.params(pm, "enc2b");
  mid_a.params(pm, "mid_a");
  mid_b.params(pm, "mid_b");
  mix.params(pm, "mix");
  dec2a.params(pm, "dec2a");
  dec2b.params(pm, "dec2b");
  dec1a.params(pm, "dec1a");
  dec1b.params(pm, "dec1b");
  head.params(pm, "head");
  eb1.params(pm, "eb1");
  eb2.params(pm, "eb2");
  eb3.params(pm, "eb3");
  eb4.params(pm, "eb4");
  eb5.params(pm, "eb5");
  res_gain.params(pm, "res_gain");
}

void save_denoiser(const std::string& path, const DenoiserNet& net) {
  nlohmann::json m;
  m["kind"] = "denoiser";
  m["in_channels"] = net.cfg.in_channels;
  m["out_channels"] = net.cfg.out_channels;
  m["base"] = net.cfg.base;
  m["emb"] = net.cfg.emb;
  m["n_labels"] = net.cfg.n_labels;
  m["camera_conditioned"] = net.cfg.camera_conditioned;
  m["depth_conditioned"] = net.cfg.depth_conditioned;
  m["four_view"] = net.cfg.four_view;
  ParamMap pm;
  net.params(pm);
  save_checkpoint(path, pm.items, m.dump());
}

DenoiserNet load_denoiser(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json m = nlohmann::json::parse(ck.manifest);
  if (m.value("kind", "") != "denoiser")
    throw std::runtime_error("load_denoiser: " + path + " is not a denoiser checkpoint");
  DenoiserConfig cfg;
  cfg.in_channels = m.at("in_channels").get<std::size_t>();
  cfg.out_channels = m.at("out_channels").get<std::size_t>();
  cfg.base = m.at("base").get<std::size_t>();
  cfg.emb = m.at("emb").get<std::size_t>();
  cfg.n_labels = m.at("n_labels").get<std::size_t>();
  cfg.camera_conditioned = m.at("camera_conditioned").get<bool>();
  cfg.depth_conditioned = m.at("depth_conditioned").get<bool>();
  cfg.four_view = m.at("four_view").get<bool>();
  Rng rng(0);
  DenoiserNet net = DenoiserNet::create(cfg, rng);
  ParamMap pm;
  net.params(pm);
  for (auto& [name, t] : pm.items) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end())
      throw std::runtime_error("load_denoiser: missing tensor " + name);
    if (it->second.shape() != t.shape())
      throw std::runtime_error("load_denoiser: shape mismatch for " + name);
    auto src = it->second.value();
    std::copy(src.begin(), src.end(), t.value_mut().begin());
  }
  return net;
}

}  // namespace sdsf
