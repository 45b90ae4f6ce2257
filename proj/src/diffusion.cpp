#include <cmath>
#include <stdexcept>
#include <string>

#include "sdsf/diffusion.hpp"

namespace sdsf {

namespace {

Tensor stack_images(std::span<const DiffusionSample> data, std::span<const std::size_t> idx,
                    bool depth_channel) {
  std::vector<Tensor> parts;
  parts.reserve(idx.size());
  for (std::size_t i : idx) {
    const Tensor& t = depth_channel ? data[i].depth : data[i].image;
    Shape s = t.shape();
    s.insert(s.begin(), 1);
    parts.push_back(reshape(t, std::move(s)));
  }
  return concat(parts, 0);
}

}  // namespace

std::vector<double> train_prior(DenoiserNet& net, std::span<const DiffusionSample> data,
                                const NoiseSchedule& sched, const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train_prior: empty dataset");
  if (net.cfg.four_view && data.size() % 4 != 0)
    throw std::invalid_argument("train_prior: four-view data must come in quad groups");
  const std::size_t batch =
      net.cfg.four_view ? 4 : std::min<std::size_t>(std::max<std::size_t>(cfg.batch, 1),
                                                    data.size());
  for (const auto& s : data) {
    if (s.image.rank() != 3 || s.image.dim(0) != net.cfg.in_channels)
      throw std::invalid_argument("train_prior: sample image must be [C,H,W] with the net's C");
    if (net.cfg.depth_conditioned && !s.depth.defined())
      throw std::invalid_argument("train_prior: depth-conditioned net needs sample depths");
  }

  ParamMap pm;
  net.params(pm);
  Adam opt(pm.tensors(), cfg.lr);
  Rng rng(cfg.seed);
  std::vector<double> history;
  history.reserve(cfg.steps);

  std::vector<std::size_t> idx(batch);
  std::vector<int> ids(batch);
  std::vector<CameraPose> cams(batch);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Graph::active().clear();
    if (cfg.lr_end >= 0.0 && cfg.steps > 1)
      opt.set_lr(cfg.lr + (cfg.lr_end - cfg.lr) * static_cast<double>(step) /
                              static_cast<double>(cfg.steps - 1));

    if (net.cfg.four_view) {
      const std::size_t g = rng.index(data.size() / 4);
      for (std::size_t k = 0; k < 4; ++k) idx[k] = 4 * g + k;
    } else {
      for (auto& i : idx) i = rng.index(data.size());
    }
    for (std::size_t k = 0; k < batch; ++k) {
      const auto& s = data[idx[k]];
      ids[k] = rng.uniform() < cfg.label_dropout ? 0 : s.label;
      cams[k] = s.cam;
    }

    Tensor x0 = stack_images(data, idx, false);
    Tensor depth =
        net.cfg.depth_conditioned ? stack_images(data, idx, true) : Tensor();
    const std::size_t t = rng.index(sched.T);
    Tensor eps = Tensor::randn(x0.shape(), rng);
    Tensor zt = q_sample(x0, t, eps, sched);

    Tensor pred = net.predict(zt, t, ids, net.cfg.camera_conditioned ? cams : decltype(cams){},
                              depth);
    Tensor loss = diffusion_loss(pred, eps);
    const double lv = loss.item();
    if (!std::isfinite(lv))
      throw std::runtime_error("train_prior: non-finite loss at step " + std::to_string(step));
    history.push_back(lv);

    opt.zero_grad();
    backward(loss);
    opt.step();
  }
  Graph::active().clear();
  return history;
}

Tensor cfg_predict(const DenoiserNet& net, const Tensor& z_t, std::size_t t, int label,
                   std::span<const CameraPose> cams, double scale, const Tensor& depth) {
  Graph::NoGrad ng;
  if (!z_t.defined() || z_t.rank() != 4)
    throw std::invalid_argument("cfg_predict: z_t must be [N,C,H,W]");
  const std::size_t N = z_t.dim(0);
  std::vector<int> cond(N, label);
  std::vector<int> uncond(N, 0);
  if (scale == 1.0) return net.predict(z_t, t, cond, cams, depth);
  if (scale == 0.0) return net.predict(z_t, t, uncond, cams, depth);
  Tensor eps_c = net.predict(z_t, t, cond, cams, depth);
  Tensor eps_u = net.predict(z_t, t, uncond, cams, depth);
  return cfg_combine(eps_u, eps_c, scale);
}

SampleBatch ddim_sample(const DenoiserNet& net, const NoiseSchedule& sched, std::size_t steps,
                        int label, std::span<const CameraPose> cams, double scale, Rng& rng,
                        std::size_t h, std::size_t w, const Tensor& depth) {
  Graph::NoGrad ng;
  if (steps == 0 || steps > sched.T)
    throw std::invalid_argument("ddim_sample: steps must be in [1, T]");
  std::size_t N = 1;
  if (net.cfg.camera_conditioned) {
    if (cams.empty()) throw std::invalid_argument("ddim_sample: camera-conditioned net needs poses");
    N = cams.size();
  } else if (net.cfg.four_view) {
    N = 4;
  }

  std::vector<std::size_t> tau(steps);
  for (std::size_t i = 0; i < steps; ++i)
    tau[i] = steps == 1 ? sched.T - 1
                        : static_cast<std::size_t>(std::llround(
                              static_cast<double>(sched.T - 1) * static_cast<double>(i) /
                              static_cast<double>(steps - 1)));

  Tensor x = Tensor::randn({N, net.cfg.in_channels, h, w}, rng);
  for (std::size_t i = steps; i-- > 0;) {
    const std::size_t t = tau[i];
    Tensor eh = cfg_predict(net, x, t, label, cams, scale, depth);
    const double ab = sched.alpha_bars[t];
    // x0 estimate, then jump deterministically to the next signal level.
    // Early steps divide by a tiny sqrt(abar), amplifying prediction error
    // enormously; clamping to the data range keeps the trajectory sane.
    Tensor x0 = mul(sub(x, mul(eh, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
    x0 = clamp(x0, -1.0, 1.0);
    const double ab_next = i > 0 ? sched.alpha_bars[tau[i - 1]] : 1.0;
    x = add(mul(x0, std::sqrt(ab_next)), mul(eh, std::sqrt(1.0 - ab_next)));
  }

  SampleBatch out;
  out.images = x;
  out.cams.assign(cams.begin(), cams.end());
  out.label = label;
  return out;
}

}  // namespace sdsf
