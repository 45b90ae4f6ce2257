#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdsf/camera.hpp"
#include "sdsf/nn.hpp"
#include "sdsf/tensor.hpp"

namespace sdsf {

// Forward-process schedule: betas with cumulative signal levels.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  static NoiseSchedule linear(std::size_t T = 1000, double beta_lo = 1e-4,
                              double beta_hi = 0.02);

  // Throws unless betas lie in (0,1) and alpha_bar decreases strictly from
  // above 0.99 to below 0.05.
  void validate() const;
};

// sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps,
                const NoiseSchedule& sched);

// mean((pred - eps)^2)
Tensor diffusion_loss(const Tensor& pred, const Tensor& eps);

struct DenoiserConfig {
  std::size_t in_channels = 4;
  std::size_t out_channels = 4;
  std::size_t base = 8;       // channels at full resolution, doubling per level
  std::size_t emb = 64;       // embedding width
  std::size_t n_labels = 8;   // ids 1..n_labels; 0 is the unconditional row
  bool camera_conditioned = false;
  bool depth_conditioned = false;  // extra input channel, zero-init weights
  bool four_view = false;          // batch is quad groups, mixed at the bottleneck
};

// Noise predictor: conv encoder-decoder over three resolutions with skip
// connections, plus a global residual from the noised input scaled by a
// learned per-timestep gain. The gain starts at one and the head at zero, so
// an untrained net is the identity on its input, which is already nearly
// right at high noise; training only has to learn the correction. Time
// (sinusoidal -> MLP), label table, and optionally a camera MLP over the
// flattened extrinsic share one embedding that enters each block as a
// per-channel bias. Depth conditioning starts disconnected.
struct DenoiserNet {
  DenoiserConfig cfg;

  Linear time1, time2;
  Tensor labels;  // [n_labels+1, emb]
  Linear cam1, cam2;

  Conv2dLayer enc1a, enc1b;  // base, full res
  Conv2dLayer enc2a, enc2b;  // 2*base, half res (enc2a strides down)
  Conv2dLayer mid_a, mid_b;  // 4*base, quarter res (mid_a strides down)
  Conv2dLayer mix;           // 1x1 cross-view blend at the bottleneck, zero-init
  Conv2dLayer dec2a, dec2b;
  Conv2dLayer dec1a, dec1b;
  Conv2dLayer head;          // zero-init

  Linear eb1, eb2, eb3, eb4, eb5;  // embedding -> per-channel block bias
  Linear res_gain;                 // embedding -> per-channel input gain, starts at one

  static DenoiserNet create(const DenoiserConfig& cfg, Rng& rng);

  // z: [N,C,H,W] with H,W divisible by 4. label_ids: N entries, 0 means
  // unconditional. cams: N poses when camera-conditioned. depth: [N,1,h,w]
  // when depth-conditioned; resized to z's spatial size and concatenated.
  Tensor predict(const Tensor& z, std::size_t t, std::span<const int> label_ids,
                 std::span<const CameraPose> cams = {}, const Tensor& depth = {}) const;

  void params(ParamMap& pm) const;
};

void save_denoiser(const std::string& path, const DenoiserNet& net);
DenoiserNet load_denoiser(const std::string& path);

struct DiffusionSample {
  Tensor image;  // [C,H,W], values in [-1,1]
  int label = 1;
  CameraPose cam;
  Tensor depth;  // [1,h,w] condition; only for depth-conditioned priors
};

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t batch = 4;  // four-view mode always takes one quad instead
  double lr = 1e-3;
  double lr_end = -1.0;  // linear decay target; negative keeps lr constant
  double label_dropout = 0.1;
  std::uint64_t seed = 1;
};

// Adam on the noise-matching objective; labels drop to the unconditional id
// at the configured rate. Four-view nets consume the dataset as consecutive
// groups of four views. Returns the per-step loss history; throws on a
// non-finite loss.
std::vector<double> train_prior(DenoiserNet& net, std::span<const DiffusionSample> data,
                                const NoiseSchedule& sched, const TrainConfig& cfg);

// eps_u + scale*(eps_c - eps_u); scale 0 and 1 return the inputs untouched
Tensor cfg_combine(const Tensor& eps_u, const Tensor& eps_c, double scale);

// Guided prediction: conditional branch uses `label`, unconditional the null
// id. Runs without recording gradients.
Tensor cfg_predict(const DenoiserNet& net, const Tensor& z_t, std::size_t t, int label,
                   std::span<const CameraPose> cams, double scale, const Tensor& depth = {});

struct SampleBatch {
  Tensor images;  // [N,C,H,W]
  std::vector<CameraPose> cams;
  int label = 0;
};

// Deterministic DDIM trajectory from rng-seeded noise over `steps` evenly
// spaced timesteps.
SampleBatch ddim_sample(const DenoiserNet& net, const NoiseSchedule& sched, std::size_t steps,
                        int label, std::span<const CameraPose> cams, double scale, Rng& rng,
                        std::size_t h = 32, std::size_t w = 32, const Tensor& depth = {});

// 4-channel autoencoder with a Gaussian posterior; the 4th channel's
// first-layer (and last-layer) weights start as the average of the other
// three, the channel-extension recipe for growing a 3-channel model.
struct TinyVAE {
  Conv2dLayer e1, e2, e3;  // e3 is 1x1 to mean||logvar
  Conv2dLayer d1, d2, d3;
  double kl_weight = 1e-6;

  static TinyVAE create(Rng& rng, double kl_weight = 1e-6);

  std::pair<Tensor, Tensor> encode(const Tensor& x) const;  // mean, logvar
  Tensor decode(const Tensor& z) const;
  void params(ParamMap& pm) const;
};

// 0.5*sum(mu^2 + exp(logvar) - 1 - logvar) / batch
Tensor vae_kl(const Tensor& mu, const Tensor& logvar);

struct VaeRoundtrip {
  Tensor recon;
  double kl = 0.0;
  double mse = 0.0;
};

// Encode, sample the posterior once, decode. No gradients recorded.
VaeRoundtrip vae_roundtrip(const TinyVAE& vae, const Tensor& x, Rng& rng);

// Adam on mse + kl_weight*kl over the whole image set each step.
std::vector<double> train_vae(TinyVAE& vae, std::span<const Tensor> images,
                              std::size_t steps, double lr, Rng& rng);

}  // namespace sdsf
