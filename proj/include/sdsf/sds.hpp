#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdsf/camera.hpp"
#include "sdsf/diffusion.hpp"
#include "sdsf/geometry.hpp"
#include "sdsf/nn.hpp"
#include "sdsf/rng.hpp"
#include "sdsf/tensor.hpp"

namespace sdsf {

enum class WeightMode { Constant, SigmaSquared };
enum class SDSStage { Coarse, Fine };

// Two-stage geometry distillation settings. Coarse renders are resized down
// to the priors' native resolution and fed in directly; the fine stage hands
// the priors the full-resolution renders. The time range and loss weights
// switch once, at iters_coarse.
struct SDSConfig {
  WeightMode w_mode = WeightMode::Constant;  // the papers disagree on w(t); constant is testable
  double cfg_scale_sd = 100.0;
  double cfg_scale_nd = 50.0;
  std::array<double, 2> t_range_coarse{0.5, 0.98};
  std::array<double, 2> t_range_fine{0.05, 0.5};
  double lambda_sd = 0.5;  // coarse stage weights
  double lambda_nd = 1.0;
  double lambda_sd_fine = 1.0;
  double lambda_nd_fine = 1.0;
  std::size_t iters_coarse = 1500;
  std::size_t iters_fine = 1500;
  std::size_t batch_views = 4;  // one orthogonal camera quad per step
  int render_res = 64;
  int prior_res = 32;
  CameraRanges cameras{5.0, 30.0, 1.5, 1.9};

  void validate() const;
};

SDSStage stage_at(std::size_t iter, const SDSConfig& cfg);

struct GeoMetric {
  std::size_t iter = 0;
  SDSStage stage = SDSStage::Coarse;
  std::size_t t = 0;
  double inj_sd = 0.0;  // rms of the gradient injected at each render
  double inj_nd = 0.0;
  double sdf_grad = 0.0;  // rms over the level-set parameters after backward
  bool skipped = false;
};

std::string geo_metrics_csv(const std::vector<GeoMetric>& log);

// One optimization run owns its state exclusively.
struct OptimState {
  TetGrid grid;
  TetField field;
  Adam opt;
  std::size_t iter = 0;
  std::size_t consecutive_empty = 0;
  Rng rng;
  std::vector<GeoMetric> log;

  OptimState(std::size_t grid_res, double sphere_radius, double lr, std::uint64_t seed);
  SDSStage stage(const SDSConfig& cfg) const { return stage_at(iter, cfg); }
};

// Noise prediction at a given z_t and step, e.g. a guided denoiser.
using EpsFn = std::function<Tensor(const Tensor& z_t, std::size_t t)>;

// Score distillation surrogate. Noises the render's values to z_t, queries
// the predictor without recording gradients, and returns a scalar whose
// backward pass injects w*(eps_hat - eps) at `rendered` and nothing anywhere
// else. The scalar's own value is the inner product of render and injection;
// only its gradient is meaningful.
Tensor sds_grad(const EpsFn& predict, const NoiseSchedule& sched, const Tensor& rendered,
                std::size_t t, const Tensor& eps, double w);

// Same, with the predictor a guided denoiser at the given label and poses.
Tensor sds_grad(const DenoiserNet& prior, const NoiseSchedule& sched, const Tensor& rendered,
                int label, std::span<const CameraPose> cams, std::size_t t, const Tensor& eps,
                double w, double cfg_scale, const Tensor& depth = {});

// Uniform draw from the stage's time range, as a discrete step index.
std::size_t anneal_t(std::size_t iter, const SDSConfig& cfg, std::size_t T, Rng& rng);

double sds_weight(WeightMode mode, const NoiseSchedule& sched, std::size_t t);

struct GeometryPriors {
  const DenoiserNet& image;  // scores 3-channel normal renders, one view at a time
  const DenoiserNet& nd;     // scores 4-channel normal+depth camera quads
  const NoiseSchedule& sched;
  int label = 1;
};

// One distillation step: sample a camera quad and a time step, mesh the
// field, render and composite the quad, and push the combined injected
// gradients through the renderer into sdf and deformation via Adam. An empty
// level set skips the step (parameters untouched) and aborts after 50
// consecutive skips. Bit-reproducible for a fixed state seed.
void geometry_step(OptimState& state, const GeometryPriors& priors, const SDSConfig& cfg);

}  // namespace sdsf
