#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "sdsf/render.hpp"
#include "sdsf/sds.hpp"

namespace sdsf {

namespace {

void check_range(const std::array<double, 2>& r, const char* name) {
  if (!(r[0] > 0.0 && r[0] <= r[1] && r[1] < 1.0))
    throw std::invalid_argument(std::string("SDSConfig: ") + name + " must lie inside (0,1)");
}

double rms(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

void SDSConfig::validate() const {
  check_range(t_range_coarse, "t_range_coarse");
  check_range(t_range_fine, "t_range_fine");
  if (lambda_sd < 0.0 || lambda_nd < 0.0 || lambda_sd_fine < 0.0 || lambda_nd_fine < 0.0)
    throw std::invalid_argument("SDSConfig: loss weights must be nonnegative");
  if (batch_views != 4)
    throw std::invalid_argument("SDSConfig: the camera sampler draws orthogonal quads only");
  if (render_res < 4 || prior_res < 4 || render_res % 4 != 0 || prior_res % 4 != 0)
    throw std::invalid_argument("SDSConfig: resolutions must be multiples of four");
}

SDSStage stage_at(std::size_t iter, const SDSConfig& cfg) {
  return iter < cfg.iters_coarse ? SDSStage::Coarse : SDSStage::Fine;
}

std::string geo_metrics_csv(const std::vector<GeoMetric>& log) {
  std::ostringstream out;
  out << "iter,stage,t,inj_sd,inj_nd,sdf_grad,skipped\n";
  out.precision(17);
  for (const auto& m : log)
    out << m.iter << ',' << (m.stage == SDSStage::Coarse ? "coarse" : "fine") << ',' << m.t << ','
        << m.inj_sd << ',' << m.inj_nd << ',' << m.sdf_grad << ',' << (m.skipped ? 1 : 0) << '\n';
  return out.str();
}

OptimState::OptimState(std::size_t grid_res, double sphere_radius, double lr, std::uint64_t seed)
    : grid(TetGrid::make(grid_res)),
      field(init_sphere(grid, sphere_radius)),
      opt({field.sdf, field.deform_raw}, lr),
      rng(seed) {}

Tensor sds_grad(const EpsFn& predict, const NoiseSchedule& sched, const Tensor& rendered,
                std::size_t t, const Tensor& eps, double w) {
  if (eps.shape() != rendered.shape())
    throw std::invalid_argument("sds_grad: eps must match the render shape");
  if (t >= sched.T) throw std::invalid_argument("sds_grad: step index past the schedule");

  Tensor inject;
  {
    Graph::NoGrad ng;
    const Tensor z_t = q_sample(rendered.detach(), t, eps, sched);
    const Tensor eps_hat = predict(z_t, t);
    if (eps_hat.shape() != rendered.shape())
      throw std::invalid_argument("sds_grad: predictor output does not match the render");
    inject = mul(sub(eps_hat, eps), w);
  }
  // The constant factor makes d(loss)/d(rendered) exactly the injection; the
  // predictor sits outside the tape, so nothing flows into the prior.
  return sum(mul(rendered, inject));
}

Tensor sds_grad(const DenoiserNet& prior, const NoiseSchedule& sched, const Tensor& rendered,
                int label, std::span<const CameraPose> cams, std::size_t t, const Tensor& eps,
                double w, double cfg_scale, const Tensor& depth) {
  const EpsFn fn = [&](const Tensor& z_t, std::size_t step) {
    return cfg_predict(prior, z_t, step, label, cams, cfg_scale, depth);
  };
  return sds_grad(fn, sched, rendered, t, eps, w);
}

std::size_t anneal_t(std::size_t iter, const SDSConfig& cfg, std::size_t T, Rng& rng) {
  if (T == 0) throw std::invalid_argument("anneal_t: empty schedule");
  const auto& r = stage_at(iter, cfg) == SDSStage::Coarse ? cfg.t_range_coarse : cfg.t_range_fine;
  const double frac = rng.uniform(r[0], r[1]);
  return static_cast<std::size_t>(std::llround(frac * static_cast<double>(T - 1)));
}

double sds_weight(WeightMode mode, const NoiseSchedule& sched, std::size_t t) {
  if (t >= sched.T) throw std::invalid_argument("sds_weight: step index past the schedule");
  return mode == WeightMode::Constant ? 1.0 : 1.0 - sched.alpha_bars[t];
}

void geometry_step(OptimState& state, const GeometryPriors& priors, const SDSConfig& cfg) {
  cfg.validate();
  const SDSStage stage = stage_at(state.iter, cfg);
  const double lam_sd = stage == SDSStage::Coarse ? cfg.lambda_sd : cfg.lambda_sd_fine;
  const double lam_nd = stage == SDSStage::Coarse ? cfg.lambda_nd : cfg.lambda_nd_fine;

  // Randomness is drawn before the mesh check so skipped and taken steps
  // consume the stream identically.
  const auto quad = sample_camera_quad(state.rng, cfg.cameras);
  const std::size_t t = anneal_t(state.iter, cfg, priors.sched.T, state.rng);

  GeoMetric metric;
  metric.iter = state.iter;
  metric.stage = stage;
  metric.t = t;

  const TriangleMesh mesh = marching_tets(state.field, state.grid);
  if (mesh.faces.empty()) {
    state.consecutive_empty += 1;
    metric.skipped = true;
    state.log.push_back(metric);
    state.iter += 1;
    std::fprintf(stderr, "geometry_step %zu: empty level set, skipping (%zu consecutive)\n",
                 metric.iter, state.consecutive_empty);
    if (state.consecutive_empty >= 50)
      throw std::runtime_error("geometry optimization: the level set stayed empty for 50 steps");
    return;
  }
  state.consecutive_empty = 0;

  const std::vector<CameraPose> cams(quad.begin(), quad.end());
  const auto gbs = render_normal_depth(state.field, state.grid, cams, cfg.render_res);

  const std::size_t R = static_cast<std::size_t>(cfg.render_res);
  const Tensor bg = channel_const({0.0, 0.0, 1.0, 0.0}, cfg.render_res, cfg.render_res);
  std::vector<Tensor> nd_views, sd_views;
  nd_views.reserve(gbs.size());
  sd_views.reserve(gbs.size());
  for (const auto& gb : gbs) {
    const Tensor comp = soft_composite(gb.fg, gb.mask, bg);
    const Tensor n = slice(comp, 0, 0, 3);
    // Depth leaves the renderer in unit range; the priors live in [-1,1].
    const Tensor d = add(mul(slice(comp, 0, 3, 4), 2.0), -1.0);
    nd_views.push_back(reshape(concat({n, d}, 0), {1, 4, R, R}));
    sd_views.push_back(reshape(n, {1, 3, R, R}));
  }
  Tensor x_nd = concat(nd_views, 0);
  Tensor x_sd = concat(sd_views, 0);
  if (stage == SDSStage::Coarse && cfg.prior_res != cfg.render_res) {
    const std::size_t P = static_cast<std::size_t>(cfg.prior_res);
    x_nd = resize_bilinear(x_nd, P, P);
    x_sd = resize_bilinear(x_sd, P, P);
  }

  const double w = sds_weight(cfg.w_mode, priors.sched, t);
  const Tensor eps_nd = Tensor::randn(x_nd.shape(), state.rng);
  const Tensor eps_sd = Tensor::randn(x_sd.shape(), state.rng);

  std::vector<Tensor> terms;
  if (lam_nd > 0.0)
    terms.push_back(mul(
        sds_grad(priors.nd, priors.sched, x_nd, priors.label, cams, t, eps_nd, w, cfg.cfg_scale_nd),
        lam_nd));
  if (lam_sd > 0.0)
    terms.push_back(mul(sds_grad(priors.image, priors.sched, x_sd, priors.label, {}, t, eps_sd, w,
                                 cfg.cfg_scale_sd),
                        lam_sd));

  state.opt.zero_grad();
  if (!terms.empty()) {
    Tensor loss = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) loss = add(loss, terms[i]);
    backward(loss);
  }
  metric.inj_nd = lam_nd > 0.0 ? rms(x_nd.grad()) : 0.0;
  metric.inj_sd = lam_sd > 0.0 ? rms(x_sd.grad()) : 0.0;
  metric.sdf_grad = rms(state.field.sdf.grad());
  state.opt.step();
  state.log.push_back(metric);
  state.iter += 1;
  Graph::active().clear();
}

}  // namespace sdsf
