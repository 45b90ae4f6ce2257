#include <cmath>
#include <stdexcept>
#include <string>

#include "sdsf/diffusion.hpp"

namespace sdsf {

NoiseSchedule NoiseSchedule::linear(std::size_t T, double beta_lo, double beta_hi) {
  if (T < 2) throw std::invalid_argument("NoiseSchedule: T must be at least 2");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double f = static_cast<double>(t) / static_cast<double>(T - 1);
    s.betas[t] = beta_lo + (beta_hi - beta_lo) * f;
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

void NoiseSchedule::validate() const {
  if (T == 0 || betas.size() != T || alphas.size() != T || alpha_bars.size() != T)
    throw std::invalid_argument("NoiseSchedule: inconsistent lengths");
  for (std::size_t t = 0; t < T; ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0))
      throw std::invalid_argument("NoiseSchedule: beta outside (0,1) at t=" + std::to_string(t));
    if (std::abs(alphas[t] - (1.0 - betas[t])) > 1e-15)
      throw std::invalid_argument("NoiseSchedule: alpha mismatch at t=" + std::to_string(t));
    const double prev = t == 0 ? 1.0 : alpha_bars[t - 1];
    if (!(alpha_bars[t] < prev))
      throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing at t=" +
                                  std::to_string(t));
  }
  if (!(alpha_bars.front() > 0.99))
    throw std::invalid_argument("NoiseSchedule: alpha_bar[0] not close to 1");
  if (!(alpha_bars.back() < 0.05))
    throw std::invalid_argument("NoiseSchedule: alpha_bar[T-1] not close to 0");
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t >= sched.T)
    throw std::invalid_argument("q_sample: t=" + std::to_string(t) + " outside schedule of " +
                                std::to_string(sched.T));
  if (eps.shape() != x0.shape())
    throw std::invalid_argument("q_sample: eps shape " + shape_str(eps.shape()) +
                                " does not match x0 " + shape_str(x0.shape()));
  const double ab = sched.alpha_bars[t];
  return add(mul(x0, std::sqrt(ab)), mul(eps, std::sqrt(1.0 - ab)));
}

Tensor diffusion_loss(const Tensor& pred, const Tensor& eps) {
  if (pred.shape() != eps.shape())
    throw std::invalid_argument("diffusion_loss: shape mismatch " + shape_str(pred.shape()) +
                                " vs " + shape_str(eps.shape()));
  Tensor d = sub(pred, eps);
  return mean(mul(d, d));
}

Tensor cfg_combine(const Tensor& eps_u, const Tensor& eps_c, double scale) {
  if (scale == 0.0) return eps_u;
  if (scale == 1.0) return eps_c;
  return add(eps_u, mul(sub(eps_c, eps_u), scale));
}

}  // namespace sdsf
