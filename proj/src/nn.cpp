#include "sdsf/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sdsf {

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng, double gain) {
  Linear l;
  const double std = gain * std::sqrt(2.0 / static_cast<double>(in));
  l.W = Tensor::randn({out, in}, rng, std, true);
  l.b = Tensor::zeros({out}, true);
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  Linear l;
  l.W = Tensor::zeros({out, in}, true);
  l.b = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() == 1) return add(matmul(W, x), b);
  return add(matmul(x, transpose2d(W)), b);
}

void Linear::params(ParamMap& pm, const std::string& prefix) const {
  pm.add(prefix + ".W", W);
  pm.add(prefix + ".b", b);
}

Conv2dLayer Conv2dLayer::create(std::size_t ci, std::size_t co, std::size_t k, std::size_t stride,
                                Rng& rng, double gain) {
  Conv2dLayer c;
  const double std = gain * std::sqrt(2.0 / static_cast<double>(ci * k * k));
  c.W = Tensor::randn({co, ci, k, k}, rng, std, true);
  c.b = Tensor::zeros({co}, true);
  c.stride = stride;
  c.pad = k / 2;
  return c;
}

Tensor Conv2dLayer::forward(const Tensor& x) const { return conv2d(x, W, b, stride, pad); }

void Conv2dLayer::params(ParamMap& pm, const std::string& prefix) const {
  pm.add(prefix + ".W", W);
  pm.add(prefix + ".b", b);
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps,
           double weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      wd_(weight_decay) {
  for (auto& p : params_) {
    if (!p.requires_grad()) throw std::invalid_argument("Adam: parameter without grad");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto val = params_[k].value_mut();
    auto grd = params_[k].grad_mut();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = grd[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      val[i] -= lr_ * (mh / (std::sqrt(vh) + eps_) + wd_ * val[i]);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> Adam::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.emplace_back("adam.m." + std::to_string(k),
                     Tensor::from_data(params_[k].shape(), m_[k]));
    out.emplace_back("adam.v." + std::to_string(k),
                     Tensor::from_data(params_[k].shape(), v_[k]));
  }
  std::vector<double> t1{static_cast<double>(t_)};
  out.emplace_back("adam.t", Tensor::from_data({1}, std::move(t1)));
  return out;
}

void Adam::load_state(const std::vector<std::pair<std::string, Tensor>>& kv) {
  for (const auto& [name, t] : kv) {
    if (name == "adam.t") {
      t_ = static_cast<std::size_t>(t.item());
      continue;
    }
    const bool is_m = name.rfind("adam.m.", 0) == 0;
    const bool is_v = name.rfind("adam.v.", 0) == 0;
    if (!is_m && !is_v) continue;
    const std::size_t k = std::stoul(name.substr(7));
    if (k >= params_.size() || t.numel() != params_[k].numel())
      throw std::runtime_error("Adam: state mismatch for " + name);
    auto& dst = is_m ? m_[k] : v_[k];
    dst.assign(t.value().begin(), t.value().end());
  }
}

Tensor sinusoidal_embedding(double x, std::size_t dim, double max_period) {
  const std::size_t half = dim / 2;
  std::vector<double> v(dim, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq =
        std::exp(-std::log(max_period) * static_cast<double>(k) / static_cast<double>(half));
    v[k] = std::sin(x * freq);
    v[half + k] = std::cos(x * freq);
  }
  return Tensor::from_data({dim}, std::move(v));
}

}  // namespace sdsf
