#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sdsf/rng.hpp"
#include "sdsf/tensor.hpp"

namespace sdsf {

struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(std::string name, Tensor t) { items.emplace_back(std::move(name), std::move(t)); }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : items) out.push_back(t);
    return out;
  }
  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& [k, t] : items) n += t.numel();
    return n;
  }
};

struct Linear {
  Tensor W;  // [out, in]
  Tensor b;  // [out]

  static Linear create(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
  static Linear zeros(std::size_t in, std::size_t out);
  // x: [B, in] or [in]
  Tensor forward(const Tensor& x) const;
  void params(ParamMap& pm, const std::string& prefix) const;
};

struct Conv2dLayer {
  Tensor W;  // [out, in, k, k]
  Tensor b;  // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv2dLayer create(std::size_t ci, std::size_t co, std::size_t k, std::size_t stride,
                            Rng& rng, double gain = 1.0);
  Tensor forward(const Tensor& x) const;
  void params(ParamMap& pm, const std::string& prefix) const;
};

// Adam with decoupled weight decay. Step order and math are fixed so runs
// are bit-reproducible.
class Adam {
public:
  explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8, double weight_decay = 0.0);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::size_t steps_taken() const { return t_; }

  // Moment buffers for checkpoint resume.
  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& kv);

private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_, wd_;
  std::size_t t_ = 0;
};

// Positional features: [sin(w_k x), cos(w_k x)] over log-spaced frequencies.
Tensor sinusoidal_embedding(double x, std::size_t dim, double max_period = 10000.0);

}  // namespace sdsf
