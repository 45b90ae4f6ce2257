#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "sdsf/tensor.hpp"

namespace sdsf {

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw std::invalid_argument("backward: root must be a defined scalar");
  auto& graph = Graph::active();
  const auto& nodes = graph.nodes();

  // Tape order is topological, so one reverse sweep finds every node the
  // root depends on.
  std::unordered_set<TensorImpl*> reach;
  reach.insert(root.impl().get());
  std::vector<char> needed(nodes.size(), 0);
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!reach.count(nodes[i].output.get())) continue;
    needed[i] = 1;
    for (const auto& in : nodes[i].inputs)
      if (in->requires_grad) reach.insert(in.get());
  }

  // Interior grads reset every call; leaf grads keep accumulating.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!needed[i]) continue;
    auto& out = nodes[i].output;
    out->ensure_grad();
    std::fill(out->grad.begin(), out->grad.end(), 0.0);
  }
  root.impl()->ensure_grad();
  root.impl()->grad[0] += 1.0;

  for (std::size_t i = nodes.size(); i-- > 0;)
    if (needed[i] && nodes[i].backward) nodes[i].backward();
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double fd_eps, double tol) {
  GradCheckResult res;

  Tensor probe = x.detach();
  probe.set_requires_grad(true);

  Graph::active().clear();
  Tensor y0 = f(probe);
  if (y0.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
  backward(y0);
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());
  const double f0 = y0.item();

  auto eval = [&](const Tensor& t) {
    Graph::NoGrad ng;
    return f(t).item();
  };

  Tensor xp = x.detach();
  auto vals = xp.value_mut();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + fd_eps;
    const double fp = eval(xp);
    vals[i] = orig - fd_eps;
    const double fm = eval(xp);
    vals[i] = orig;

    const double fwd = (fp - f0) / fd_eps;
    const double bwd = (f0 - fm) / fd_eps;
    const double central = (fp - fm) / (2.0 * fd_eps);
    // One-sided slopes that disagree mean the sample point straddles a
    // kink; central differencing is meaningless there.
    const double kink_scale = std::max({1.0, std::abs(fwd), std::abs(bwd)});
    if (std::abs(fwd - bwd) > 0.05 * kink_scale) {
      ++res.skipped_kinks;
      continue;
    }
    ++res.checked;
    const double a = analytic[i];
    const double rel = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-6);
    res.max_rel_err = std::max(res.max_rel_err, rel);
    if (rel <= tol)
      ++res.passed;
    else
      res.failing.push_back(i);
  }

  Graph::active().clear();
  return res;
}

}  // namespace sdsf
