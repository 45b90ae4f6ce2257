#pragma once

#include <functional>
#include <initializer_list>

#include "sdsf/tensor.hpp"

namespace sdsf::detail {

inline bool want_grad(std::initializer_list<const Tensor*> ins) {
  if (!Graph::active().recording()) return false;
  for (auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

inline Tensor fresh_out(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->value.resize(shape_numel(shape));
  impl->shape = std::move(shape);
  return wrap_impl(std::move(impl));
}

inline void record(const char* op, std::initializer_list<const Tensor*> ins, Tensor& out,
                   std::function<void()> bwd) {
  if (!want_grad(ins)) return;
  out.set_requires_grad(true);
  GraphNode node;
  node.op = op;
  for (auto* t : ins) node.inputs.push_back(t->impl());
  node.output = out.impl();
  node.backward = std::move(bwd);
  Graph::active().record(std::move(node));
}

}  // namespace sdsf::detail
