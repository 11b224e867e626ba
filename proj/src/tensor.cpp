#include "tnt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace tnt {

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::string g_fault_op;

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

std::int64_t Tensor::dim(std::int64_t axis) const {
  const auto r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw std::logic_error("in-place write to a tape-tracked tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<std::int64_t>(index.size()) != rank()) {
    throw DimensionError("index rank does not match shape " + shape_str(shape()));
  }
  std::int64_t offset = 0;
  std::size_t a = 0;
  for (auto i : index) {
    const auto extent = impl_->shape[a++];
    if (i < 0 || i >= extent) throw std::out_of_range("tensor index out of range");
    offset = offset * extent + i;
  }
  return impl_->data[static_cast<std::size_t>(offset)];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad && is_leaf();
  return t;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) {
    throw std::logic_error("backward() on a tensor that is not on the tape");
  }
  auto order = autodiff::topological_order(*this);
  impl_->grad_buffer()[0] += 1.0;
  const std::string& fault = g_fault_op;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& node_out = **it;
    if (!node_out.grad_fn || node_out.grad.empty()) continue;
    if (!fault.empty() && node_out.grad_fn->op == fault) {
      TensorImpl flipped;
      flipped.shape = node_out.shape;
      flipped.data = node_out.data;
      flipped.grad = node_out.grad;
      for (auto& g : flipped.grad) g = -g;
      node_out.grad_fn->backward(flipped);
    } else {
      node_out.grad_fn->backward(node_out);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace autodiff {

Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(backward);
    impl->requires_grad = true;
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

void inject_backward_fault(std::string op) { g_fault_op = std::move(op); }
const std::string& injected_backward_fault() { return g_fault_op; }

std::vector<std::shared_ptr<TensorImpl>> topological_order(const Tensor& root) {
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<const TensorImpl*> seen;
  // Iterative post-order DFS; deep graphs would overflow a recursive walk.
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  seen.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& fn = impl->grad_fn;
    if (fn && next < fn->inputs.size()) {
      auto child = fn->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }
  return order;
}

}  // namespace autodiff

}  // namespace tnt
