#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tnt {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Raised for any operand-shape disagreement. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a value that must stay finite does not.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorImpl;

// A recorded operation on the gradient tape. `backward` receives the output
// (with its gradient populated) and accumulates into the inputs' gradients.
struct Node {
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  // Returns the gradient buffer, zero-allocating it on first use.
  std::vector<double>& grad_buffer();
};

// Dense row-major float64 tensor. Copies share storage (handle semantics);
// use clone() for a deep copy. Forward ops never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
  // Extent of axis `axis`; negative values count from the back.
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const double> data() const { return impl_->data; }
  // Write access is for leaves (parameters, inputs) only.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  const std::shared_ptr<Node>& grad_fn() const { return impl_->grad_fn; }

  // Reverse-mode sweep from this scalar. Gradients accumulate (+=) into
  // every reachable tensor that requires grad.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Gradient recording is on by default; the guard disables it for the
// current thread while in scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace autodiff {

// Builds the output tensor and, when any input requires grad and recording
// is enabled, attaches a tape node.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

// Test hook: negates the gradient flowing back through every node whose op
// name equals `op` on the current thread. Empty string clears it.
void inject_backward_fault(std::string op);
const std::string& injected_backward_fault();

// Nodes reachable from `root`, inputs before consumers.
std::vector<std::shared_ptr<TensorImpl>> topological_order(const Tensor& root);

}  // namespace autodiff

}  // namespace tnt
