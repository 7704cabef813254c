#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle: copies alias the same storage and the same
// autograd node. Ops that receive at least one operand with requires_grad
// record a GradFn closure on their result; backward() replays those closures
// in reverse topological order and accumulates (+=) into every reachable
// tensor that requires a gradient.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cgap2/error.hpp"

namespace cgap2 {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct GradFn {
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Receives dL/d(output) and accumulates into the inputs' grad buffers.
  std::function<void(std::span<const T>)> apply;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<GradFn<T>> grad_fn;

  std::span<T> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

bool grad_mode_enabled();

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{0}) {}
  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }
  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    require(values.size() == shape_numel(shape), ErrorKind::Shape,
            "tensor data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }
  T item() const {
    require(numel() == 1, ErrorKind::Usage, "item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  /// Fresh leaf with a copy of the values and no graph history.
  Tensor detach() const { return Tensor(shape(), impl_->data); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

/// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor that
/// requires a gradient. The loss must hold exactly one element.
template <typename T>
void backward(const Tensor<T>& loss);

template <typename T, typename U>
Tensor<U> cast(const Tensor<T>& t) {
  std::vector<U> out(t.data().begin(), t.data().end());
  return Tensor<U>(t.shape(), std::move(out));
}

namespace detail {

// Builds an op result; records `apply` only when some input needs a gradient
// and graph recording is enabled.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::initializer_list<const Tensor<T>*> inputs,
                      const char* name, std::function<void(std::span<const T>)> apply) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!grad_mode_enabled()) return out;
  bool any = false;
  for (const auto* in : inputs) any = any || (in != nullptr && in->requires_grad());
  if (!any) return out;
  auto fn = std::make_shared<GradFn<T>>();
  fn->name = name;
  for (const auto* in : inputs)
    if (in != nullptr && in->requires_grad()) fn->inputs.push_back(in->impl());
  fn->apply = std::move(apply);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(fn);
  return out;
}

}  // namespace detail

/// A trainable tensor plus its optimizer state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> momentum_buffer;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
    value.set_requires_grad(true);
    momentum_buffer.assign(value.numel(), T(0));
  }
  std::size_t numel() const { return value.numel(); }

  /// Frozen parameters drop out of the autograd graph and the optimizer.
  void set_frozen(bool on) {
    frozen = on;
    value.set_requires_grad(!on);
    if (on) value.zero_grad();
  }
};

}  // namespace cgap2
