#include "cgap2/tensor.hpp"

#include <unordered_set>

namespace cgap2 {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Window: return "window error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Phase: return "phase error";
    case ErrorKind::Optimizer: return "optimizer error";
    case ErrorKind::Checkpoint: return "checkpoint error";
    case ErrorKind::Statistics: return "statistics error";
  }
  return "error";
}

namespace detail {
namespace {
thread_local bool g_grad_mode = true;
}
bool grad_mode_enabled() { return g_grad_mode; }
}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::g_grad_mode) { detail::g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { detail::g_grad_mode = previous_; }

template <typename T>
void backward(const Tensor<T>& loss) {
  require(loss.numel() == 1, ErrorKind::Usage, "backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  require(loss.requires_grad(), ErrorKind::Usage, "backward() on a loss that does not require grad");

  using Impl = detail::TensorImpl<T>;
  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* fn = node->grad_fn.get();
    if (fn != nullptr && next < fn->inputs.size()) {
      Impl* child = fn->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  loss.impl()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (node->grad_fn && node->grad.size() == node->data.size()) node->grad_fn->apply(node->grad);
  }
}

template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace cgap2
