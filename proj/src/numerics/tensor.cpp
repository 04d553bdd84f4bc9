#include "wsgic/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "wsgic/errors.hpp"

namespace wsgic {

namespace {

thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

template <typename T>
void check_finite(const std::vector<T>& values) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NonFiniteValue("op produced a non-finite value");
  }
}

template <typename T>
Tensor<T> make_result_impl(Shape shape, std::vector<T> data, const Tensor<T>* first,
                           std::size_t count, std::function<void(Node<T>&)> backward_fn) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeMismatch("result data length does not match shape " + shape_str(shape));
  }
  if (g_finite_checks.load(std::memory_order_relaxed)) check_finite(data);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool needs = false;
    for (std::size_t i = 0; i < count; ++i) needs = needs || first[i].requires_grad();
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(count);
      for (std::size_t i = 0; i < count; ++i) node->parents.push_back(first[i].node_ptr());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeMismatch("tensor data length " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
  }
  for (auto extent : shape) {
    if (extent == 0) throw ShapeMismatch("tensor extents must be positive");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
void backward(const Tensor<T>& root) {
  if (root.numel() != 1) {
    throw ShapeMismatch("backward() needs a single-element root, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks() { return g_finite_checks.load(); }

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
  return make_result_impl<T>(std::move(shape), std::move(data), parents.begin(), parents.size(),
                             std::move(backward_fn));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& parents,
                      std::function<void(Node<T>&)> backward_fn) {
  return make_result_impl<T>(std::move(shape), std::move(data), parents.data(), parents.size(),
                             std::move(backward_fn));
}

#define WSGIC_INSTANTIATE(T)                                                                    \
  template class Tensor<T>;                                                                     \
  template void backward<T>(const Tensor<T>&);                                                  \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, std::initializer_list<Tensor<T>>,    \
                                    std::function<void(Node<T>&)>);                             \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, const std::vector<Tensor<T>>&,       \
                                    std::function<void(Node<T>&)>);

WSGIC_INSTANTIATE(float)
WSGIC_INSTANTIATE(double)

#undef WSGIC_INSTANTIATE

}  // namespace wsgic
