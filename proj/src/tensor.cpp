#include "swinvftr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace swinvftr::inline SWINVFTR_PRECISION {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

std::string dims_str(const Dims3& dims) {
  std::ostringstream os;
  os << dims[0] << "x" << dims[1] << "x" << dims[2];
  return os.str();
}

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<Scalar> data, bool requires_grad) {
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (static_cast<int64_t>(data.size()) != numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

std::vector<Scalar>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

void retain_freed_memory() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const int64_t n = swinvftr::numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<Scalar>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  const int64_t n = swinvftr::numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<Scalar>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<Scalar> data, bool requires_grad) {
  return Tensor(new_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(Scalar value) { return from_data({1}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
int64_t Tensor::rank() const { return static_cast<int64_t>(impl_->shape.size()); }

int64_t Tensor::dim(int64_t axis) const {
  const int64_t r = rank();
  const int64_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw AxisError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[a];
}

int64_t Tensor::numel() const { return static_cast<int64_t>(impl_->data.size()); }

std::span<const Scalar> Tensor::data() const { return impl_->data; }
std::span<Scalar> Tensor::mutable_data() { return impl_->data; }

Scalar Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Scalar Tensor::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int64_t>(index.size()) != rank()) {
    throw ShapeError("index rank mismatch for shape " + shape_str(shape()));
  }
  int64_t offset = 0;
  size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= impl_->shape[axis]) throw ShapeError("index out of range");
    offset = offset * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[offset];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const Scalar> Tensor::grad() const { return impl_->grad; }
std::span<Scalar> Tensor::mutable_grad() { return impl_->ensure_grad(); }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
  stack.emplace_back(impl_, 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& node = **it;
    if (!node.backward_fn) continue;
    if (!node.grad.empty()) node.backward_fn(node);
    node.backward_fn = nullptr;
    node.parents.clear();
    node.grad.clear();
    node.grad.shrink_to_fit();
  }
}

Tensor Tensor::detach() const {
  return Tensor(new_impl(impl_->shape, impl_->data, false));
}

namespace detail {

void check_finite(const std::vector<Scalar>& data, const char* op) {
  for (Scalar v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make_result(Shape shape, std::vector<Scalar> data, const std::vector<Tensor>& inputs,
                   std::function<void(TensorImpl&)> backward) {
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) needs_grad = needs_grad || (t.defined() && t.requires_grad());
  }
  check_finite(data, "tensor op");
  auto impl = new_impl(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    impl->parents.reserve(inputs.size());
    // Undefined optional inputs keep their slot so closures can index by position.
    for (const Tensor& t : inputs) {
      impl->parents.push_back(t.defined() ? t.impl_ptr() : std::make_shared<TensorImpl>());
    }
    impl->backward_fn = std::move(backward);
  }
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, std::vector<Scalar> data, std::initializer_list<Tensor> inputs,
                   std::function<void(TensorImpl&)> backward) {
  return make_result(std::move(shape), std::move(data), std::vector<Tensor>(inputs), std::move(backward));
}

}  // namespace detail

}  // namespace swinvftr
