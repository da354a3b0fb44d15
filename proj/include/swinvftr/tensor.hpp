#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "swinvftr/errors.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

using Shape = std::vector<int64_t>;
using Dims3 = std::array<int64_t, 3>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
std::string dims_str(const Dims3& dims);

struct TensorImpl;

/// Dense row-major f32 tensor with optional reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle; copies share storage. Ops in ops.hpp return
/// fresh tensors and, when grad mode is on and any input requires a gradient,
/// record a backward closure pointing at their inputs. Calling backward() on
/// a scalar result walks that recorded graph in reverse creation order.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Scalar> data, bool requires_grad = false);
  static Tensor scalar(Scalar value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const;
  /// Size of axis `axis`; negative values count from the back.
  int64_t dim(int64_t axis) const;
  int64_t numel() const;

  std::span<const Scalar> data() const;
  std::span<Scalar> mutable_data();
  Scalar item() const;
  Scalar at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const Scalar> grad() const;
  std::span<Scalar> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Seeds d(self)/d(self) = 1 and propagates. Requires a single-element tensor.
  /// The graph is released as it is consumed.
  void backward() const;

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  std::vector<Scalar> data;
  bool requires_grad = false;
  std::vector<Scalar> grad;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  std::vector<Scalar>& ensure_grad();
  TensorImpl& parent(size_t i) { return *parents[i]; }
};

/// Keeps freed tensor buffers in the heap instead of returning them to the OS
/// (glibc only; a no-op elsewhere). Training allocates and frees the same large
/// buffers every step, and mmap round trips otherwise dominate system time.
void retain_freed_memory();

/// Thread-local switch for graph recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Wraps a freshly computed buffer into a Tensor, attaching `backward` when
/// any of `inputs` requires a gradient. The closure receives the result node
/// (with its grad populated) and may read `node.parent(i)` in input order.
Tensor make_result(Shape shape, std::vector<Scalar> data, std::initializer_list<Tensor> inputs,
                   std::function<void(TensorImpl&)> backward);
Tensor make_result(Shape shape, std::vector<Scalar> data, const std::vector<Tensor>& inputs,
                   std::function<void(TensorImpl&)> backward);

void check_finite(const std::vector<Scalar>& data, const char* op);

}  // namespace detail

}  // namespace swinvftr
