#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ctxenc/errors.hpp"
#include "ctxenc/rng.hpp"

namespace ctxenc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

/// Dense tensor with shared storage and optional gradient buffer.
///
/// Handles have shared-reference semantics: copying a TensorT yields another
/// view of the same storage, which is what the tape's backward closures rely
/// on. Gradients live next to the values and accumulate additively.
template <class S>
class TensorT {
 public:
  using scalar_type = S;

  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    TensorT t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->value.assign(shape_numel(t.impl_->shape), S(0));
    t.set_requires_grad(requires_grad);
    return t;
  }

  static TensorT full(Shape shape, S fill, bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (S& v : t.impl_->value) v = fill;
    return t;
  }

  static TensorT ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), S(1), requires_grad);
  }

  static TensorT scalar(S value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }

  static TensorT from_values(Shape shape, std::vector<S> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_to_string(shape) + " expects " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    TensorT t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->value = std::move(values);
    t.set_requires_grad(requires_grad);
    return t;
  }

  /// Entries drawn i.i.d. from Uniform(lo, hi). Draws happen in double
  /// precision so the same seed yields the same sequence at any precision.
  static TensorT uniform(Shape shape, Rng& rng, double lo, double hi,
                         bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (S& v : t.impl_->value) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->value.size(); }

  std::span<S> values() { return impl_->value; }
  std::span<const S> values() const { return impl_->value; }

  std::span<S> grad() { return impl_->grad; }
  std::span<const S> grad() const { return impl_->grad; }

  S& at(std::size_t i) { return impl_->value[i]; }
  S at(std::size_t i) const { return impl_->value[i]; }

  /// Row-major access for rank-2 tensors.
  S& at(std::size_t i, std::size_t j) { return impl_->value[i * impl_->shape[1] + j]; }
  S at(std::size_t i, std::size_t j) const { return impl_->value[i * impl_->shape[1] + j]; }

  /// Value of a scalar tensor.
  S item() const {
    if (numel() != 1) {
      throw ContractViolation("item() requires a scalar tensor, got shape " +
                              shape_to_string(shape()));
    }
    return impl_->value[0];
  }

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }

  TensorT& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) {
      impl_->grad.assign(impl_->value.size(), S(0));
    } else {
      impl_->grad.clear();
    }
    return *this;
  }

  void zero_grad() {
    for (S& g : impl_->grad) g = S(0);
  }

  /// True when both handles view the same storage.
  bool same_storage(const TensorT& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty unless requires_grad
    bool requires_grad = false;
  };

  std::shared_ptr<Impl> impl_;
};

/// Reverse-mode tape. Ops executed while a tape is active on the current
/// thread record a backward step; backward() replays them in reverse order.
///
/// A tape is single-threaded by construction: it registers itself as the
/// current tape for the creating thread only.
template <class S>
class TapeT {
 public:
  TapeT() : parent_(current_) { current_ = this; }

  ~TapeT() { current_ = parent_; }

  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* current() noexcept { return current_; }

  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

  std::size_t size() const noexcept { return steps_.size(); }

  /// Seeds the loss gradient and replays the recorded steps in reverse.
  /// The tape is cleared afterwards; one forward pass per backward pass.
  void backward(TensorT<S> loss, S seed = S(1)) {
    if (loss.numel() != 1) {
      throw ContractViolation("backward requires a scalar loss, got shape " +
                              shape_to_string(loss.shape()));
    }
    if (loss.requires_grad()) {
      loss.grad()[0] += seed;
    }
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
      (*it)();
    }
    steps_.clear();
  }

 private:
  static thread_local TapeT* current_;

  TapeT* parent_;
  std::vector<std::function<void()>> steps_;
};

template <class S>
thread_local TapeT<S>* TapeT<S>::current_ = nullptr;

using Tensor = TensorT<double>;
using Tape = TapeT<double>;

}  // namespace ctxenc
