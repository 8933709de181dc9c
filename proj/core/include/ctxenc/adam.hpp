#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctxenc/errors.hpp"
#include "ctxenc/tensor.hpp"

namespace ctxenc {

template <class S>
struct AdamOptionsT {
  S learning_rate = S(1e-3);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S epsilon = S(1e-8);
};

/// Adam with bias correction. Binds to a fixed set of parameter tensors;
/// step() consumes their accumulated gradients and clears them.
template <class S>
class AdamT {
 public:
  explicit AdamT(std::vector<TensorT<S>> params, AdamOptionsT<S> options = {})
      : params_(std::move(params)), options_(options) {
    first_moment_.reserve(params_.size());
    second_moment_.reserve(params_.size());
    for (const TensorT<S>& p : params_) {
      first_moment_.emplace_back(p.numel(), S(0));
      second_moment_.emplace_back(p.numel(), S(0));
    }
  }

  void step() {
    ++step_count_;
    const S bias1 = S(1) - std::pow(options_.beta1, static_cast<S>(step_count_));
    const S bias2 = S(1) - std::pow(options_.beta2, static_cast<S>(step_count_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      TensorT<S>& p = params_[k];
      if (p.numel() != first_moment_[k].size()) {
        throw DimensionError("adam: parameter " + std::to_string(k) + " changed size from " +
                             std::to_string(first_moment_[k].size()) + " to " +
                             std::to_string(p.numel()));
      }
      auto grad = p.grad();
      auto value = p.values();
      std::vector<S>& m = first_moment_[k];
      std::vector<S>& v = second_moment_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const S g = grad[i];
        m[i] = options_.beta1 * m[i] + (S(1) - options_.beta1) * g;
        v[i] = options_.beta2 * v[i] + (S(1) - options_.beta2) * g * g;
        const S m_hat = m[i] / bias1;
        const S v_hat = v[i] / bias2;
        value[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      }
      p.zero_grad();
    }
  }

  std::uint64_t step_count() const noexcept { return step_count_; }
  const AdamOptionsT<S>& options() const noexcept { return options_; }

  std::span<const S> first_moment(std::size_t k) const { return first_moment_.at(k); }
  std::span<const S> second_moment(std::size_t k) const { return second_moment_.at(k); }

 private:
  std::vector<TensorT<S>> params_;
  AdamOptionsT<S> options_;
  std::vector<std::vector<S>> first_moment_;
  std::vector<std::vector<S>> second_moment_;
  std::uint64_t step_count_ = 0;
};

using AdamOptions = AdamOptionsT<double>;
using Adam = AdamT<double>;

}  // namespace ctxenc
