#pragma once

// Mean-reduced losses. Each returns the scalar and its gradient with respect
// to the first argument.

#include <cmath>

#include "mst/nn/tensor.hpp"

namespace mst::nn {

template <typename T>
struct LossValue {
  double value = 0.0;
  BasicTensor<T> grad;
};

// mean((t - c)^2)
template <typename T>
LossValue<T> mse_to_constant(const BasicTensor<T>& t, double c) {
  if (t.size() == 0) throw NnError(NnErrc::ShapeMismatch, "mse_to_constant: empty tensor");
  const auto n = static_cast<double>(t.size());
  LossValue<T> out{0.0, BasicTensor<T>(t.shape())};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = static_cast<double>(t[i]) - c;
    out.value += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.value /= n;
  return out;
}

// mean(|a - b|); the subgradient at a == b is 0.
template <typename T>
LossValue<T> l1_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  a.require_same_shape(b, "l1_diff");
  if (a.size() == 0) throw NnError(NnErrc::ShapeMismatch, "l1_diff: empty tensor");
  const auto n = static_cast<double>(a.size());
  LossValue<T> out{0.0, BasicTensor<T>(a.shape())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    out.value += std::abs(d);
    out.grad[i] = static_cast<T>(d > 0 ? 1.0 / n : (d < 0 ? -1.0 / n : 0.0));
  }
  out.value /= n;
  return out;
}

}  // namespace mst::nn
