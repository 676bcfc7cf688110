#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mst/util/error.hpp"

namespace mst::nn {

enum class NnErrc { ShapeMismatch, DegenerateSpatial, NonFinite };

std::string_view to_string(NnErrc code);

class NnError : public Error {
 public:
  NnError(NnErrc code, const std::string& message);
  [[nodiscard]] std::string_view code() const noexcept override { return to_string(errc_); }
  [[nodiscard]] NnErrc errc() const noexcept { return errc_; }

 private:
  NnErrc errc_;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major array. Float storage is the default; the double
// instantiation backs finite-difference checks.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw NnError(NnErrc::ShapeMismatch, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                               shape_string(shape_));
    }
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }
  [[nodiscard]] std::span<T> values() { return data_; }
  [[nodiscard]] std::span<const T> values() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 [N, C, H, W] element access.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[offset(n, c, h, w)]; }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const { return data_[offset(n, c, h, w)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape shape) {
    if (element_count(shape) != data_.size()) {
      throw NnError(NnErrc::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  BasicTensor& operator+=(const BasicTensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  template <typename U>
  [[nodiscard]] BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  void require_same_shape(const BasicTensor& other, const char* what) const {
    if (shape_ != other.shape_) {
      throw NnError(NnErrc::ShapeMismatch,
                    std::string(what) + ": shapes " + shape_string(shape_) + " and " + shape_string(other.shape_));
    }
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Throws NnError{ShapeMismatch} unless t has rank 4.
template <typename T>
void require_rank4(const BasicTensor<T>& t, const char* what) {
  if (t.rank() != 4) {
    throw NnError(NnErrc::ShapeMismatch, std::string(what) + ": expected [N,C,H,W], got " + shape_string(t.shape()));
  }
}

// Finiteness assertions after every layer op. On by default in builds
// without NDEBUG; tests switch them on explicitly.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
[[noreturn]] void throw_non_finite(const std::string& where);

template <typename T>
void check_finite(const BasicTensor<T>& t, const std::string& where) {
  if (finite_checks_enabled() && !t.all_finite()) throw_non_finite(where);
}

}  // namespace mst::nn
