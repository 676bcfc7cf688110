#pragma once

// Layers with explicit forward/backward passes.
//
// A layer may be applied several times before any backward pass (a generator
// runs on both the real batch and the reconstruction path), so the state a
// backward pass needs is not kept in the layer. forward() pushes it onto a
// caller-owned SavedTensors stack and backward() pops it; calls must unwind
// in reverse order. Passing a null stack runs inference only.
//
// Everything is templated on the scalar type: float is the training type,
// double gives a bit-for-bit equivalent shadow for finite differences.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mst/nn/kernels.hpp"
#include "mst/nn/tensor.hpp"
#include "mst/util/rng.hpp"

namespace mst::nn {

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;  // always the shape of value

  Parameter(std::string n, BasicTensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename T>
class SavedTensors {
 public:
  struct Entry {
    BasicTensor<T> tensor;
    std::vector<double> aux;
  };

  void push(BasicTensor<T> t, std::vector<double> aux = {}) { stack_.push_back({std::move(t), std::move(aux)}); }
  Entry pop() {
    if (stack_.empty()) throw NnError(NnErrc::ShapeMismatch, "backward called without a matching forward");
    Entry e = std::move(stack_.back());
    stack_.pop_back();
    return e;
  }
  [[nodiscard]] bool empty() const { return stack_.empty(); }
  [[nodiscard]] std::size_t size() const { return stack_.size(); }

 private:
  std::vector<Entry> stack_;
};

// Whether backward() adds into parameter gradients or only propagates the
// input gradient (used to route a loss through a network that must not learn
// from it, e.g. a discriminator during the generator step).
enum class ParamGrads { Accumulate, Skip };

template <typename T>
class BasicLayer {
 public:
  virtual ~BasicLayer() = default;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) = 0;
  virtual void collect_parameters(std::vector<Parameter<T>*>& /*out*/) {}
  [[nodiscard]] virtual std::string describe() const = 0;

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    collect_parameters(out);
    return out;
  }
};

template <typename T>
class Conv2d final : public BasicLayer<T> {
 public:
  // Weights ~ N(0, 0.02), bias 0.
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel, ConvGeometry g,
         Rng& rng);
  BasicTensor<T> forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const override;
  BasicTensor<T> backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  [[nodiscard]] std::string describe() const override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::string name_;
  ConvGeometry geometry_;
  Parameter<T> weight_;  // [C_out, C_in, K, K]
  Parameter<T> bias_;
};

template <typename T>
class ConvTranspose2d final : public BasicLayer<T> {
 public:
  ConvTranspose2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  ConvGeometry g, Rng& rng);
  BasicTensor<T> forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const override;
  BasicTensor<T> backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  [[nodiscard]] std::string describe() const override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::string name_;
  ConvGeometry geometry_;
  Parameter<T> weight_;  // [C_in, C_out, K, K]
  Parameter<T> bias_;
};

template <typename T>
class InstanceNorm2d final : public BasicLayer<T> {
 public:
  static constexpr double kDefaultEps = 1e-5;

  InstanceNorm2d(std::string name, std::size_t channels, double eps = kDefaultEps);
  BasicTensor<T> forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const override;
  BasicTensor<T> backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&scale_);
    out.push_back(&shift_);
  }
  [[nodiscard]] std::string describe() const override;

  Parameter<T>& scale() { return scale_; }
  Parameter<T>& shift() { return shift_; }

 private:
  std::string name_;
  double eps_;
  Parameter<T> scale_;
  Parameter<T> shift_;
};

enum class Activation { ReLU, LeakyReLU, Sigmoid, Tanh };

template <typename T>
class ActivationLayer final : public BasicLayer<T> {
 public:
  static constexpr double kDefaultLeak = 0.2;

  explicit ActivationLayer(Activation kind, double leak = kDefaultLeak) : kind_(kind), leak_(leak) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const override;
  BasicTensor<T> backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) override;
  [[nodiscard]] std::string describe() const override;

 private:
  Activation kind_;
  double leak_;
};

template <typename T>
class Sequential final : public BasicLayer<T> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void append(std::unique_ptr<BasicLayer<T>> layer) { layers_.push_back(std::move(layer)); }

  BasicTensor<T> forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const override;
  BasicTensor<T> backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  [[nodiscard]] std::string describe() const override;
  [[nodiscard]] std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<BasicLayer<T>>> layers_;
};

// y = x + IN(conv(ReLU(IN(conv(x))))), same-size convs with an odd kernel,
// channel count preserved.
template <typename T>
class ResidualBlock final : public BasicLayer<T> {
 public:
  ResidualBlock(const std::string& name, std::size_t channels, Rng& rng, std::size_t kernel = 3);
  BasicTensor<T> forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const override;
  BasicTensor<T> backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override { body_.collect_parameters(out); }
  [[nodiscard]] std::string describe() const override;

 private:
  std::string name_;
  Sequential<T> body_;
};

using Layer = BasicLayer<float>;

// Copies parameter values between two structurally identical layers (e.g. a
// float network and its double shadow). Throws ShapeMismatch otherwise.
template <typename From, typename To>
void copy_parameters(BasicLayer<From>& from, BasicLayer<To>& to) {
  auto src = from.parameters();
  auto dst = to.parameters();
  if (src.size() != dst.size()) throw NnError(NnErrc::ShapeMismatch, "parameter count differs");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->value.shape() != dst[i]->value.shape()) {
      throw NnError(NnErrc::ShapeMismatch, "parameter " + src[i]->name + " shape differs");
    }
    dst[i]->value = src[i]->value.template cast<To>();
  }
}

template <typename T>
void zero_grads(BasicLayer<T>& layer) {
  for (auto* p : layer.parameters()) p->grad.fill(T{0});
}

}  // namespace mst::nn
