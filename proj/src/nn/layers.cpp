#include "mst/nn/layers.hpp"

#include <cmath>

namespace mst::nn {

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
BasicTensor<T> normal_tensor(Shape shape, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(kInitStd * rng.normal());
  return t;
}

template <typename T>
void accumulate(BasicTensor<T>& into, const BasicTensor<T>& delta) {
  into += delta;
}

std::string geometry_string(std::size_t k, ConvGeometry g) {
  return "k" + std::to_string(k) + " s" + std::to_string(g.stride) + " p" + std::to_string(g.pad);
}

}  // namespace

// --- Conv2d -----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  ConvGeometry g, Rng& rng)
    : name_(std::move(name)),
      geometry_(g),
      weight_(name_ + ".weight", normal_tensor<T>({out_channels, in_channels, kernel, kernel}, rng)),
      bias_(name_ + ".bias", BasicTensor<T>({out_channels})) {}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const {
  BasicTensor<T> y = kernels::conv2d_forward(x, weight_.value, &bias_.value, geometry_);
  check_finite(y, name_);
  if (saved != nullptr) saved->push(x);
  return y;
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) {
  const BasicTensor<T> x = saved.pop().tensor;
  if (mode == ParamGrads::Accumulate) {
    auto grads = kernels::conv2d_backward_weights(x, dy, weight_.value.dim(2), geometry_);
    accumulate(weight_.grad, grads.weight);
    accumulate(bias_.grad, grads.bias);
  }
  BasicTensor<T> dx = kernels::conv2d_backward_data(dy, weight_.value, x.dim(2), x.dim(3), geometry_);
  check_finite(dx, name_ + " backward");
  return dx;
}

template <typename T>
std::string Conv2d<T>::describe() const {
  return name_ + ": conv " + std::to_string(weight_.value.dim(1)) + "->" + std::to_string(weight_.value.dim(0)) + " " +
         geometry_string(weight_.value.dim(2), geometry_);
}

// --- ConvTranspose2d --------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                                    std::size_t kernel, ConvGeometry g, Rng& rng)
    : name_(std::move(name)),
      geometry_(g),
      weight_(name_ + ".weight", normal_tensor<T>({in_channels, out_channels, kernel, kernel}, rng)),
      bias_(name_ + ".bias", BasicTensor<T>({out_channels})) {}

template <typename T>
BasicTensor<T> ConvTranspose2d<T>::forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const {
  BasicTensor<T> y = conv2d_transpose_forward(x, weight_.value, &bias_.value, geometry_);
  check_finite(y, name_);
  if (saved != nullptr) saved->push(x);
  return y;
}

template <typename T>
BasicTensor<T> ConvTranspose2d<T>::backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) {
  const BasicTensor<T> x = saved.pop().tensor;
  if (mode == ParamGrads::Accumulate) {
    auto grads = conv2d_transpose_backward_weights(x, dy, weight_.value.dim(2), geometry_);
    accumulate(weight_.grad, grads.weight);
    accumulate(bias_.grad, grads.bias);
  }
  BasicTensor<T> dx = conv2d_transpose_backward_data(dy, weight_.value, geometry_);
  check_finite(dx, name_ + " backward");
  return dx;
}

template <typename T>
std::string ConvTranspose2d<T>::describe() const {
  return name_ + ": convT " + std::to_string(weight_.value.dim(0)) + "->" + std::to_string(weight_.value.dim(1)) +
         " " + geometry_string(weight_.value.dim(2), geometry_);
}

// --- InstanceNorm2d ---------------------------------------------------------

template <typename T>
InstanceNorm2d<T>::InstanceNorm2d(std::string name, std::size_t channels, double eps)
    : name_(std::move(name)),
      eps_(eps),
      scale_(name_ + ".scale", BasicTensor<T>({channels}, T{1})),
      shift_(name_ + ".shift", BasicTensor<T>({channels})) {}

template <typename T>
BasicTensor<T> InstanceNorm2d<T>::forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const {
  if (x.rank() == 4 && x.dim(1) != scale_.value.size()) {
    throw NnError(NnErrc::ShapeMismatch, name_ + ": expected " + std::to_string(scale_.value.size()) +
                                             " channels, got " + std::to_string(x.dim(1)));
  }
  InstanceNormCache<T> cache;
  BasicTensor<T> y =
      kernels::instance_norm_forward(x, scale_.value, shift_.value, eps_, saved != nullptr ? &cache : nullptr);
  check_finite(y, name_);
  if (saved != nullptr) saved->push(std::move(cache.normalized), std::move(cache.inv_std));
  return y;
}

template <typename T>
BasicTensor<T> InstanceNorm2d<T>::backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) {
  auto entry = saved.pop();
  InstanceNormCache<T> cache{std::move(entry.tensor), std::move(entry.aux)};
  auto grads = kernels::instance_norm_backward(dy, cache, scale_.value);
  if (mode == ParamGrads::Accumulate) {
    accumulate(scale_.grad, grads.scale);
    accumulate(shift_.grad, grads.shift);
  }
  check_finite(grads.input, name_ + " backward");
  return std::move(grads.input);
}

template <typename T>
std::string InstanceNorm2d<T>::describe() const {
  return name_ + ": instance norm " + std::to_string(scale_.value.size());
}

// --- Activations ------------------------------------------------------------

template <typename T>
BasicTensor<T> ActivationLayer<T>::forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const {
  BasicTensor<T> y(x.shape());
  const auto in = x.values();
  auto out = y.values();
  const T leak = static_cast<T>(leak_);
  switch (kind_) {
    case Activation::ReLU:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
      break;
    case Activation::LeakyReLU:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : leak * in[i];
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) {
        // Evaluated on the side where exp cannot overflow.
        if (in[i] >= T{0}) {
          out[i] = T{1} / (T{1} + std::exp(-in[i]));
        } else {
          const T e = std::exp(in[i]);
          out[i] = e / (T{1} + e);
        }
      }
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      break;
  }
  check_finite(y, describe());
  if (saved != nullptr) {
    // ReLU-family derivatives need the input sign, the smooth ones their output.
    const bool keep_input = kind_ == Activation::ReLU || kind_ == Activation::LeakyReLU;
    saved->push(keep_input ? x : y);
  }
  return y;
}

template <typename T>
BasicTensor<T> ActivationLayer<T>::backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads) {
  const BasicTensor<T> s = saved.pop().tensor;
  s.require_same_shape(dy, "activation backward");
  BasicTensor<T> dx(dy.shape());
  const auto v = s.values();
  const auto g = dy.values();
  auto out = dx.values();
  const T leak = static_cast<T>(leak_);
  switch (kind_) {
    case Activation::ReLU:
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > T{0} ? g[i] : T{0};
      break;
    case Activation::LeakyReLU:
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > T{0} ? g[i] : leak * g[i];
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = g[i] * v[i] * (T{1} - v[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = g[i] * (T{1} - v[i] * v[i]);
      break;
  }
  check_finite(dx, describe() + " backward");
  return dx;
}

template <typename T>
std::string ActivationLayer<T>::describe() const {
  switch (kind_) {
    case Activation::ReLU: return "relu";
    case Activation::LeakyReLU: return "leaky_relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "activation";
}

// --- Sequential -------------------------------------------------------------

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const {
  BasicTensor<T> h = x;
  for (const auto& layer : layers_) h = layer->forward(h, saved);
  return h;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) {
  BasicTensor<T> g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g, saved, mode);
  return g;
}

template <typename T>
void Sequential<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  for (auto& layer : layers_) layer->collect_parameters(out);
}

template <typename T>
std::string Sequential<T>::describe() const {
  std::string out;
  for (const auto& layer : layers_) {
    if (!out.empty()) out += '\n';
    out += layer->describe();
  }
  return out;
}

// --- ResidualBlock ----------------------------------------------------------

template <typename T>
ResidualBlock<T>::ResidualBlock(const std::string& name, std::size_t channels, Rng& rng, std::size_t kernel)
    : name_(name) {
  if (kernel % 2 == 0) throw NnError(NnErrc::ShapeMismatch, name + ": residual kernel must be odd");
  const ConvGeometry same{1, kernel / 2};
  body_.template add<Conv2d<T>>(name + ".conv1", channels, channels, kernel, same, rng);
  body_.template add<InstanceNorm2d<T>>(name + ".norm1", channels);
  body_.template add<ActivationLayer<T>>(Activation::ReLU);
  body_.template add<Conv2d<T>>(name + ".conv2", channels, channels, kernel, same, rng);
  body_.template add<InstanceNorm2d<T>>(name + ".norm2", channels);
}

template <typename T>
BasicTensor<T> ResidualBlock<T>::forward(const BasicTensor<T>& x, SavedTensors<T>* saved) const {
  BasicTensor<T> y = body_.forward(x, saved);
  y += x;
  return y;
}

template <typename T>
BasicTensor<T> ResidualBlock<T>::backward(const BasicTensor<T>& dy, SavedTensors<T>& saved, ParamGrads mode) {
  BasicTensor<T> dx = body_.backward(dy, saved, mode);
  dx += dy;
  return dx;
}

template <typename T>
std::string ResidualBlock<T>::describe() const {
  return name_ + ": residual block";
}

template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class InstanceNorm2d<float>;
template class InstanceNorm2d<double>;
template class ActivationLayer<float>;
template class ActivationLayer<double>;
template class Sequential<float>;
template class Sequential<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;

}  // namespace mst::nn
