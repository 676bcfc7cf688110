#pragma once

// Generator and discriminator networks for 1x64x84 piano-roll tensors.

#include <cstdint>
#include <string>
#include <vector>

#include "mst/nn/layers.hpp"
#include "mst/util/error.hpp"
#include "mst/util/kv_config.hpp"

namespace mst::gan {

enum class GanErrc {
  EmptyDataset,
  NonFiniteLoss,
  ShapeMismatch,
  BadConfig,
  IoFailure,
  BadMagic,
  VersionMismatch,
  CorruptCheckpoint,
  NoCheckpoint,
};

std::string_view to_string(GanErrc code);

class GanError : public Error {
 public:
  GanError(GanErrc code, const std::string& message);
  [[nodiscard]] std::string_view code() const noexcept override { return to_string(errc_); }
  [[nodiscard]] GanErrc errc() const noexcept { return errc_; }

 private:
  GanErrc errc_;
};

// Layer widths. The generator goes f -> 2f -> 4f channels through two
// stride-2 convs; the discriminator uses the same widths.
struct ArchitectureConfig {
  std::size_t base_filters = 64;
  std::size_t residual_blocks = 6;
  std::size_t edge_kernel = 7;      // first and last generator conv; odd
  std::size_t residual_kernel = 3;  // convs inside the residual blocks; odd
  std::size_t score_kernel = 3;     // final discriminator conv; odd

  void validate() const;  // throws GanError{BadConfig}
  void store(KvConfig& kv) const;
  static ArchitectureConfig load(const KvConfig& kv);  // throws GanError{BadConfig}
  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

// A named stack of layers. An empty stack is the identity map.
class Network {
 public:
  Network() = default;
  explicit Network(std::string name) : name_(std::move(name)) {}

  nn::Tensor forward(const nn::Tensor& x, nn::SavedTensors<float>* saved) const { return body_.forward(x, saved); }
  nn::Tensor backward(const nn::Tensor& dy, nn::SavedTensors<float>& saved, nn::ParamGrads mode) {
    return body_.backward(dy, saved, mode);
  }
  std::vector<nn::Parameter<float>*> parameters() { return body_.parameters(); }
  [[nodiscard]] std::vector<const nn::Parameter<float>*> parameters() const;
  void zero_grads() { nn::zero_grads(body_); }

  [[nodiscard]] const std::string& name() const { return name_; }
  nn::Sequential<float>& body() { return body_; }
  [[nodiscard]] std::string describe() const { return body_.describe(); }

 private:
  std::string name_;
  nn::Sequential<float> body_;
};

// conv(edge) -> IN -> ReLU; 2 x [conv k3 s2 p1 -> IN -> ReLU];
// R residual blocks (residual_kernel); 2 x [convT k4 s2 p1 -> IN -> ReLU];
// conv(edge) -> sigmoid.
Network make_generator(const std::string& name, const ArchitectureConfig& arch, Rng& rng);

// conv k4 s2 p1 -> leaky; 2 x [conv k4 s2 p1 -> IN -> leaky]; same-size
// conv(score_kernel) -> 1 channel. A 64x84 input gives an 8x10 map of
// least-squares scores; a wider score kernel widens each patch's view.
Network make_discriminator(const std::string& name, const ArchitectureConfig& arch, Rng& rng);

}  // namespace mst::gan
