#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mst/nn/layers.hpp"

namespace mst::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // one per parameter, created on the first step
  std::vector<Tensor> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Bias-corrected Adam update of every parameter from its grad. Grads are not
// cleared. Throws ShapeMismatch if the moments do not line up with params.
void adam_step(std::span<Parameter<float>* const> params, AdamState& state);

}  // namespace mst::nn
