#include "mst/nn/adam.hpp"

#include <cmath>

namespace mst::nn {

void adam_step(std::span<Parameter<float>* const> params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw NnError(NnErrc::ShapeMismatch, "adam: optimizer tracks " + std::to_string(state.m.size()) +
                                             " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i];
    if (state.m[i].shape() != p.value.shape() || state.v[i].shape() != p.value.shape() ||
        p.grad.shape() != p.value.shape()) {
      throw NnError(NnErrc::ShapeMismatch, "adam: moment shape differs for " + p.name);
    }
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = c.lr * (mj / correct1) / (std::sqrt(vj / correct2) + c.eps);
      p.value[j] = static_cast<float>(p.value[j] - update);
    }
  }
}

}  // namespace mst::nn
