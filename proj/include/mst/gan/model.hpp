#pragma once

// The two-domain model: A = negative, B = positive sentiment.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mst/gan/network.hpp"
#include "mst/nn/adam.hpp"
#include "mst/roll/pianoroll.hpp"

namespace mst::gan {

enum class Direction { AtoB, BtoA };

struct CycleGanModel {
  static constexpr std::size_t kNetworks = 6;

  ArchitectureConfig arch;
  Network g_ab, g_ba;    // generators
  Network d_a, d_b;      // domain discriminators
  Network d_a_m, d_b_m;  // mixed-pool discriminators
  std::array<nn::AdamState, kNetworks> optimizers;  // same order as networks()

  // Networks are initialised from independent streams of `seed`.
  static CycleGanModel create(const ArchitectureConfig& arch, std::uint64_t seed, const nn::AdamConfig& adam = {});

  std::array<Network*, kNetworks> networks() { return {&g_ab, &g_ba, &d_a, &d_b, &d_a_m, &d_b_m}; }
  [[nodiscard]] std::array<const Network*, kNetworks> networks() const {
    return {&g_ab, &g_ba, &d_a, &d_b, &d_a_m, &d_b_m};
  }
};

// [N, 1, 64, 84] batch from phrases (cells as 0/1 floats).
nn::Tensor to_batch(std::span<const roll::PianoRollPhrase> phrases);
nn::Tensor to_batch(std::span<const roll::PianoRollPhrase* const> phrases);

// Generator forward, binarised at 0.5. Deterministic for fixed weights.
roll::PianoRollPhrase transfer(const CycleGanModel& model, const roll::PianoRollPhrase& phrase, Direction direction);
std::vector<roll::PianoRollPhrase> transfer(const CycleGanModel& model, std::span<const roll::PianoRollPhrase> phrases,
                                            Direction direction);

struct GeneratorLosses {
  double adv_a = 0.0;    // mse(D_a(G_ba(y)), 1)
  double adv_b = 0.0;    // mse(D_b(G_ab(x)), 1)
  double cycle_a = 0.0;  // l1(G_ba(G_ab(x)), x)
  double cycle_b = 0.0;  // l1(G_ab(G_ba(y)), y)
  double mixed_a = 0.0;  // mse(D_a_m(G_ba(y)), 1)
  double mixed_b = 0.0;  // mse(D_b_m(G_ab(x)), 1)
  double total = 0.0;    // adv + lambda * cycle + gamma * mixed
};

struct DiscriminatorLosses {
  double d_a = 0.0;    // (mse(D_a(x), 1) + mse(D_a(fake_a), 0)) / 2
  double d_b = 0.0;
  double d_a_m = 0.0;  // (mse(D_a_m(m), 1) + mse(D_a_m(fake_a), 0)) / 2
  double d_b_m = 0.0;
  double total = 0.0;  // d_a + d_b + gamma * (d_a_m + d_b_m)
};

// Generator outputs for one batch together with the saved state needed to
// backpropagate through them. fake_b = G_ab(x), fake_a = G_ba(y).
struct GeneratorPass {
  nn::Tensor fake_a, fake_b;
  nn::SavedTensors<float> saved_ab, saved_ba;
};

GeneratorPass run_generators(const CycleGanModel& model, const nn::Tensor& batch_a, const nn::Tensor& batch_b);

// L_G. With accumulate_grads, adds dL_G into the generators' parameter
// gradients; discriminator gradients are never touched. Consumes `pass`.
GeneratorLosses generator_losses(CycleGanModel& model, const nn::Tensor& batch_a, const nn::Tensor& batch_b,
                                 GeneratorPass pass, double lambda, double gamma, bool accumulate_grads);
GeneratorLosses generator_losses(CycleGanModel& model, const nn::Tensor& batch_a, const nn::Tensor& batch_b,
                                 double lambda, double gamma, bool accumulate_grads = true);

// Discriminator objective on detached fakes. With accumulate_grads, adds the
// gradient of the total into the four discriminators' parameter gradients.
DiscriminatorLosses discriminator_losses(CycleGanModel& model, const nn::Tensor& batch_a, const nn::Tensor& batch_b,
                                         const nn::Tensor& batch_m, const nn::Tensor& fake_a,
                                         const nn::Tensor& fake_b, double gamma, bool accumulate_grads);
DiscriminatorLosses discriminator_losses(CycleGanModel& model, const nn::Tensor& batch_a, const nn::Tensor& batch_b,
                                         const nn::Tensor& batch_m, double gamma, bool accumulate_grads = true);

}  // namespace mst::gan
