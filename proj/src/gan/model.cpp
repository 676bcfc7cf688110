#include "mst/gan/model.hpp"

#include <cmath>

#include "mst/nn/losses.hpp"

namespace mst::gan {

using nn::ParamGrads;
using nn::SavedTensors;
using nn::Tensor;

CycleGanModel CycleGanModel::create(const ArchitectureConfig& arch, std::uint64_t seed, const nn::AdamConfig& adam) {
  arch.validate();
  CycleGanModel m;
  m.arch = arch;
  std::uint64_t stream = 0;
  auto rng = [&] { return Rng(mix_seed(seed, stream++)); };
  {
    Rng r = rng();
    m.g_ab = make_generator("g_ab", arch, r);
  }
  {
    Rng r = rng();
    m.g_ba = make_generator("g_ba", arch, r);
  }
  {
    Rng r = rng();
    m.d_a = make_discriminator("d_a", arch, r);
  }
  {
    Rng r = rng();
    m.d_b = make_discriminator("d_b", arch, r);
  }
  {
    Rng r = rng();
    m.d_a_m = make_discriminator("d_a_m", arch, r);
  }
  {
    Rng r = rng();
    m.d_b_m = make_discriminator("d_b_m", arch, r);
  }
  for (auto& opt : m.optimizers) opt.config = adam;
  return m;
}

namespace {

template <typename Get>
Tensor batch_from(std::size_t count, Get&& get) {
  Tensor t({count, 1, roll::kSteps, roll::kPitches});
  for (std::size_t i = 0; i < count; ++i) {
    const auto cells = get(i).cells();
    float* dst = t.data() + i * roll::kCells;
    for (std::size_t j = 0; j < roll::kCells; ++j) dst[j] = static_cast<float>(cells[j]);
  }
  return t;
}

void require_phrase_batch(const Tensor& t, const char* what) {
  if (t.rank() != 4 || t.dim(1) != 1 || t.dim(2) != roll::kSteps || t.dim(3) != roll::kPitches) {
    throw GanError(GanErrc::ShapeMismatch, std::string(what) + ": expected [N, 1, 64, 84], got " +
                                               nn::shape_string(t.shape()));
  }
}

void require_pair(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || a.shape() != b.shape()) {
    throw GanError(GanErrc::ShapeMismatch, "domain batches must share one [N, C, H, W] shape, got " +
                                               nn::shape_string(a.shape()) + " and " + nn::shape_string(b.shape()));
  }
}

Tensor scaled(const Tensor& t, double s) {
  Tensor out = t;
  for (auto& v : out.values()) v = static_cast<float>(v * s);
  return out;
}

void require_finite(double value, const char* component) {
  if (!std::isfinite(value)) throw GanError(GanErrc::NonFiniteLoss, std::string("loss component ") + component + " is not finite");
}

}  // namespace

Tensor to_batch(std::span<const roll::PianoRollPhrase> phrases) {
  return batch_from(phrases.size(), [&](std::size_t i) -> const roll::PianoRollPhrase& { return phrases[i]; });
}

Tensor to_batch(std::span<const roll::PianoRollPhrase* const> phrases) {
  return batch_from(phrases.size(), [&](std::size_t i) -> const roll::PianoRollPhrase& { return *phrases[i]; });
}

std::vector<roll::PianoRollPhrase> transfer(const CycleGanModel& model, std::span<const roll::PianoRollPhrase> phrases,
                                            Direction direction) {
  std::vector<roll::PianoRollPhrase> out;
  if (phrases.empty()) return out;
  const Network& g = direction == Direction::AtoB ? model.g_ab : model.g_ba;
  const Tensor y = g.forward(to_batch(phrases), nullptr);
  require_phrase_batch(y, "transfer output");
  out.reserve(phrases.size());
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    out.push_back(roll::binarize(y.values().subspan(i * roll::kCells, roll::kCells)));
  }
  return out;
}

roll::PianoRollPhrase transfer(const CycleGanModel& model, const roll::PianoRollPhrase& phrase, Direction direction) {
  return transfer(model, std::span<const roll::PianoRollPhrase>(&phrase, 1), direction).front();
}

GeneratorPass run_generators(const CycleGanModel& model, const Tensor& batch_a, const Tensor& batch_b) {
  require_pair(batch_a, batch_b);
  GeneratorPass pass;
  pass.fake_b = model.g_ab.forward(batch_a, &pass.saved_ab);
  pass.fake_a = model.g_ba.forward(batch_b, &pass.saved_ba);
  return pass;
}

GeneratorLosses generator_losses(CycleGanModel& model, const Tensor& batch_a, const Tensor& batch_b,
                                 GeneratorPass pass, double lambda, double gamma, bool accumulate_grads) {
  require_pair(batch_a, batch_b);
  SavedTensors<float> rec_a_s, rec_b_s, adv_a_s, adv_b_s, mix_a_s, mix_b_s;
  auto tape = [&](SavedTensors<float>& s) { return accumulate_grads ? &s : nullptr; };

  const Tensor rec_a = model.g_ba.forward(pass.fake_b, tape(rec_a_s));
  const Tensor rec_b = model.g_ab.forward(pass.fake_a, tape(rec_b_s));
  const auto adv_b = nn::mse_to_constant(model.d_b.forward(pass.fake_b, tape(adv_b_s)), 1.0);
  const auto adv_a = nn::mse_to_constant(model.d_a.forward(pass.fake_a, tape(adv_a_s)), 1.0);
  const auto mix_b = nn::mse_to_constant(model.d_b_m.forward(pass.fake_b, tape(mix_b_s)), 1.0);
  const auto mix_a = nn::mse_to_constant(model.d_a_m.forward(pass.fake_a, tape(mix_a_s)), 1.0);
  const auto cyc_a = nn::l1_diff(rec_a, batch_a);
  const auto cyc_b = nn::l1_diff(rec_b, batch_b);

  GeneratorLosses out;
  out.adv_a = adv_a.value;
  out.adv_b = adv_b.value;
  out.cycle_a = cyc_a.value;
  out.cycle_b = cyc_b.value;
  out.mixed_a = mix_a.value;
  out.mixed_b = mix_b.value;
  out.total = (out.adv_a + out.adv_b) + lambda * (out.cycle_a + out.cycle_b) + gamma * (out.mixed_a + out.mixed_b);
  require_finite(out.adv_a, "adv_a");
  require_finite(out.adv_b, "adv_b");
  require_finite(out.cycle_a, "cycle_a");
  require_finite(out.cycle_b, "cycle_b");
  require_finite(out.mixed_a, "mixed_a");
  require_finite(out.mixed_b, "mixed_b");
  if (!accumulate_grads) return out;

  // Gradients reach the fakes through the discriminators (parameters frozen)
  // and through the reconstruction pass of the opposite generator.
  Tensor d_fake_b = model.d_b.backward(adv_b.grad, adv_b_s, ParamGrads::Skip);
  Tensor d_fake_a = model.d_a.backward(adv_a.grad, adv_a_s, ParamGrads::Skip);
  if (gamma != 0.0) {
    d_fake_b += model.d_b_m.backward(scaled(mix_b.grad, gamma), mix_b_s, ParamGrads::Skip);
    d_fake_a += model.d_a_m.backward(scaled(mix_a.grad, gamma), mix_a_s, ParamGrads::Skip);
  }
  if (lambda != 0.0) {
    d_fake_b += model.g_ba.backward(scaled(cyc_a.grad, lambda), rec_a_s, ParamGrads::Accumulate);
    d_fake_a += model.g_ab.backward(scaled(cyc_b.grad, lambda), rec_b_s, ParamGrads::Accumulate);
  }
  model.g_ab.backward(d_fake_b, pass.saved_ab, ParamGrads::Accumulate);
  model.g_ba.backward(d_fake_a, pass.saved_ba, ParamGrads::Accumulate);
  return out;
}

GeneratorLosses generator_losses(CycleGanModel& model, const Tensor& batch_a, const Tensor& batch_b, double lambda,
                                 double gamma, bool accumulate_grads) {
  return generator_losses(model, batch_a, batch_b, run_generators(model, batch_a, batch_b), lambda, gamma,
                          accumulate_grads);
}

namespace {

// (mse(D(real), 1) + mse(D(fake), 0)) / 2, optionally backpropagated with weight.
double discriminator_term(Network& d, const Tensor& real, const Tensor& fake, double weight, bool accumulate_grads,
                          const char* component) {
  SavedTensors<float> real_s, fake_s;
  const auto on_real = nn::mse_to_constant(d.forward(real, accumulate_grads ? &real_s : nullptr), 1.0);
  const auto on_fake = nn::mse_to_constant(d.forward(fake, accumulate_grads ? &fake_s : nullptr), 0.0);
  const double value = 0.5 * (on_real.value + on_fake.value);
  require_finite(value, component);
  if (accumulate_grads && weight != 0.0) {
    d.backward(scaled(on_real.grad, 0.5 * weight), real_s, ParamGrads::Accumulate);
    d.backward(scaled(on_fake.grad, 0.5 * weight), fake_s, ParamGrads::Accumulate);
  }
  return value;
}

}  // namespace

DiscriminatorLosses discriminator_losses(CycleGanModel& model, const Tensor& batch_a, const Tensor& batch_b,
                                         const Tensor& batch_m, const Tensor& fake_a, const Tensor& fake_b,
                                         double gamma, bool accumulate_grads) {
  require_pair(batch_a, batch_b);
  require_pair(fake_a, fake_b);
  if (batch_m.rank() != 4 || batch_m.dim(1) != batch_a.dim(1) || batch_m.dim(2) != batch_a.dim(2) ||
      batch_m.dim(3) != batch_a.dim(3)) {
    throw GanError(GanErrc::ShapeMismatch, "mixed-pool batch has shape " + nn::shape_string(batch_m.shape()));
  }
  DiscriminatorLosses out;
  out.d_a = discriminator_term(model.d_a, batch_a, fake_a, 1.0, accumulate_grads, "d_a");
  out.d_b = discriminator_term(model.d_b, batch_b, fake_b, 1.0, accumulate_grads, "d_b");
  out.d_a_m = discriminator_term(model.d_a_m, batch_m, fake_a, gamma, accumulate_grads, "d_a_m");
  out.d_b_m = discriminator_term(model.d_b_m, batch_m, fake_b, gamma, accumulate_grads, "d_b_m");
  out.total = out.d_a + out.d_b + gamma * (out.d_a_m + out.d_b_m);
  return out;
}

DiscriminatorLosses discriminator_losses(CycleGanModel& model, const Tensor& batch_a, const Tensor& batch_b,
                                         const Tensor& batch_m, double gamma, bool accumulate_grads) {
  require_pair(batch_a, batch_b);
  const Tensor fake_b = model.g_ab.forward(batch_a, nullptr);
  const Tensor fake_a = model.g_ba.forward(batch_b, nullptr);
  return discriminator_losses(model, batch_a, batch_b, batch_m, fake_a, fake_b, gamma, accumulate_grads);
}

}  // namespace mst::gan
