#include "mst/gan/network.hpp"

namespace mst::gan {

std::string_view to_string(GanErrc code) {
  switch (code) {
    case GanErrc::EmptyDataset: return "EmptyDataset";
    case GanErrc::NonFiniteLoss: return "NonFiniteLoss";
    case GanErrc::ShapeMismatch: return "ShapeMismatch";
    case GanErrc::BadConfig: return "BadConfig";
    case GanErrc::IoFailure: return "IoFailure";
    case GanErrc::BadMagic: return "BadMagic";
    case GanErrc::VersionMismatch: return "VersionMismatch";
    case GanErrc::CorruptCheckpoint: return "CorruptCheckpoint";
    case GanErrc::NoCheckpoint: return "NoCheckpoint";
  }
  return "Unknown";
}

GanError::GanError(GanErrc code, const std::string& message) : Error(message), errc_(code) {}

void ArchitectureConfig::validate() const {
  if (base_filters == 0) throw GanError(GanErrc::BadConfig, "base_filters must be positive");
  if (edge_kernel == 0 || edge_kernel % 2 == 0) throw GanError(GanErrc::BadConfig, "edge_kernel must be odd");
  if (residual_kernel == 0 || residual_kernel % 2 == 0) {
    throw GanError(GanErrc::BadConfig, "residual_kernel must be odd");
  }
  if (score_kernel == 0 || score_kernel % 2 == 0) throw GanError(GanErrc::BadConfig, "score_kernel must be odd");
}

void ArchitectureConfig::store(KvConfig& kv) const {
  kv.set("arch.base_filters", static_cast<long long>(base_filters));
  kv.set("arch.residual_blocks", static_cast<long long>(residual_blocks));
  kv.set("arch.edge_kernel", static_cast<long long>(edge_kernel));
  kv.set("arch.residual_kernel", static_cast<long long>(residual_kernel));
  kv.set("arch.score_kernel", static_cast<long long>(score_kernel));
}

ArchitectureConfig ArchitectureConfig::load(const KvConfig& kv) {
  ArchitectureConfig arch;
  try {
    auto read = [&](const char* key, std::size_t& into) {
      if (!kv.contains(key)) return;
      const long long v = kv.get_int(key);
      if (v < 0) throw GanError(GanErrc::BadConfig, std::string(key) + " must be non-negative");
      into = static_cast<std::size_t>(v);
    };
    read("arch.base_filters", arch.base_filters);
    read("arch.residual_blocks", arch.residual_blocks);
    read("arch.edge_kernel", arch.edge_kernel);
    read("arch.residual_kernel", arch.residual_kernel);
    read("arch.score_kernel", arch.score_kernel);
  } catch (const std::invalid_argument& e) {
    throw GanError(GanErrc::BadConfig, e.what());
  }
  arch.validate();
  return arch;
}

std::vector<const nn::Parameter<float>*> Network::parameters() const {
  // Parameter collection does not mutate; the const_cast only reuses the
  // non-const traversal.
  auto params = const_cast<nn::Sequential<float>&>(body_).parameters();
  return {params.begin(), params.end()};
}

Network make_generator(const std::string& name, const ArchitectureConfig& arch, Rng& rng) {
  using namespace nn;
  arch.validate();
  const std::size_t f = arch.base_filters, k = arch.edge_kernel;
  Network net(name);
  auto& s = net.body();
  s.add<Conv2d<float>>(name + ".in", 1, f, k, ConvGeometry{1, k / 2}, rng);
  s.add<InstanceNorm2d<float>>(name + ".in_norm", f);
  s.add<ActivationLayer<float>>(Activation::ReLU);
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t c = f << i;
    const std::string tag = name + ".down" + std::to_string(i + 1);
    s.add<Conv2d<float>>(tag, c, 2 * c, 3, ConvGeometry{2, 1}, rng);
    s.add<InstanceNorm2d<float>>(tag + "_norm", 2 * c);
    s.add<ActivationLayer<float>>(Activation::ReLU);
  }
  for (std::size_t r = 0; r < arch.residual_blocks; ++r) {
    s.add<ResidualBlock<float>>(name + ".res" + std::to_string(r + 1), 4 * f, rng, arch.residual_kernel);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t c = (4 * f) >> i;
    const std::string tag = name + ".up" + std::to_string(i + 1);
    s.add<ConvTranspose2d<float>>(tag, c, c / 2, 4, ConvGeometry{2, 1}, rng);
    s.add<InstanceNorm2d<float>>(tag + "_norm", c / 2);
    s.add<ActivationLayer<float>>(Activation::ReLU);
  }
  s.add<Conv2d<float>>(name + ".out", f, 1, k, ConvGeometry{1, k / 2}, rng);
  s.add<ActivationLayer<float>>(Activation::Sigmoid);
  return net;
}

Network make_discriminator(const std::string& name, const ArchitectureConfig& arch, Rng& rng) {
  using namespace nn;
  arch.validate();
  const std::size_t f = arch.base_filters;
  Network net(name);
  auto& s = net.body();
  s.add<Conv2d<float>>(name + ".conv1", 1, f, 4, ConvGeometry{2, 1}, rng);
  s.add<ActivationLayer<float>>(Activation::LeakyReLU);
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t c = f << i;
    const std::string tag = name + ".conv" + std::to_string(i + 2);
    s.add<Conv2d<float>>(tag, c, 2 * c, 4, ConvGeometry{2, 1}, rng);
    s.add<InstanceNorm2d<float>>(tag + "_norm", 2 * c);
    s.add<ActivationLayer<float>>(Activation::LeakyReLU);
  }
  const std::size_t k = arch.score_kernel;
  s.add<Conv2d<float>>(name + ".score", 4 * f, 1, k, ConvGeometry{1, k / 2}, rng);
  return net;
}

}  // namespace mst::gan
