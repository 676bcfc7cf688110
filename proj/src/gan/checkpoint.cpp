#include "mst/gan/checkpoint.hpp"

#include "mst/util/binary_io.hpp"

namespace mst::gan {

namespace {

constexpr std::string_view kMagic = "MSTC";
constexpr std::size_t kMaxRank = 8;

struct StoredParam {
  std::string name;
  nn::Shape shape;
  std::vector<float> data;
};

struct StoredNetwork {
  std::string name;
  std::vector<StoredParam> params;
  nn::AdamState adam;
};

struct StoredCheckpoint {
  KvConfig config;
  std::vector<StoredNetwork> networks;
  std::vector<double> epoch_losses;
};

[[noreturn]] void corrupt(const std::string& what) { throw GanError(GanErrc::CorruptCheckpoint, what); }

std::vector<float> read_floats(ByteReader& r, std::size_t count) {
  if (count > r.remaining() / 4) corrupt("array of " + std::to_string(count) + " floats exceeds the file");
  std::vector<float> out(count);
  r.f32_array(out);
  return out;
}

StoredCheckpoint parse(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  StoredCheckpoint ck;
  try {
    const auto magic = r.raw(4);
    if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != kMagic) {
      throw GanError(GanErrc::BadMagic, "not a checkpoint file (bad magic)");
    }
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
      throw GanError(GanErrc::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                   std::to_string(kCheckpointVersion));
    }
    try {
      ck.config = KvConfig::parse(r.str());
    } catch (const std::invalid_argument& e) {
      corrupt(std::string("config text: ") + e.what());
    }
    const std::uint32_t networks = r.u32();
    if (networks != CycleGanModel::kNetworks) corrupt("expected 6 networks, found " + std::to_string(networks));
    for (std::uint32_t n = 0; n < networks; ++n) {
      StoredNetwork net;
      net.name = r.str();
      const std::uint32_t count = r.u32();
      if (count > r.remaining()) corrupt("parameter count exceeds the file");
      for (std::uint32_t p = 0; p < count; ++p) {
        StoredParam param;
        param.name = r.str();
        const std::uint8_t rank = r.u8();
        if (rank == 0 || rank > kMaxRank) corrupt("parameter " + param.name + " has rank " + std::to_string(rank));
        std::size_t elements = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
          const std::uint32_t dim = r.u32();
          if (dim == 0 || elements > r.remaining() / dim) corrupt("parameter " + param.name + " has a bad shape");
          param.shape.push_back(dim);
          elements *= dim;
        }
        param.data = read_floats(r, elements);
        net.params.push_back(std::move(param));
      }
      net.adam.step = r.u64();
      net.adam.config.lr = r.f64();
      net.adam.config.beta1 = r.f64();
      net.adam.config.beta2 = r.f64();
      net.adam.config.eps = r.f64();
      const std::uint8_t has_moments = r.u8();
      if (has_moments > 1) corrupt("bad moment flag");
      if (has_moments == 1) {
        for (const auto& param : net.params) {
          net.adam.m.emplace_back(param.shape, read_floats(r, nn::Tensor::element_count(param.shape)));
          net.adam.v.emplace_back(param.shape, read_floats(r, nn::Tensor::element_count(param.shape)));
        }
      }
      ck.networks.push_back(std::move(net));
    }
    const std::uint32_t epochs = r.u32();
    if (epochs > r.remaining() / 8) corrupt("loss history exceeds the file");
    for (std::uint32_t i = 0; i < epochs; ++i) ck.epoch_losses.push_back(r.f64());
    if (!r.at_end()) corrupt(std::to_string(r.remaining()) + " trailing bytes");
  } catch (const ReadPastEnd& e) {
    corrupt(std::string("truncated: ") + e.what());
  }
  return ck;
}

void apply(const StoredCheckpoint& ck, CycleGanModel& model) {
  auto nets = model.networks();
  // Validate everything before mutating the model.
  for (std::size_t n = 0; n < nets.size(); ++n) {
    const auto& stored = ck.networks[n];
    if (stored.name != nets[n]->name()) {
      throw GanError(GanErrc::ShapeMismatch, "network " + std::to_string(n) + " is " + stored.name + ", expected " +
                                                 nets[n]->name());
    }
    const auto params = nets[n]->parameters();
    if (params.size() != stored.params.size()) {
      throw GanError(GanErrc::ShapeMismatch, stored.name + ": checkpoint has " + std::to_string(stored.params.size()) +
                                                 " parameters, model has " + std::to_string(params.size()));
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (params[p]->name != stored.params[p].name || params[p]->value.shape() != stored.params[p].shape) {
        throw GanError(GanErrc::ShapeMismatch, "checkpoint parameter " + stored.params[p].name + " " +
                                                   nn::shape_string(stored.params[p].shape) + " does not match " +
                                                   params[p]->name + " " +
                                                   nn::shape_string(params[p]->value.shape()));
      }
    }
  }
  for (std::size_t n = 0; n < nets.size(); ++n) {
    const auto& stored = ck.networks[n];
    auto params = nets[n]->parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      params[p]->value = nn::Tensor(stored.params[p].shape, stored.params[p].data);
      params[p]->grad.fill(0.0f);
    }
    model.optimizers[n] = stored.adam;
  }
}

TrainingProgress progress_from(const StoredCheckpoint& ck) {
  TrainingProgress progress;
  try {
    if (ck.config.contains("progress.epochs_completed")) {
      const long long e = ck.config.get_int("progress.epochs_completed");
      if (e < 0) corrupt("negative epochs_completed");
      progress.epochs_completed = static_cast<std::size_t>(e);
    }
    progress.converged = ck.config.get("progress.converged").value_or("false") == "true";
  } catch (const std::invalid_argument& e) {
    corrupt(e.what());
  }
  progress.epoch_generator_loss = ck.epoch_losses;
  return progress;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CycleGanModel& model, const TrainingConfig& cfg,
                                            const TrainingProgress& progress) {
  KvConfig kv;
  model.arch.store(kv);
  cfg.store(kv);
  kv.set("progress.epochs_completed", static_cast<long long>(progress.epochs_completed));
  kv.set("progress.converged", progress.converged ? "true" : "false");

  ByteWriter w;
  w.raw(kMagic);
  w.u16(kCheckpointVersion);
  w.str(kv.to_text());
  const auto nets = model.networks();
  w.u32(static_cast<std::uint32_t>(nets.size()));
  for (std::size_t n = 0; n < nets.size(); ++n) {
    const auto params = nets[n]->parameters();
    w.str(nets[n]->name());
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
      w.str(p->name);
      w.u8(static_cast<std::uint8_t>(p->value.rank()));
      for (std::size_t d : p->value.shape()) w.u32(static_cast<std::uint32_t>(d));
      w.f32_array(p->value.values());
    }
    const auto& adam = model.optimizers[n];
    w.u64(adam.step);
    w.f64(adam.config.lr);
    w.f64(adam.config.beta1);
    w.f64(adam.config.beta2);
    w.f64(adam.config.eps);
    const bool has_moments = !adam.m.empty();
    if (has_moments && (adam.m.size() != params.size() || adam.v.size() != params.size())) {
      throw GanError(GanErrc::ShapeMismatch, nets[n]->name() + ": optimizer state does not match parameters");
    }
    w.u8(has_moments ? 1 : 0);
    if (has_moments) {
      for (std::size_t p = 0; p < params.size(); ++p) {
        w.f32_array(adam.m[p].values());
        w.f32_array(adam.v[p].values());
      }
    }
  }
  w.u32(static_cast<std::uint32_t>(progress.epoch_generator_loss.size()));
  for (double v : progress.epoch_generator_loss) w.f64(v);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const StoredCheckpoint ck = parse(bytes);
  Checkpoint out;
  out.config = TrainingConfig::load(ck.config);
  out.model = CycleGanModel::create(ArchitectureConfig::load(ck.config), 0, out.config.adam());
  apply(ck, out.model);
  out.progress = progress_from(ck);
  return out;
}

void decode_checkpoint_into(std::span<const std::uint8_t> bytes, CycleGanModel& model, TrainingConfig* cfg,
                            TrainingProgress* progress) {
  const StoredCheckpoint ck = parse(bytes);
  const ArchitectureConfig stored = ArchitectureConfig::load(ck.config);
  apply(ck, model);  // parameter shapes are the authoritative architecture check
  model.arch = stored;
  if (cfg != nullptr) *cfg = TrainingConfig::load(ck.config);
  if (progress != nullptr) *progress = progress_from(ck);
}

void save_checkpoint(const std::filesystem::path& path, const CycleGanModel& model, const TrainingConfig& cfg,
                     const TrainingProgress& progress) {
  const auto bytes = encode_checkpoint(model, cfg, progress);
  if (!write_file(path, bytes)) throw GanError(GanErrc::IoFailure, "cannot write checkpoint " + path.string());
}

namespace {
std::vector<std::uint8_t> read_checkpoint_bytes(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  if (!read_file(path, bytes)) throw GanError(GanErrc::IoFailure, "cannot read checkpoint " + path.string());
  return bytes;
}
}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_checkpoint_bytes(path)); }

void load_checkpoint_into(const std::filesystem::path& path, CycleGanModel& model, TrainingConfig* cfg,
                          TrainingProgress* progress) {
  decode_checkpoint_into(read_checkpoint_bytes(path), model, cfg, progress);
}

}  // namespace mst::gan
