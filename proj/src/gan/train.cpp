#include "mst/gan/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "mst/gan/checkpoint.hpp"

namespace mst::gan {

void TrainingConfig::validate() const {
  auto fail = [](const std::string& what) { throw GanError(GanErrc::BadConfig, what); };
  if (epochs == 0) fail("epochs must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lambda_cycle >= 0.0) || !std::isfinite(lambda_cycle)) fail("lambda_cycle must be >= 0");
  if (!(gamma_mixed >= 0.0) || !std::isfinite(gamma_mixed)) fail("gamma_mixed must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) fail("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) fail("beta2 must be in (0, 1)");
  if (lr_decay_start >= epochs && lr_decay_start != 0) fail("lr_decay_start must be below epochs");
  if (convergence_window == 0) fail("convergence_window must be positive");
  if (!(convergence_tolerance >= 0.0)) fail("convergence_tolerance must be >= 0");
}

double TrainingConfig::lr_at(std::size_t epoch) const {
  if (lr_decay_start == 0 || epoch <= lr_decay_start) return lr;
  const double left = static_cast<double>(epochs + 1 - std::min(epoch, epochs));
  return lr * left / static_cast<double>(epochs - lr_decay_start);
}

void TrainingConfig::store(KvConfig& kv) const {
  kv.set("train.epochs", static_cast<long long>(epochs));
  kv.set("train.batch_size", static_cast<long long>(batch_size));
  kv.set("train.lambda_cycle", lambda_cycle);
  kv.set("train.gamma_mixed", gamma_mixed);
  kv.set("train.lr", lr);
  kv.set("train.lr_decay_start", static_cast<long long>(lr_decay_start));
  kv.set("train.beta1", beta1);
  kv.set("train.beta2", beta2);
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.checkpoint_every", static_cast<long long>(checkpoint_every));
  kv.set("train.convergence_window", static_cast<long long>(convergence_window));
  kv.set("train.convergence_tolerance", convergence_tolerance);
}

TrainingConfig TrainingConfig::load(const KvConfig& kv) {
  TrainingConfig cfg;
  try {
    auto count = [&](const char* key, std::size_t& into) {
      if (!kv.contains(key)) return;
      const long long v = kv.get_int(key);
      if (v < 0) throw GanError(GanErrc::BadConfig, std::string(key) + " must be non-negative");
      into = static_cast<std::size_t>(v);
    };
    auto real = [&](const char* key, double& into) {
      if (kv.contains(key)) into = kv.get_double(key);
    };
    count("train.epochs", cfg.epochs);
    count("train.batch_size", cfg.batch_size);
    real("train.lambda_cycle", cfg.lambda_cycle);
    real("train.gamma_mixed", cfg.gamma_mixed);
    real("train.lr", cfg.lr);
    count("train.lr_decay_start", cfg.lr_decay_start);
    real("train.beta1", cfg.beta1);
    real("train.beta2", cfg.beta2);
    if (auto s = kv.get("train.seed")) {
      const char* end = s->data() + s->size();
      auto [ptr, ec] = std::from_chars(s->data(), end, cfg.seed);
      if (ec != std::errc() || ptr != end) throw GanError(GanErrc::BadConfig, "train.seed is not an unsigned integer");
    }
    count("train.checkpoint_every", cfg.checkpoint_every);
    count("train.convergence_window", cfg.convergence_window);
    real("train.convergence_tolerance", cfg.convergence_tolerance);
  } catch (const std::invalid_argument& e) {
    throw GanError(GanErrc::BadConfig, e.what());
  }
  cfg.validate();
  return cfg;
}

std::string history_csv_header() {
  return "epoch,batch,d_a,d_b,d_a_m,d_b_m,d_total,g_adv_a,g_adv_b,g_cycle_a,g_cycle_b,g_mixed_a,g_mixed_b,g_total";
}

std::string history_csv_row(const HistoryRow& r) {
  std::string out = std::to_string(r.epoch) + "," + std::to_string(r.batch);
  for (double v : {r.d.d_a, r.d.d_b, r.d.d_a_m, r.d.d_b_m, r.d.total, r.g.adv_a, r.g.adv_b, r.g.cycle_a, r.g.cycle_b,
                   r.g.mixed_a, r.g.mixed_b, r.g.total}) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

bool has_converged(const std::vector<double>& losses, std::size_t window, double tolerance) {
  if (tolerance <= 0.0 || window == 0 || losses.size() < window + 1) return false;
  auto mean_ending_at = [&](std::size_t end) {  // mean of losses[end - window, end)
    double s = 0.0;
    for (std::size_t i = end - window; i < end; ++i) s += losses[i];
    return s / static_cast<double>(window);
  };
  const double current = mean_ending_at(losses.size());
  const double previous = mean_ending_at(losses.size() - 1);
  const double scale = std::max(std::abs(previous), 1e-12);
  return std::abs(current - previous) / scale < tolerance;
}

std::filesystem::path checkpoint_file_name(std::size_t epoch) {
  char name[64];
  std::snprintf(name, sizeof name, "checkpoint_epoch_%04zu.mstc", epoch);
  return name;
}

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return std::nullopt;
  std::optional<std::filesystem::path> best;
  unsigned long long best_epoch = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    constexpr std::string_view prefix = "checkpoint_epoch_", suffix = ".mstc";
    if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) || !name.ends_with(suffix)) continue;
    const std::string_view digits(name.data() + prefix.size(), name.size() - prefix.size() - suffix.size());
    unsigned long long epoch = 0;
    auto [ptr, err] = std::from_chars(digits.data(), digits.data() + digits.size(), epoch);
    if (err != std::errc() || ptr != digits.data() + digits.size()) continue;
    if (!best || epoch > best_epoch) {
      best = entry.path();
      best_epoch = epoch;
    }
  }
  return best;
}

namespace {

void step_network(Network& net, nn::AdamState& state) {
  auto params = net.parameters();
  nn::adam_step(params, state);
}

[[noreturn]] void rethrow_with_context(const Error& e, std::size_t epoch, std::size_t batch) {
  throw GanError(GanErrc::NonFiniteLoss,
                 "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + ": " + e.what());
}

}  // namespace

TrainingProgress train(CycleGanModel& model, const data::LabeledDataset& dataset, const TrainingConfig& cfg,
                       TrainingProgress progress, const TrainOptions& options) {
  cfg.validate();
  if (dataset.negative.empty() || dataset.positive.empty()) {
    throw GanError(GanErrc::EmptyDataset, "both sentiment classes need at least one phrase");
  }
  if (dataset.mixed_pool.empty()) throw GanError(GanErrc::EmptyDataset, "mixed pool is empty");
  for (auto& opt : model.optimizers) opt.config = cfg.adam();

  const std::size_t pairs = std::min(dataset.negative.size(), dataset.positive.size());
  const std::size_t batches = (pairs + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order_a(dataset.negative.size()), order_b(dataset.positive.size()),
      order_m(dataset.mixed_pool.size());

  if (!options.checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.checkpoint_dir, ec);
    if (ec) throw GanError(GanErrc::IoFailure, "cannot create " + options.checkpoint_dir.string() + ": " + ec.message());
  }

  while (progress.epochs_completed < cfg.epochs && !progress.converged) {
    const std::size_t epoch = progress.epochs_completed + 1;
    for (auto& opt : model.optimizers) opt.config.lr = cfg.lr_at(epoch);
    Rng rng(mix_seed(cfg.seed, epoch));
    for (auto* order : {&order_a, &order_b, &order_m}) {
      for (std::size_t i = 0; i < order->size(); ++i) (*order)[i] = i;
      rng.shuffle(std::span<std::size_t>(*order));
    }

    double g_sum = 0.0, d_sum = 0.0;
    std::vector<const roll::PianoRollPhrase*> pa, pb, pm;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(pairs, lo + cfg.batch_size);
      pa.clear();
      pb.clear();
      pm.clear();
      for (std::size_t i = lo; i < hi; ++i) {
        pa.push_back(&dataset.negative[order_a[i]].phrase);
        pb.push_back(&dataset.positive[order_b[i]].phrase);
        pm.push_back(&dataset.mixed_pool[order_m[i % order_m.size()]]);
      }
      const nn::Tensor batch_a = to_batch(pa), batch_b = to_batch(pb), batch_m = to_batch(pm);

      HistoryRow row{epoch, b, {}, {}};
      try {
        // The generator pass is shared: the discriminators see its outputs
        // detached, and the generator step (same generator weights) reuses it.
        GeneratorPass pass = run_generators(model, batch_a, batch_b);
        for (std::size_t n = 2; n < CycleGanModel::kNetworks; ++n) model.networks()[n]->zero_grads();
        row.d = discriminator_losses(model, batch_a, batch_b, batch_m, pass.fake_a, pass.fake_b, cfg.gamma_mixed, true);
        for (std::size_t n = 2; n < CycleGanModel::kNetworks; ++n) step_network(*model.networks()[n], model.optimizers[n]);

        model.g_ab.zero_grads();
        model.g_ba.zero_grads();
        row.g = generator_losses(model, batch_a, batch_b, std::move(pass), cfg.lambda_cycle, cfg.gamma_mixed, true);
        step_network(model.g_ab, model.optimizers[0]);
        step_network(model.g_ba, model.optimizers[1]);
      } catch (const GanError& e) {
        if (e.errc() != GanErrc::NonFiniteLoss) throw;
        rethrow_with_context(e, epoch, b);
      } catch (const nn::NnError& e) {
        if (e.errc() != nn::NnErrc::NonFinite) throw;
        rethrow_with_context(e, epoch, b);
      }
      g_sum += row.g.total;
      d_sum += row.d.total;
      if (options.on_batch) options.on_batch(row);
    }

    progress.epochs_completed = epoch;
    progress.epoch_generator_loss.push_back(g_sum / static_cast<double>(batches));
    progress.converged =
        has_converged(progress.epoch_generator_loss, cfg.convergence_window, cfg.convergence_tolerance);

    EpochReport report{epoch, batches, g_sum / static_cast<double>(batches), d_sum / static_cast<double>(batches),
                       progress.converged, std::nullopt};
    const bool last = progress.epochs_completed == cfg.epochs || progress.converged;
    const bool periodic = cfg.checkpoint_every != 0 && epoch % cfg.checkpoint_every == 0;
    if (!options.checkpoint_dir.empty() && (periodic || last)) {
      const auto path = options.checkpoint_dir / checkpoint_file_name(epoch);
      save_checkpoint(path, model, cfg, progress);
      report.checkpoint = path;
    }
    if (options.on_epoch) options.on_epoch(report);
  }
  return progress;
}

}  // namespace mst::gan
