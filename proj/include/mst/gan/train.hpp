#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mst/data/dataset.hpp"
#include "mst/gan/model.hpp"
#include "mst/util/kv_config.hpp"

namespace mst::gan {

struct TrainingConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  double lambda_cycle = 10.0;
  double gamma_mixed = 1.0;
  double lr = 2e-4;
  // 0 keeps lr constant. Otherwise epochs after this one use lr scaled by
  // (epochs - e + 1) / (epochs - lr_decay_start): a linear ramp towards 0.
  std::size_t lr_decay_start = 0;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;  // epochs; 0 = only the final checkpoint
  // Early stop once the moving average of the per-epoch mean generator loss
  // over `convergence_window` epochs changes by less than this, relatively.
  // A tolerance of 0 disables early stopping.
  std::size_t convergence_window = 10;
  double convergence_tolerance = 1e-4;

  void validate() const;  // throws GanError{BadConfig}
  [[nodiscard]] nn::AdamConfig adam() const { return {lr, beta1, beta2, 1e-8}; }
  [[nodiscard]] double lr_at(std::size_t epoch) const;  // 1-based
  void store(KvConfig& kv) const;
  // Missing keys keep their defaults. Throws GanError{BadConfig}.
  static TrainingConfig load(const KvConfig& kv);
  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct HistoryRow {
  std::size_t epoch = 0;  // 1-based
  std::size_t batch = 0;  // 0-based within the epoch
  DiscriminatorLosses d;
  GeneratorLosses g;
};

std::string history_csv_header();
std::string history_csv_row(const HistoryRow& row);

struct TrainingProgress {
  std::size_t epochs_completed = 0;
  std::vector<double> epoch_generator_loss;  // mean L_G per completed epoch
  bool converged = false;
  friend bool operator==(const TrainingProgress&, const TrainingProgress&) = default;
};

struct EpochReport {
  std::size_t epoch = 0;
  std::size_t batches = 0;
  double generator_loss = 0.0;      // mean over batches
  double discriminator_loss = 0.0;  // mean over batches
  bool converged = false;
  std::optional<std::filesystem::path> checkpoint;
};

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::function<void(const HistoryRow&)> on_batch;
  std::function<void(const EpochReport&)> on_epoch;
};

// True once the window-average of the trailing epoch losses moved by less
// than `tolerance` relative to the previous window-average.
bool has_converged(const std::vector<double>& epoch_losses, std::size_t window, double tolerance);

// Runs epochs progress.epochs_completed + 1 .. cfg.epochs (or until
// convergence). Epoch e shuffles with a stream derived from (seed, e), so a
// resumed run follows the same trajectory as an uninterrupted one. Each batch
// takes one discriminator step then one generator step.
// Throws GanError{EmptyDataset, NonFiniteLoss (naming component, epoch, batch), IoFailure}.
TrainingProgress train(CycleGanModel& model, const data::LabeledDataset& dataset, const TrainingConfig& cfg,
                       TrainingProgress progress = {}, const TrainOptions& options = {});

std::filesystem::path checkpoint_file_name(std::size_t epoch);  // "checkpoint_epoch_0012.mstc"
// Highest-epoch checkpoint in dir, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir);

}  // namespace mst::gan
