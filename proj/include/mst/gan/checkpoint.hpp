#pragma once

// Checkpoint file: "MSTC", u16 version, u32-length config text (canonical
// key=value lines: architecture, training config, progress), then per
// network its parameter table (name, rank, dims, f32 data) and Adam state
// (step, hyperparameters, m and v per parameter), then the per-epoch
// generator losses as f64. Little-endian throughout.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mst/gan/model.hpp"
#include "mst/gan/train.hpp"

namespace mst::gan {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  CycleGanModel model;
  TrainingConfig config;
  TrainingProgress progress;
};

std::vector<std::uint8_t> encode_checkpoint(const CycleGanModel& model, const TrainingConfig& cfg,
                                            const TrainingProgress& progress);
// Rebuilds the model from the embedded architecture.
// Throws GanError{BadMagic, VersionMismatch, CorruptCheckpoint, BadConfig}.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
// Loads weights and optimizer state into an existing model; throws
// GanError{ShapeMismatch} if its architecture differs from the stored one.
void decode_checkpoint_into(std::span<const std::uint8_t> bytes, CycleGanModel& model,
                            TrainingConfig* cfg = nullptr, TrainingProgress* progress = nullptr);

// Throws GanError{IoFailure} plus the decode errors.
void save_checkpoint(const std::filesystem::path& path, const CycleGanModel& model, const TrainingConfig& cfg,
                     const TrainingProgress& progress = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);
void load_checkpoint_into(const std::filesystem::path& path, CycleGanModel& model, TrainingConfig* cfg = nullptr,
                          TrainingProgress* progress = nullptr);

}  // namespace mst::gan
