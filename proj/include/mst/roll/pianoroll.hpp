#pragma once

// Binary piano-roll phrases: 64 sixteenth-note steps (4 bars of 4/4) by 84
// consecutive MIDI pitches, and conversion to and from MIDI.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mst/midi/smf.hpp"
#include "mst/util/error.hpp"

namespace mst::roll {

inline constexpr std::size_t kSteps = 64;
inline constexpr std::size_t kPitches = 84;
inline constexpr std::size_t kCells = kSteps * kPitches;
inline constexpr std::size_t kStepsPerQuarter = 4;

enum class RollErrc { NotFourFour, EmptyInput, NonFiniteInput, ShapeMismatch, InvalidCell, BadConfig };

std::string_view to_string(RollErrc code);

class RollError : public Error {
 public:
  RollError(RollErrc code, const std::string& message);
  [[nodiscard]] std::string_view code() const noexcept override { return to_string(errc_); }
  [[nodiscard]] bool is_internal() const noexcept override {
    return errc_ == RollErrc::InvalidCell || errc_ == RollErrc::ShapeMismatch;
  }
  [[nodiscard]] RollErrc errc() const noexcept { return errc_; }

 private:
  RollErrc errc_;
};

// Row-major (time-major) 64x84 binary matrix.
class PianoRollPhrase {
 public:
  PianoRollPhrase() { cells_.fill(0); }
  // Throws RollError{ShapeMismatch} on wrong size, {InvalidCell} on a value not in {0,1}.
  explicit PianoRollPhrase(std::span<const std::uint8_t> cells);

  [[nodiscard]] bool at(std::size_t step, std::size_t pitch_index) const { return cells_[step * kPitches + pitch_index] != 0; }
  void set(std::size_t step, std::size_t pitch_index, bool on) {
    cells_[step * kPitches + pitch_index] = on ? 1 : 0;
  }
  [[nodiscard]] std::span<const std::uint8_t, kCells> cells() const { return cells_; }
  [[nodiscard]] std::size_t count_on() const;
  [[nodiscard]] bool empty() const { return count_on() == 0; }

  friend bool operator==(const PianoRollPhrase&, const PianoRollPhrase&) = default;

 private:
  std::array<std::uint8_t, kCells> cells_;
};

struct QuantizedNote {
  std::uint8_t pitch = 0;
  std::uint64_t start_step = 0;
  std::uint64_t length_steps = 1;
  friend bool operator==(const QuantizedNote&, const QuantizedNote&) = default;
};

struct ConversionConfig {
  int pitch_low = 24;  // MIDI 24..107
  int pitch_count = static_cast<int>(kPitches);
  bool require_four_four = true;
  double emit_tempo_bpm = 120.0;
  int emit_ppq = 480;

  // Throws RollError{BadConfig}.
  void validate() const;
};

// Notes matched first-in first-out per (channel, pitch); ticks rounded half up
// to the 16th grid; unmatched NoteOns end at the last event tick. Output is in
// onset order.
std::vector<QuantizedNote> quantize_notes(std::span<const midi::TimedEvent> events, std::uint32_t ppq);

// True iff every TimeSignature is 4/4 (no TimeSignature counts as 4/4).
bool check_time_signature(const midi::MidiFile& file);

// Windows of a converted piece. window_indices[i] is the 64-step window
// number (from the start of the piece) that phrases[i] was cut from;
// total_windows also counts the all-zero windows that were dropped.
struct PhraseSplit {
  std::vector<PianoRollPhrase> phrases;
  std::vector<std::uint32_t> window_indices;
  std::size_t total_windows = 0;
};

// Throws RollError{NotFourFour} when cfg.require_four_four and the gate fails.
PhraseSplit split_phrases(const midi::MidiFile& file, const ConversionConfig& cfg = {});
std::vector<PianoRollPhrase> midi_to_phrases(const midi::MidiFile& file, const ConversionConfig& cfg = {});

// Format 0 file: Tempo and 4/4 at tick 0, one note per maximal run of
// on-cells. Throws RollError{EmptyInput}.
midi::MidiFile phrases_to_midi(std::span<const PianoRollPhrase> phrases, const ConversionConfig& cfg = {});

// cell = entry > threshold. Throws RollError{ShapeMismatch, NonFiniteInput}.
PianoRollPhrase binarize(std::span<const float> matrix, float threshold = 0.5F);

}  // namespace mst::roll
