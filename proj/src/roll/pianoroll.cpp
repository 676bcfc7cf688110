#include "mst/roll/pianoroll.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <tuple>

namespace mst::roll {

std::string_view to_string(RollErrc code) {
  switch (code) {
    case RollErrc::NotFourFour: return "NotFourFour";
    case RollErrc::EmptyInput: return "EmptyInput";
    case RollErrc::NonFiniteInput: return "NonFiniteInput";
    case RollErrc::ShapeMismatch: return "ShapeMismatch";
    case RollErrc::InvalidCell: return "InvalidCell";
    case RollErrc::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

RollError::RollError(RollErrc code, const std::string& message)
    : Error(std::string(to_string(code)) + ": " + message), errc_(code) {}

PianoRollPhrase::PianoRollPhrase(std::span<const std::uint8_t> cells) {
  if (cells.size() != kCells) {
    throw RollError(RollErrc::ShapeMismatch,
                    "phrase needs " + std::to_string(kCells) + " cells, got " + std::to_string(cells.size()));
  }
  for (std::size_t i = 0; i < kCells; ++i) {
    if (cells[i] > 1) throw RollError(RollErrc::InvalidCell, "cell " + std::to_string(i) + " is not 0 or 1");
    cells_[i] = cells[i];
  }
}

std::size_t PianoRollPhrase::count_on() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

void ConversionConfig::validate() const {
  if (pitch_count != static_cast<int>(kPitches)) {
    throw RollError(RollErrc::BadConfig, "pitch_count must be " + std::to_string(kPitches));
  }
  if (pitch_low < 0 || pitch_low + pitch_count > 128) {
    throw RollError(RollErrc::BadConfig, "pitch window [" + std::to_string(pitch_low) + ", " +
                                             std::to_string(pitch_low + pitch_count) + ") leaves MIDI range");
  }
  if (emit_ppq <= 0 || emit_ppq > 0x7FFF || emit_ppq % static_cast<int>(kStepsPerQuarter) != 0) {
    throw RollError(RollErrc::BadConfig, "emit_ppq must be a positive multiple of 4 below 32768");
  }
  const double usec = 60'000'000.0 / emit_tempo_bpm;
  if (!std::isfinite(emit_tempo_bpm) || emit_tempo_bpm <= 0.0 || !(usec >= 1.0 && usec <= 0xFFFFFF)) {
    throw RollError(RollErrc::BadConfig, "emit_tempo_bpm out of range");
  }
}

namespace {

// round(tick / (ppq / 4)), halves rounded up, in exact integer arithmetic.
std::uint64_t to_step(std::uint64_t tick, std::uint32_t ppq) {
  return (8 * tick + ppq) / (2 * static_cast<std::uint64_t>(ppq));
}

}  // namespace

std::vector<QuantizedNote> quantize_notes(std::span<const midi::TimedEvent> events, std::uint32_t ppq) {
  if (ppq == 0) throw RollError(RollErrc::BadConfig, "ppq must be positive");
  struct Pending {
    std::size_t order;
    std::uint64_t start_tick;
  };
  struct Closed {
    std::size_t order;
    std::uint8_t pitch;
    std::uint64_t start_tick;
    std::uint64_t end_tick;
  };
  std::map<std::pair<int, int>, std::deque<Pending>> open;
  std::vector<Closed> closed;
  std::size_t onsets = 0;
  std::uint64_t last_tick = 0;
  for (const auto& te : events) {
    last_tick = std::max(last_tick, te.tick);
    if (const auto* on = std::get_if<midi::NoteOn>(&te.event)) {
      open[{on->channel, on->pitch}].push_back({onsets++, te.tick});
    } else if (const auto* off = std::get_if<midi::NoteOff>(&te.event)) {
      auto it = open.find({off->channel, off->pitch});
      if (it == open.end() || it->second.empty()) continue;
      const Pending p = it->second.front();
      it->second.pop_front();
      closed.push_back({p.order, off->pitch, p.start_tick, te.tick});
    }
  }
  for (const auto& [key, pending] : open) {
    for (const auto& p : pending) {
      closed.push_back({p.order, static_cast<std::uint8_t>(key.second), p.start_tick, last_tick});
    }
  }
  std::sort(closed.begin(), closed.end(), [](const Closed& a, const Closed& b) { return a.order < b.order; });

  std::vector<QuantizedNote> notes;
  notes.reserve(closed.size());
  for (const auto& c : closed) {
    const std::uint64_t start = to_step(c.start_tick, ppq);
    const std::uint64_t end = to_step(c.end_tick, ppq);
    notes.push_back({c.pitch, start, end > start ? end - start : 1});
  }
  return notes;
}

bool check_time_signature(const midi::MidiFile& file) {
  for (const auto& track : file.tracks) {
    for (const auto& te : track.events) {
      if (const auto* ts = std::get_if<midi::TimeSignature>(&te.event)) {
        if (ts->numerator != 4 || ts->denominator != 4) return false;
      }
    }
  }
  return true;
}

PhraseSplit split_phrases(const midi::MidiFile& file, const ConversionConfig& cfg) {
  cfg.validate();
  if (cfg.require_four_four && !check_time_signature(file)) {
    throw RollError(RollErrc::NotFourFour, "file contains a time signature other than 4/4");
  }
  const auto merged = midi::merge_to_single_track(file);
  const auto notes = quantize_notes(merged, file.division);

  std::uint64_t total_steps = 0;
  for (const auto& n : notes) total_steps = std::max(total_steps, n.start_step + n.length_steps);
  PhraseSplit split;
  // A trailing partial window is zero-padded to a full 64 steps.
  split.total_windows = static_cast<std::size_t>((total_steps + kSteps - 1) / kSteps);

  // Only windows that receive a cell are materialised.
  std::map<std::size_t, PianoRollPhrase> windows;
  for (const auto& n : notes) {
    const int index = static_cast<int>(n.pitch) - cfg.pitch_low;
    if (index < 0 || index >= cfg.pitch_count) continue;
    for (std::uint64_t t = n.start_step; t < n.start_step + n.length_steps; ++t) {
      windows[static_cast<std::size_t>(t / kSteps)].set(static_cast<std::size_t>(t % kSteps),
                                                        static_cast<std::size_t>(index), true);
    }
  }
  for (auto& [w, phrase] : windows) {
    split.phrases.push_back(phrase);
    split.window_indices.push_back(static_cast<std::uint32_t>(w));
  }
  return split;
}

std::vector<PianoRollPhrase> midi_to_phrases(const midi::MidiFile& file, const ConversionConfig& cfg) {
  return split_phrases(file, cfg).phrases;
}

midi::MidiFile phrases_to_midi(std::span<const PianoRollPhrase> phrases, const ConversionConfig& cfg) {
  cfg.validate();
  if (phrases.empty()) throw RollError(RollErrc::EmptyInput, "no phrases to emit");
  const std::uint64_t step_ticks = static_cast<std::uint64_t>(cfg.emit_ppq) / kStepsPerQuarter;
  const std::size_t total_steps = phrases.size() * kSteps;
  const auto on = [&](std::size_t t, std::size_t p) { return phrases[t / kSteps].at(t % kSteps, p); };

  // (tick, 0 = off / 1 = on, pitch); offs sort before ons at equal ticks.
  std::vector<std::tuple<std::uint64_t, int, std::uint8_t>> marks;
  for (std::size_t p = 0; p < kPitches; ++p) {
    const auto pitch = static_cast<std::uint8_t>(cfg.pitch_low + static_cast<int>(p));
    std::size_t t = 0;
    while (t < total_steps) {
      if (!on(t, p)) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      while (t < total_steps && on(t, p)) ++t;
      marks.emplace_back(start * step_ticks, 1, pitch);
      marks.emplace_back(t * step_ticks, 0, pitch);
    }
  }
  std::sort(marks.begin(), marks.end());

  midi::Track track;
  const auto usec = static_cast<std::uint32_t>(std::lround(60'000'000.0 / cfg.emit_tempo_bpm));
  track.events.push_back({0, midi::Tempo{usec}});
  track.events.push_back({0, midi::TimeSignature{4, 4, 24, 8}});
  for (const auto& [tick, kind, pitch] : marks) {
    if (kind == 1) {
      track.events.push_back({tick, midi::NoteOn{0, pitch, 100}});
    } else {
      track.events.push_back({tick, midi::NoteOff{0, pitch, 0}});
    }
  }
  track.events.push_back({total_steps * step_ticks, midi::EndOfTrack{}});

  midi::MidiFile file;
  file.format = midi::Format::Single;
  file.division = static_cast<std::uint16_t>(cfg.emit_ppq);
  file.tracks.push_back(std::move(track));
  return file;
}

PianoRollPhrase binarize(std::span<const float> matrix, float threshold) {
  if (matrix.size() != kCells) {
    throw RollError(RollErrc::ShapeMismatch,
                    "expected " + std::to_string(kCells) + " values, got " + std::to_string(matrix.size()));
  }
  if (!std::isfinite(threshold)) throw RollError(RollErrc::NonFiniteInput, "threshold is not finite");
  PianoRollPhrase phrase;
  for (std::size_t i = 0; i < kCells; ++i) {
    if (!std::isfinite(matrix[i])) {
      throw RollError(RollErrc::NonFiniteInput, "entry " + std::to_string(i) + " is not finite");
    }
    phrase.set(i / kPitches, i % kPitches, matrix[i] > threshold);
  }
  return phrase;
}

}  // namespace mst::roll
