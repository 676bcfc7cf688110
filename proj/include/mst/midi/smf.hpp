#pragma once

// Standard MIDI File (format 0 and 1) reading, writing and validation.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mst/util/error.hpp"

namespace mst::midi {

enum class Format : std::uint16_t { Single = 0, MultiTrack = 1 };

struct NoteOn {
  std::uint8_t channel = 0;
  std::uint8_t pitch = 0;
  std::uint8_t velocity = 0;
  friend bool operator==(const NoteOn&, const NoteOn&) = default;
};

struct NoteOff {
  std::uint8_t channel = 0;
  std::uint8_t pitch = 0;
  std::uint8_t velocity = 0;
  friend bool operator==(const NoteOff&, const NoteOff&) = default;
};

struct Tempo {
  std::uint32_t usec_per_quarter = 500000;
  friend bool operator==(const Tempo&, const Tempo&) = default;
};

struct TimeSignature {
  std::uint8_t numerator = 4;
  std::uint32_t denominator = 4;  // a power of two; stored as log2 on disk
  std::uint8_t clocks_per_click = 24;
  std::uint8_t thirty_seconds_per_quarter = 8;
  friend bool operator==(const TimeSignature&, const TimeSignature&) = default;
};

struct EndOfTrack {
  friend bool operator==(const EndOfTrack&, const EndOfTrack&) = default;
};

// Any meta event not modelled above; payload kept verbatim.
struct OtherMeta {
  std::uint8_t type = 0;
  std::vector<std::uint8_t> data;
  friend bool operator==(const OtherMeta&, const OtherMeta&) = default;
};

// Channel voice messages other than notes (control change, program change,
// pitch bend, aftertouch). status includes the channel nibble.
struct OtherChannel {
  std::uint8_t status = 0;
  std::vector<std::uint8_t> data;
  [[nodiscard]] std::uint8_t channel() const { return status & 0x0F; }
  friend bool operator==(const OtherChannel&, const OtherChannel&) = default;
};

// F0 / F7 system exclusive payload, uninterpreted.
struct SysEx {
  std::uint8_t status = 0xF0;
  std::vector<std::uint8_t> data;
  friend bool operator==(const SysEx&, const SysEx&) = default;
};

using Event = std::variant<NoteOn, NoteOff, Tempo, TimeSignature, EndOfTrack, OtherMeta, OtherChannel, SysEx>;

struct TimedEvent {
  std::uint64_t tick = 0;  // absolute
  Event event;
  friend bool operator==(const TimedEvent&, const TimedEvent&) = default;
};

struct Track {
  std::vector<TimedEvent> events;
  friend bool operator==(const Track&, const Track&) = default;
};

struct MidiFile {
  Format format = Format::Single;
  std::uint16_t division = 480;  // ticks per quarter note
  std::vector<Track> tracks;
  friend bool operator==(const MidiFile&, const MidiFile&) = default;
};

enum class MidiErrc {
  MalformedHeader,
  TruncatedTrack,
  BadVarLen,
  UnsupportedFormat,
  SmpteDivision,
  MalformedEvent,
  InvariantViolation,
};

std::string_view to_string(MidiErrc code);

class MidiError : public Error {
 public:
  MidiError(MidiErrc code, std::size_t offset, const std::string& message);
  [[nodiscard]] std::string_view code() const noexcept override { return to_string(errc_); }
  [[nodiscard]] bool is_internal() const noexcept override { return errc_ == MidiErrc::InvariantViolation; }
  [[nodiscard]] MidiErrc errc() const noexcept { return errc_; }
  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  MidiErrc errc_;
  std::size_t offset_;
  std::string detail_;
};

enum class Severity { Error, Warning };

struct Issue {
  Severity severity = Severity::Error;
  std::string code;
  std::size_t offset = 0;
  std::string message;
};

struct ValidationReport {
  bool is_valid = true;
  std::vector<Issue> issues;

  [[nodiscard]] std::size_t count(Severity s) const;
  [[nodiscard]] bool has(std::string_view code) const;
};

// Throws MidiError. NoteOn with velocity 0 becomes NoteOff. Tracks that lack
// an EndOfTrack get one appended at their last tick; bytes after EndOfTrack
// inside a chunk are ignored. Non-"MTrk" chunks are skipped.
MidiFile parse_smf(std::span<const std::uint8_t> bytes);

// Every event is written with its status byte (no running status).
// Throws MidiError{InvariantViolation} when file breaks the MidiFile invariants.
std::vector<std::uint8_t> write_smf(const MidiFile& file);

// Never throws. Errors for anything parse_smf rejects; warnings for
// unmatched-note-on, events-after-end-of-track, missing-end-of-track,
// empty-track and trailing-bytes.
ValidationReport validate_smf(std::span<const std::uint8_t> bytes);

// Checks the MidiFile invariants; throws MidiError{InvariantViolation}.
void check_invariants(const MidiFile& file);

// All tracks merged by absolute tick (ties: track index, then position).
// Channel messages on channel 9 (percussion) are dropped; meta events kept.
std::vector<TimedEvent> merge_to_single_track(const MidiFile& file);

// Variable-length quantity helpers, exposed for tests.
void append_varlen(std::vector<std::uint8_t>& out, std::uint32_t value);
inline constexpr std::uint32_t kMaxVarLen = 0x0FFFFFFF;

}  // namespace mst::midi
