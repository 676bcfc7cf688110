#include <cmath>
#include <limits>

#include "doctest.h"
#include "mst/roll/pianoroll.hpp"
#include "mst/util/rng.hpp"
#include "support/generators.hpp"

using namespace mst;
using namespace mst::roll;
using midi::EndOfTrack;
using midi::NoteOff;
using midi::NoteOn;
using midi::TimedEvent;

using testing::random_phrase;

namespace {

midi::MidiFile single_track(std::vector<TimedEvent> events, std::uint16_t ppq = 480) {
  midi::MidiFile f;
  f.division = ppq;
  const std::uint64_t last = events.empty() ? 0 : events.back().tick;
  events.push_back({last, EndOfTrack{}});
  f.tracks.push_back({std::move(events)});
  return f;
}

RollErrc roll_error(auto&& fn) {
  try {
    fn();
  } catch (const RollError& e) {
    return e.errc();
  }
  FAIL("no RollError thrown");
  return RollErrc::BadConfig;
}

}  // namespace

TEST_CASE("quantize: a quarter note is four sixteenths") {
  const std::vector<TimedEvent> ev = {{0, NoteOn{0, 60, 90}}, {480, NoteOff{0, 60, 0}}};
  const auto q = quantize_notes(ev, 480);
  REQUIRE(q.size() == 1);
  CHECK(q[0] == QuantizedNote{60, 0, 4});
}

TEST_CASE("quantize: notes shorter than a sixteenth keep length 1") {
  const std::vector<TimedEvent> ev = {{0, NoteOn{0, 60, 90}}, {30, NoteOff{0, 60, 0}}};
  const auto q = quantize_notes(ev, 480);
  REQUIRE(q.size() == 1);
  CHECK(q[0].length_steps == 1);
}

TEST_CASE("quantize: ppq 96, ticks 50..100 round to steps 2..4") {
  const std::vector<TimedEvent> ev = {{50, NoteOn{0, 60, 90}}, {100, NoteOff{0, 60, 0}}};
  const auto q = quantize_notes(ev, 96);
  REQUIRE(q.size() == 1);
  CHECK(q[0] == QuantizedNote{60, 2, 2});
}

TEST_CASE("quantize: half-way ticks round up") {
  // ppq 480: a sixteenth is 120 ticks; tick 60 is exactly half a step.
  const std::vector<TimedEvent> ev = {{60, NoteOn{0, 60, 90}}, {180, NoteOff{0, 60, 0}}};
  const auto q = quantize_notes(ev, 480);
  REQUIRE(q.size() == 1);
  CHECK(q[0] == QuantizedNote{60, 1, 1});
}

TEST_CASE("quantize: overlapping same-pitch notes match first in, first out; unmatched notes close at the end") {
  const std::vector<TimedEvent> ev = {{0, NoteOn{0, 60, 90}},    {120, NoteOn{0, 60, 90}}, {240, NoteOff{0, 60, 0}},
                                      {480, NoteOff{0, 60, 0}},  {480, NoteOn{1, 62, 90}}, {960, NoteOff{0, 99, 0}},
                                      {1200, NoteOn{2, 64, 80}}};
  const auto q = quantize_notes(ev, 480);
  REQUIRE(q.size() == 4);
  CHECK(q[0] == QuantizedNote{60, 0, 2});
  CHECK(q[1] == QuantizedNote{60, 1, 3});
  CHECK(q[2] == QuantizedNote{62, 4, 6});   // closed at tick 1200
  CHECK(q[3] == QuantizedNote{64, 10, 1});  // opened at the final tick
}

TEST_CASE("quantize: start steps are monotone in start ticks") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ppq = static_cast<std::uint32_t>(1 + rng.below(1000));
    std::vector<TimedEvent> ev;
    std::uint64_t tick = 0;
    for (int i = 0; i < 40; ++i) {
      tick += rng.below(ppq);
      const auto pitch = static_cast<std::uint8_t>(rng.below(128));
      ev.push_back({tick, NoteOn{0, pitch, 90}});
      ev.push_back({tick + rng.below(2 * ppq), NoteOff{0, pitch, 0}});
    }
    std::stable_sort(ev.begin(), ev.end(), [](const TimedEvent& a, const TimedEvent& b) { return a.tick < b.tick; });
    const auto q = quantize_notes(ev, ppq);
    for (std::size_t i = 1; i < q.size(); ++i) CHECK(q[i - 1].start_step <= q[i].start_step);
    for (const auto& n : q) CHECK(n.length_steps >= 1);
  }
}

TEST_CASE("time-signature gate") {
  CHECK(check_time_signature(single_track({{0, midi::TimeSignature{4, 4, 24, 8}}})));
  CHECK_FALSE(check_time_signature(
      single_track({{0, midi::TimeSignature{4, 4, 24, 8}}, {1920, midi::TimeSignature{3, 4, 24, 8}}})));
  CHECK(check_time_signature(single_track({{0, NoteOn{0, 60, 90}}, {480, NoteOff{0, 60, 0}}})));
  CHECK_FALSE(check_time_signature(single_track({{0, midi::TimeSignature{4, 8, 24, 8}}})));
}

TEST_CASE("one note at pitch 60 lands in column 36, steps 0..3") {
  const auto phrases = midi_to_phrases(single_track({{0, NoteOn{0, 60, 90}}, {480, NoteOff{0, 60, 0}}}));
  REQUIRE(phrases.size() == 1);
  for (std::size_t t = 0; t < kSteps; ++t) {
    for (std::size_t p = 0; p < kPitches; ++p) CHECK(phrases[0].at(t, p) == (p == 36 && t < 4));
  }
  CHECK(phrases[0].count_on() == 4);
}

TEST_CASE("notes outside the pitch window are dropped") {
  CHECK(midi_to_phrases(single_track({{0, NoteOn{0, 12, 90}}, {480, NoteOff{0, 12, 0}}})).empty());
  CHECK(midi_to_phrases(single_track({{0, NoteOn{0, 108, 90}}, {480, NoteOff{0, 108, 0}}})).empty());
  const auto top = midi_to_phrases(single_track({{0, NoteOn{0, 107, 90}}, {120, NoteOff{0, 107, 0}}}));
  REQUIRE(top.size() == 1);
  CHECK(top[0].at(0, 83));
}

TEST_CASE("3/4 files are rejected when the gate is on") {
  const auto f = single_track({{0, midi::TimeSignature{3, 4, 24, 8}}, {0, NoteOn{0, 60, 90}}, {480, NoteOff{0, 60, 0}}});
  CHECK(roll_error([&] { midi_to_phrases(f); }) == RollErrc::NotFourFour);
  ConversionConfig relaxed;
  relaxed.require_four_four = false;
  CHECK(midi_to_phrases(f, relaxed).size() == 1);
}

TEST_CASE("percussion is ignored and sustained notes cover every step") {
  const auto phrases = midi_to_phrases(single_track(
      {{0, NoteOn{9, 60, 90}}, {0, NoteOn{0, 48, 90}}, {480, NoteOff{9, 60, 0}}, {7680, NoteOff{0, 48, 0}}}));
  REQUIRE(phrases.size() == 1);
  for (std::size_t t = 0; t < kSteps; ++t) {
    CHECK(phrases[0].at(t, 24));
    CHECK_FALSE(phrases[0].at(t, 36));
  }
}

TEST_CASE("windows split at 64 steps and silent windows are dropped") {
  // ppq 480: one step is 120 ticks, one window 7680 ticks. Notes in windows
  // 0 and 2, one note crossing from window 2 into 3; window 1 is silent and
  // window 4 is a partial window holding a single step.
  const auto f = single_track({{0, NoteOn{0, 60, 90}},
                               {120, NoteOff{0, 60, 0}},
                               {15360, NoteOn{0, 61, 90}},
                               {15480, NoteOff{0, 61, 0}},
                               {22800, NoteOn{0, 62, 90}},
                               {23280, NoteOff{0, 62, 0}},
                               {30720, NoteOn{0, 63, 90}},
                               {30840, NoteOff{0, 63, 0}}});
  const PhraseSplit split = split_phrases(f);
  CHECK(split.total_windows == 5);
  CHECK(split.window_indices == std::vector<std::uint32_t>{0, 2, 3, 4});
  REQUIRE(split.phrases.size() == 4);
  CHECK(split.phrases[0].at(0, 36));
  CHECK(split.phrases[1].at(0, 37));
  CHECK(split.phrases[1].at(62, 38));  // step 190 = window 2, offset 62
  CHECK(split.phrases[1].at(63, 38));
  CHECK(split.phrases[2].at(0, 38));   // steps 192, 193 continue into window 3
  CHECK(split.phrases[2].at(1, 38));
  CHECK(split.phrases[2].count_on() == 2);
  CHECK(split.phrases[3].count_on() == 1);
  CHECK(split.phrases[3].at(0, 39));
}

TEST_CASE("emission of cells[0..4][36] is one note of pitch 60 from tick 0 to 480") {
  PianoRollPhrase p;
  for (std::size_t t = 0; t < 4; ++t) p.set(t, 36, true);
  const midi::MidiFile f = phrases_to_midi(std::span<const PianoRollPhrase>(&p, 1));
  CHECK(f.division == 480);
  std::vector<TimedEvent> notes;
  bool tempo = false, four_four = false;
  for (const auto& te : f.tracks.at(0).events) {
    if (std::holds_alternative<NoteOn>(te.event) || std::holds_alternative<NoteOff>(te.event)) notes.push_back(te);
    if (const auto* t = std::get_if<midi::Tempo>(&te.event)) tempo = te.tick == 0 && t->usec_per_quarter == 500000;
    if (const auto* ts = std::get_if<midi::TimeSignature>(&te.event)) {
      four_four = te.tick == 0 && ts->numerator == 4 && ts->denominator == 4;
    }
  }
  CHECK(tempo);
  CHECK(four_four);
  REQUIRE(notes.size() == 2);
  CHECK(notes[0].tick == 0);
  CHECK(std::get<NoteOn>(notes[0].event).pitch == 60);
  CHECK(notes[1].tick == 480);
  CHECK(std::get<NoteOff>(notes[1].event).pitch == 60);
}

TEST_CASE("an all-zero phrase emits a valid file with no notes") {
  const PianoRollPhrase p;
  const midi::MidiFile f = phrases_to_midi(std::span<const PianoRollPhrase>(&p, 1));
  for (const auto& te : f.tracks.at(0).events) {
    CHECK_FALSE(std::holds_alternative<NoteOn>(te.event));
  }
  const auto report = midi::validate_smf(midi::write_smf(f));
  CHECK(report.is_valid);
  CHECK_FALSE(report.has("unmatched-note-on"));
}

TEST_CASE("an empty phrase list is rejected") {
  CHECK(roll_error([] { phrases_to_midi({}); }) == RollErrc::EmptyInput);
}

TEST_CASE("grid round trip is exact and every emitted file validates cleanly") {
  Rng rng(17);
  for (int trial = 0; trial < 150; ++trial) {
    std::vector<PianoRollPhrase> phrases;
    const std::size_t n = 1 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) phrases.push_back(random_phrase(rng));
    ConversionConfig cfg;
    cfg.emit_ppq = trial % 2 == 0 ? 480 : static_cast<int>(4 * (1 + rng.below(200)));
    cfg.emit_tempo_bpm = 60.0 + static_cast<double>(rng.below(120));
    const midi::MidiFile f = phrases_to_midi(phrases, cfg);
    const auto bytes = midi::write_smf(f);
    const auto report = midi::validate_smf(bytes);
    CHECK(report.count(midi::Severity::Error) == 0);
    CHECK_FALSE(report.has("unmatched-note-on"));
    CHECK(midi_to_phrases(midi::parse_smf(bytes), cfg) == phrases);
  }
}

TEST_CASE("binarize") {
  std::vector<float> m(kCells, 0.9f);
  CHECK(binarize(m).count_on() == kCells);
  std::fill(m.begin(), m.end(), 0.5f);
  CHECK(binarize(m).empty());
  for (std::size_t c = 0; c < kCells; ++c) m[c] = (c / kPitches + c % kPitches) % 2 == 0 ? 0.7f : 0.2f;
  const PianoRollPhrase board = binarize(m);
  for (std::size_t t = 0; t < kSteps; ++t) {
    for (std::size_t p = 0; p < kPitches; ++p) CHECK(board.at(t, p) == ((t + p) % 2 == 0));
  }
  m[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK(roll_error([&] { binarize(m); }) == RollErrc::NonFiniteInput);
  m[5] = std::numeric_limits<float>::infinity();
  CHECK(roll_error([&] { binarize(m); }) == RollErrc::NonFiniteInput);
  m.pop_back();
  CHECK(roll_error([&] { binarize(m); }) == RollErrc::ShapeMismatch);
}

TEST_CASE("phrase construction checks shape and cell values") {
  std::vector<std::uint8_t> cells(kCells, 0);
  cells[10] = 1;
  CHECK(PianoRollPhrase(cells).count_on() == 1);
  cells[11] = 2;
  CHECK(roll_error([&] { PianoRollPhrase{cells}; }) == RollErrc::InvalidCell);
  cells.resize(kCells - 1);
  CHECK(roll_error([&] { PianoRollPhrase{cells}; }) == RollErrc::ShapeMismatch);
}

TEST_CASE("conversion config is validated") {
  ConversionConfig cfg;
  cfg.pitch_low = 50;
  CHECK(roll_error([&] { cfg.validate(); }) == RollErrc::BadConfig);
  cfg = {};
  cfg.emit_ppq = 0;
  CHECK(roll_error([&] { cfg.validate(); }) == RollErrc::BadConfig);
  cfg = {};
  cfg.emit_tempo_bpm = 0.0;
  CHECK(roll_error([&] { cfg.validate(); }) == RollErrc::BadConfig);
}
