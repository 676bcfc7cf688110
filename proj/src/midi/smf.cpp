#include "mst/midi/smf.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <map>
#include <utility>

namespace mst::midi {

std::string_view to_string(MidiErrc code) {
  switch (code) {
    case MidiErrc::MalformedHeader: return "MalformedHeader";
    case MidiErrc::TruncatedTrack: return "TruncatedTrack";
    case MidiErrc::BadVarLen: return "BadVarLen";
    case MidiErrc::UnsupportedFormat: return "UnsupportedFormat";
    case MidiErrc::SmpteDivision: return "SmpteDivision";
    case MidiErrc::MalformedEvent: return "MalformedEvent";
    case MidiErrc::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

MidiError::MidiError(MidiErrc code, std::size_t offset, const std::string& message)
    : Error(std::string(to_string(code)) + " at byte " + std::to_string(offset) + ": " + message),
      errc_(code),
      offset_(offset),
      detail_(message) {}

std::size_t ValidationReport::count(Severity s) const {
  return static_cast<std::size_t>(
      std::count_if(issues.begin(), issues.end(), [s](const Issue& i) { return i.severity == s; }));
}

bool ValidationReport::has(std::string_view code) const {
  return std::any_of(issues.begin(), issues.end(), [code](const Issue& i) { return i.code == code; });
}

namespace {

constexpr std::size_t kHeaderChunkSize = 14;

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::uint16_t read_be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

// Number of data bytes that follow a channel status byte.
int channel_data_length(std::uint8_t status) {
  const std::uint8_t kind = status & 0xF0;
  return (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
}

struct Warning {
  std::string code;
  std::size_t offset;
  std::string message;
};

// Single parsing routine for parse_smf and validate_smf, so a clean
// validation report always implies a successful parse.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::vector<Warning>* warnings)
      : data_(bytes), warnings_(warnings) {}

  MidiFile run() {
    MidiFile file;
    const std::uint16_t ntracks = read_header(file);
    std::size_t pos = header_end_;
    std::size_t parsed = 0;
    while (parsed < ntracks) {
      if (pos + 8 > data_.size()) {
        fail(MidiErrc::TruncatedTrack, pos,
             "expected " + std::to_string(ntracks) + " track chunks, found " + std::to_string(parsed));
      }
      const std::uint32_t length = read_be32(&data_[pos + 4]);
      if (length > data_.size() - pos - 8) {
        fail(MidiErrc::TruncatedTrack, pos + 4,
             "chunk length " + std::to_string(length) + " exceeds remaining " +
                 std::to_string(data_.size() - pos - 8) + " bytes");
      }
      const std::size_t body = pos + 8;
      if (std::memcmp(&data_[pos], "MTrk", 4) == 0) {
        file.tracks.push_back(read_track(body, body + length));
        ++parsed;
      }
      pos = body + length;
    }
    if (pos < data_.size()) {
      warn("trailing-bytes", pos, std::to_string(data_.size() - pos) + " bytes after the last track chunk");
    }
    return file;
  }

 private:
  [[noreturn]] static void fail(MidiErrc code, std::size_t offset, const std::string& message) {
    throw MidiError(code, offset, message);
  }

  void warn(std::string code, std::size_t offset, std::string message) {
    if (warnings_ != nullptr) warnings_->push_back({std::move(code), offset, std::move(message)});
  }

  std::uint16_t read_header(MidiFile& file) {
    if (data_.size() < 8 || std::memcmp(data_.data(), "MThd", 4) != 0) {
      fail(MidiErrc::MalformedHeader, 0, "missing MThd chunk");
    }
    const std::uint32_t length = read_be32(&data_[4]);
    if (length < 6) fail(MidiErrc::MalformedHeader, 4, "header length " + std::to_string(length) + " < 6");
    if (data_.size() < kHeaderChunkSize || length > data_.size() - 8) {
      fail(MidiErrc::MalformedHeader, 8, "header chunk truncated");
    }
    const std::uint16_t format = read_be16(&data_[8]);
    const std::uint16_t ntracks = read_be16(&data_[10]);
    const std::uint16_t division = read_be16(&data_[12]);
    if (format == 2) fail(MidiErrc::UnsupportedFormat, 8, "SMF format 2 is not supported");
    if (format > 2) fail(MidiErrc::UnsupportedFormat, 8, "unknown SMF format " + std::to_string(format));
    if ((division & 0x8000) != 0) fail(MidiErrc::SmpteDivision, 12, "SMPTE time division is not supported");
    if (division == 0) fail(MidiErrc::MalformedHeader, 12, "division is zero");
    if (ntracks == 0) fail(MidiErrc::MalformedHeader, 10, "file declares no tracks");
    if (format == 0 && ntracks != 1) {
      fail(MidiErrc::MalformedHeader, 10, "format 0 file declares " + std::to_string(ntracks) + " tracks");
    }
    file.format = format == 0 ? Format::Single : Format::MultiTrack;
    file.division = division;
    header_end_ = 8 + static_cast<std::size_t>(length);
    return ntracks;
  }

  std::uint32_t read_varlen(std::size_t& p, std::size_t end) {
    const std::size_t start = p;
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
      if (p >= end) fail(MidiErrc::TruncatedTrack, p, "variable-length quantity runs past end of chunk");
      const std::uint8_t b = data_[p++];
      value = (value << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return value;
    }
    fail(MidiErrc::BadVarLen, start, "variable-length quantity longer than 4 bytes");
  }

  std::uint8_t read_byte(std::size_t& p, std::size_t end) {
    if (p >= end) fail(MidiErrc::TruncatedTrack, p, "event runs past end of chunk");
    return data_[p++];
  }

  std::vector<std::uint8_t> read_block(std::size_t& p, std::size_t end, std::uint32_t length) {
    if (length > end - p) fail(MidiErrc::TruncatedTrack, p, "event payload runs past end of chunk");
    std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(p),
                                  data_.begin() + static_cast<std::ptrdiff_t>(p + length));
    p += length;
    return out;
  }

  Track read_track(std::size_t begin, std::size_t end) {
    Track track;
    std::vector<std::size_t> offsets;
    if (begin == end) warn("empty-track", begin - 8, "track chunk has zero length");
    std::size_t p = begin;
    std::uint64_t tick = 0;
    std::uint8_t running = 0;
    bool ended = false;
    while (p < end) {
      tick += read_varlen(p, end);
      const std::size_t event_offset = p;
      if (p >= end) fail(MidiErrc::TruncatedTrack, p, "delta time without an event");
      std::uint8_t status = data_[p];
      if (status < 0x80) {
        if (running == 0) fail(MidiErrc::MalformedEvent, p, "data byte without running status");
        status = running;
      } else {
        ++p;
      }

      if (status < 0xF0) {
        running = status;
        std::array<std::uint8_t, 2> d{};
        const int n = channel_data_length(status);
        for (int i = 0; i < n; ++i) {
          d[static_cast<std::size_t>(i)] = read_byte(p, end);
          if (d[static_cast<std::size_t>(i)] >= 0x80) {
            fail(MidiErrc::MalformedEvent, p - 1, "status byte where channel data was expected");
          }
        }
        const std::uint8_t channel = status & 0x0F;
        switch (status & 0xF0) {
          case 0x90:
            if (d[1] == 0) {
              track.events.push_back({tick, NoteOff{channel, d[0], 0}});
            } else {
              track.events.push_back({tick, NoteOn{channel, d[0], d[1]}});
            }
            break;
          case 0x80: track.events.push_back({tick, NoteOff{channel, d[0], d[1]}}); break;
          default:
            track.events.push_back(
                {tick, OtherChannel{status, std::vector<std::uint8_t>(d.begin(), d.begin() + n)}});
            break;
        }
      } else if (status == 0xFF) {
        running = 0;
        const std::uint8_t type = read_byte(p, end);
        if (type >= 0x80) fail(MidiErrc::MalformedEvent, p - 1, "meta event type byte >= 0x80");
        const std::uint32_t length = read_varlen(p, end);
        const std::size_t payload_offset = p;
        std::vector<std::uint8_t> payload = read_block(p, end, length);
        if (type == 0x2F) {
          if (length != 0) fail(MidiErrc::MalformedEvent, payload_offset, "EndOfTrack with non-empty payload");
          track.events.push_back({tick, EndOfTrack{}});
          offsets.push_back(event_offset);
          ended = true;
          if (p < end) warn("events-after-end-of-track", p, "bytes follow EndOfTrack inside the track chunk");
          break;
        }
        if (type == 0x51) {
          if (length != 3) fail(MidiErrc::MalformedEvent, payload_offset, "Tempo payload must be 3 bytes");
          const std::uint32_t usec = (std::uint32_t{payload[0]} << 16) | (std::uint32_t{payload[1]} << 8) | payload[2];
          if (usec == 0) fail(MidiErrc::MalformedEvent, payload_offset, "Tempo of zero microseconds");
          track.events.push_back({tick, Tempo{usec}});
        } else if (type == 0x58) {
          if (length != 4) fail(MidiErrc::MalformedEvent, payload_offset, "TimeSignature payload must be 4 bytes");
          if (payload[0] == 0) fail(MidiErrc::MalformedEvent, payload_offset, "TimeSignature numerator zero");
          if (payload[1] > 31) fail(MidiErrc::MalformedEvent, payload_offset + 1, "TimeSignature denominator too large");
          track.events.push_back(
              {tick, TimeSignature{payload[0], std::uint32_t{1} << payload[1], payload[2], payload[3]}});
        } else {
          track.events.push_back({tick, OtherMeta{type, std::move(payload)}});
        }
      } else if (status == 0xF0 || status == 0xF7) {
        running = 0;
        const std::uint32_t length = read_varlen(p, end);
        track.events.push_back({tick, SysEx{status, read_block(p, end, length)}});
      } else {
        fail(MidiErrc::MalformedEvent, event_offset, "system message 0x" + hex(status) + " inside a track");
      }
      offsets.push_back(event_offset);
    }
    if (!ended) {
      if (begin != end) warn("missing-end-of-track", end, "track chunk has no EndOfTrack event");
      track.events.push_back({tick, EndOfTrack{}});
      offsets.push_back(end);
    }
    if (warnings_ != nullptr) check_unmatched(track, offsets);
    return track;
  }

  void check_unmatched(const Track& track, const std::vector<std::size_t>& offsets) {
    // Active notes per (channel, pitch), in onset order.
    std::map<std::pair<int, int>, std::vector<std::size_t>> active;
    for (std::size_t i = 0; i < track.events.size(); ++i) {
      const auto& ev = track.events[i].event;
      if (const auto* on = std::get_if<NoteOn>(&ev)) {
        active[{on->channel, on->pitch}].push_back(offsets[i]);
      } else if (const auto* off = std::get_if<NoteOff>(&ev)) {
        auto it = active.find({off->channel, off->pitch});
        if (it != active.end() && !it->second.empty()) it->second.erase(it->second.begin());
      }
    }
    std::vector<Warning> found;
    for (const auto& [key, starts] : active) {
      for (std::size_t offset : starts) {
        found.push_back({"unmatched-note-on", offset,
                         "NoteOn channel " + std::to_string(key.first) + " pitch " + std::to_string(key.second) +
                             " is never released"});
      }
    }
    std::sort(found.begin(), found.end(), [](const Warning& a, const Warning& b) { return a.offset < b.offset; });
    for (auto& w : found) warnings_->push_back(std::move(w));
  }

  static std::string hex(std::uint8_t b) {
    static constexpr char digits[] = "0123456789ABCDEF";
    return {digits[b >> 4], digits[b & 0xF]};
  }

  std::span<const std::uint8_t> data_;
  std::vector<Warning>* warnings_;
  std::size_t header_end_ = 0;
};

[[noreturn]] void violation(const std::string& message) {
  throw MidiError(MidiErrc::InvariantViolation, 0, message);
}

bool is_power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

void check_event(const Event& ev, std::size_t track, std::size_t index) {
  const auto where = [&] { return " (track " + std::to_string(track) + ", event " + std::to_string(index) + ")"; };
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, NoteOn> || std::is_same_v<E, NoteOff>) {
          if (e.channel > 15 || e.pitch > 127 || e.velocity > 127) violation("note field out of range" + where());
        } else if constexpr (std::is_same_v<E, Tempo>) {
          if (e.usec_per_quarter == 0 || e.usec_per_quarter > 0xFFFFFF) violation("tempo out of range" + where());
        } else if constexpr (std::is_same_v<E, TimeSignature>) {
          if (e.numerator == 0 || !is_power_of_two(e.denominator)) violation("bad time signature" + where());
        } else if constexpr (std::is_same_v<E, OtherMeta>) {
          if (e.type >= 0x80 || e.type == 0x2F) violation("bad meta type" + where());
          if (e.data.size() > kMaxVarLen) violation("meta payload too long" + where());
        } else if constexpr (std::is_same_v<E, OtherChannel>) {
          const std::uint8_t kind = e.status & 0xF0;
          if (kind < 0xA0 || kind > 0xE0) violation("OtherChannel status must be 0xA0-0xEF" + where());
          if (e.data.size() != static_cast<std::size_t>(channel_data_length(e.status))) {
            violation("OtherChannel data length mismatch" + where());
          }
          for (auto b : e.data) {
            if (b >= 0x80) violation("OtherChannel data byte >= 0x80" + where());
          }
        } else if constexpr (std::is_same_v<E, SysEx>) {
          if (e.status != 0xF0 && e.status != 0xF7) violation("SysEx status must be F0 or F7" + where());
          if (e.data.size() > kMaxVarLen) violation("sysex payload too long" + where());
        }
      },
      ev);
}

void write_event(std::vector<std::uint8_t>& out, const Event& ev) {
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, NoteOn>) {
          out.insert(out.end(), {static_cast<std::uint8_t>(0x90 | e.channel), e.pitch, e.velocity});
        } else if constexpr (std::is_same_v<E, NoteOff>) {
          out.insert(out.end(), {static_cast<std::uint8_t>(0x80 | e.channel), e.pitch, e.velocity});
        } else if constexpr (std::is_same_v<E, Tempo>) {
          out.insert(out.end(), {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(e.usec_per_quarter >> 16),
                                 static_cast<std::uint8_t>(e.usec_per_quarter >> 8),
                                 static_cast<std::uint8_t>(e.usec_per_quarter)});
        } else if constexpr (std::is_same_v<E, TimeSignature>) {
          const auto log2 = static_cast<std::uint8_t>(std::countr_zero(e.denominator));
          out.insert(out.end(), {0xFF, 0x58, 0x04, e.numerator, log2, e.clocks_per_click,
                                 e.thirty_seconds_per_quarter});
        } else if constexpr (std::is_same_v<E, EndOfTrack>) {
          out.insert(out.end(), {0xFF, 0x2F, 0x00});
        } else if constexpr (std::is_same_v<E, OtherMeta>) {
          out.insert(out.end(), {0xFF, e.type});
          append_varlen(out, static_cast<std::uint32_t>(e.data.size()));
          out.insert(out.end(), e.data.begin(), e.data.end());
        } else if constexpr (std::is_same_v<E, OtherChannel>) {
          out.push_back(e.status);
          out.insert(out.end(), e.data.begin(), e.data.end());
        } else if constexpr (std::is_same_v<E, SysEx>) {
          out.push_back(e.status);
          append_varlen(out, static_cast<std::uint32_t>(e.data.size()));
          out.insert(out.end(), e.data.begin(), e.data.end());
        }
      },
      ev);
}

bool is_channel_nine(const Event& ev) {
  if (const auto* on = std::get_if<NoteOn>(&ev)) return on->channel == 9;
  if (const auto* off = std::get_if<NoteOff>(&ev)) return off->channel == 9;
  if (const auto* other = std::get_if<OtherChannel>(&ev)) return other->channel() == 9;
  return false;
}

}  // namespace

void append_varlen(std::vector<std::uint8_t>& out, std::uint32_t value) {
  std::array<std::uint8_t, 4> buf{};
  int n = 0;
  buf[n++] = value & 0x7F;
  while ((value >>= 7) != 0 && n < 4) {
    buf[n++] = static_cast<std::uint8_t>(0x80 | (value & 0x7F));
  }
  while (n > 0) out.push_back(buf[--n]);
}

MidiFile parse_smf(std::span<const std::uint8_t> bytes) { return Reader(bytes, nullptr).run(); }

void check_invariants(const MidiFile& file) {
  if (file.division == 0 || (file.division & 0x8000) != 0) violation("division must be in 1..32767");
  if (file.tracks.empty()) violation("file has no tracks");
  if (file.tracks.size() > 0xFFFF) violation("too many tracks");
  if (file.format == Format::Single && file.tracks.size() != 1) violation("format 0 requires exactly one track");
  for (std::size_t t = 0; t < file.tracks.size(); ++t) {
    const auto& events = file.tracks[t].events;
    if (events.empty() || !std::holds_alternative<EndOfTrack>(events.back().event)) {
      violation("track " + std::to_string(t) + " does not end with EndOfTrack");
    }
    std::uint64_t prev = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].tick < prev) violation("track " + std::to_string(t) + " ticks out of order at event " + std::to_string(i));
      if (events[i].tick - prev > kMaxVarLen) violation("delta time exceeds 28 bits");
      if (i + 1 < events.size() && std::holds_alternative<EndOfTrack>(events[i].event)) {
        violation("track " + std::to_string(t) + " has EndOfTrack before its last event");
      }
      check_event(events[i].event, t, i);
      prev = events[i].tick;
    }
  }
}

std::vector<std::uint8_t> write_smf(const MidiFile& file) {
  check_invariants(file);
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  append_be32(out, 6);
  append_be16(out, static_cast<std::uint16_t>(file.format));
  append_be16(out, static_cast<std::uint16_t>(file.tracks.size()));
  append_be16(out, file.division);
  for (const auto& track : file.tracks) {
    std::vector<std::uint8_t> body;
    std::uint64_t prev = 0;
    for (const auto& te : track.events) {
      append_varlen(body, static_cast<std::uint32_t>(te.tick - prev));
      write_event(body, te.event);
      prev = te.tick;
    }
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    append_be32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

ValidationReport validate_smf(std::span<const std::uint8_t> bytes) {
  ValidationReport report;
  std::vector<Warning> warnings;
  try {
    Reader(bytes, &warnings).run();
  } catch (const MidiError& e) {
    report.issues.push_back({Severity::Error, std::string(e.code()), e.offset(), e.detail()});
  }
  for (auto& w : warnings) {
    report.issues.push_back({Severity::Warning, std::move(w.code), w.offset, std::move(w.message)});
  }
  report.is_valid = report.count(Severity::Error) == 0;
  return report;
}

std::vector<TimedEvent> merge_to_single_track(const MidiFile& file) {
  std::vector<TimedEvent> merged;
  for (const auto& track : file.tracks) {
    for (const auto& te : track.events) {
      if (!is_channel_nine(te.event)) merged.push_back(te);
    }
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.tick < b.tick; });
  return merged;
}

}  // namespace mst::midi
