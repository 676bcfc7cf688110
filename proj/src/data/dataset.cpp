#include "mst/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <string_view>
#include <unordered_map>

#include "mst/util/binary_io.hpp"
#include "mst/util/rng.hpp"

namespace mst::data {

std::string_view to_string(DataErrc code) {
  switch (code) {
    case DataErrc::MissingAnnotation: return "MissingAnnotation";
    case DataErrc::DuplicateAnnotation: return "DuplicateAnnotation";
    case DataErrc::InvalidAnnotation: return "InvalidAnnotation";
    case DataErrc::EmptyClass: return "EmptyClass";
    case DataErrc::IoFailure: return "IoFailure";
    case DataErrc::BadMagic: return "BadMagic";
    case DataErrc::VersionMismatch: return "VersionMismatch";
    case DataErrc::CorruptRecord: return "CorruptRecord";
  }
  return "Unknown";
}

std::string_view to_string(Label label) { return label == Label::Positive ? "positive" : "negative"; }

DataError::DataError(DataErrc code, const std::string& message)
    : Error(std::string(to_string(code)) + ": " + message), errc_(code) {}

void ValenceAnnotation::validate() const {
  if (valence_series.empty()) throw DataError(DataErrc::InvalidAnnotation, piece_id + ": empty valence series");
  for (double v : valence_series) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw DataError(DataErrc::InvalidAnnotation, piece_id + ": valence " + std::to_string(v) + " outside [-1, 1]");
    }
  }
}

Label label_piece(const ValenceAnnotation& annotation) {
  annotation.validate();
  const double sum = std::accumulate(annotation.valence_series.begin(), annotation.valence_series.end(), 0.0);
  return sum / static_cast<double>(annotation.valence_series.size()) >= 0.0 ? Label::Positive : Label::Negative;
}

namespace {

// Keeps `keep` of `items`, chosen uniformly without replacement, in original order.
std::vector<LabeledPhrase> downsample(std::vector<LabeledPhrase> items, std::size_t keep, Rng& rng) {
  if (items.size() <= keep) return items;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<LabeledPhrase> out;
  out.reserve(keep);
  for (std::size_t idx : order) out.push_back(std::move(items[idx]));
  return out;
}

constexpr char kMagic[4] = {'P', 'R', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

LabeledDataset build_dataset(std::span<const PiecePhrases> pieces, std::span<const ValenceAnnotation> annotations,
                             std::uint64_t seed, BuildReport* report) {
  std::unordered_map<std::string, const ValenceAnnotation*> by_id;
  for (const auto& a : annotations) {
    a.validate();
    if (!by_id.emplace(a.piece_id, &a).second) {
      throw DataError(DataErrc::DuplicateAnnotation, "piece '" + a.piece_id + "' is annotated more than once");
    }
  }

  std::vector<const PiecePhrases*> sorted;
  sorted.reserve(pieces.size());
  for (const auto& p : pieces) sorted.push_back(&p);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PiecePhrases* a, const PiecePhrases* b) { return a->piece_id < b->piece_id; });

  BuildReport counts;
  std::vector<LabeledPhrase> negative;
  std::vector<LabeledPhrase> positive;
  for (const PiecePhrases* piece : sorted) {
    auto it = by_id.find(piece->piece_id);
    if (it == by_id.end()) {
      throw DataError(DataErrc::MissingAnnotation, "no valence annotation for piece '" + piece->piece_id + "'");
    }
    if (!piece->window_indices.empty() && piece->window_indices.size() != piece->phrases.size()) {
      throw DataError(DataErrc::CorruptRecord, piece->piece_id + ": window index count does not match phrases");
    }
    const Label label = label_piece(*it->second);
    auto& target = label == Label::Positive ? positive : negative;
    auto& cls = label == Label::Positive ? counts.positive : counts.negative;
    (label == Label::Positive ? counts.positive_pieces : counts.negative_pieces) += 1;
    cls.windows += piece->total_windows == 0 ? piece->phrases.size() : piece->total_windows;
    cls.nonzero += piece->phrases.size();
    for (std::size_t i = 0; i < piece->phrases.size(); ++i) {
      const std::uint32_t index =
          piece->window_indices.empty() ? static_cast<std::uint32_t>(i) : piece->window_indices[i];
      target.push_back({piece->phrases[i], label, piece->piece_id, index});
    }
  }
  if (negative.empty() || positive.empty()) {
    throw DataError(DataErrc::EmptyClass, "negative has " + std::to_string(negative.size()) + " phrases, positive has " +
                                              std::to_string(positive.size()));
  }

  Rng rng(seed);
  const std::size_t size = std::min(negative.size(), positive.size());
  LabeledDataset ds;
  ds.seed = seed;
  ds.negative = downsample(std::move(negative), size, rng);
  ds.positive = downsample(std::move(positive), size, rng);
  ds.mixed_pool.reserve(2 * size);
  for (const auto& lp : ds.negative) ds.mixed_pool.push_back(lp.phrase);
  for (const auto& lp : ds.positive) ds.mixed_pool.push_back(lp.phrase);
  counts.negative.balanced = size;
  counts.positive.balanced = size;
  if (report != nullptr) *report = counts;
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds) {
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(ds.negative.size()));
  w.u32(static_cast<std::uint32_t>(ds.positive.size()));
  w.u64(ds.seed);
  for (const auto* cls : {&ds.negative, &ds.positive}) {
    for (const auto& lp : *cls) {
      w.u8(static_cast<std::uint8_t>(lp.label));
      w.str(lp.source_piece);
      w.u32(lp.phrase_index);
      w.raw(lp.phrase.cells());
    }
  }
  return w.take();
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw DataError(DataErrc::BadMagic, "not a PRDS dataset file");
  }
  ByteReader r(bytes.subspan(4));
  LabeledDataset ds;
  try {
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
      throw DataError(DataErrc::VersionMismatch, "dataset version " + std::to_string(version) + ", expected " +
                                                     std::to_string(kVersion));
    }
    const std::uint32_t n_negative = r.u32();
    const std::uint32_t n_positive = r.u32();
    ds.seed = r.u64();
    // Smallest possible record: label, empty id, index, cells.
    constexpr std::size_t kMinRecord = 1 + 4 + 4 + roll::kCells;
    if ((std::uint64_t{n_negative} + n_positive) * kMinRecord > r.remaining()) {
      throw DataError(DataErrc::CorruptRecord, "record counts exceed file size");
    }
    for (std::uint32_t i = 0; i < n_negative + n_positive; ++i) {
      const Label expected = i < n_negative ? Label::Negative : Label::Positive;
      const std::size_t at = 4 + r.position();
      const std::uint8_t label = r.u8();
      if (label != static_cast<std::uint8_t>(expected)) {
        throw DataError(DataErrc::CorruptRecord, "record " + std::to_string(i) + " at byte " + std::to_string(at) +
                                                     ": unexpected label " + std::to_string(label));
      }
      LabeledPhrase lp;
      lp.label = expected;
      lp.source_piece = r.str();
      lp.phrase_index = r.u32();
      const auto cells = r.raw(roll::kCells);
      if (std::any_of(cells.begin(), cells.end(), [](std::uint8_t c) { return c > 1; })) {
        throw DataError(DataErrc::CorruptRecord, "record " + std::to_string(i) + ": cell value outside {0,1}");
      }
      lp.phrase = roll::PianoRollPhrase(cells);
      (expected == Label::Negative ? ds.negative : ds.positive).push_back(std::move(lp));
    }
  } catch (const ReadPastEnd& e) {
    throw DataError(DataErrc::CorruptRecord, "file truncated at byte " + std::to_string(4 + e.offset()));
  }
  if (!r.at_end()) {
    throw DataError(DataErrc::CorruptRecord, std::to_string(r.remaining()) + " unexpected bytes after last record");
  }
  for (const auto& lp : ds.negative) ds.mixed_pool.push_back(lp.phrase);
  for (const auto& lp : ds.positive) ds.mixed_pool.push_back(lp.phrase);
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(ds);
  if (!write_file(path, bytes)) throw DataError(DataErrc::IoFailure, "cannot write " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  if (!read_file(path, bytes)) throw DataError(DataErrc::IoFailure, "cannot read " + path.string());
  return decode_dataset(bytes);
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path) {
  auto out = dataset_path;
  out.replace_extension(".meta.json");
  return out;
}

namespace {

ClassStats stats_of(std::size_t count, std::size_t on_cells) {
  ClassStats s;
  s.count = count;
  s.mean_density = count == 0 ? 0.0
                              : static_cast<double>(on_cells) / (static_cast<double>(roll::kCells) * static_cast<double>(count));
  return s;
}

}  // namespace

DatasetStats dataset_stats(const LabeledDataset& ds) {
  DatasetStats stats;
  std::size_t on_negative = 0;
  std::size_t on_positive = 0;
  std::size_t on_mixed = 0;
  for (const auto& lp : ds.negative) {
    on_negative += lp.phrase.count_on();
    ++stats.phrases_per_piece[lp.source_piece];
  }
  for (const auto& lp : ds.positive) {
    on_positive += lp.phrase.count_on();
    ++stats.phrases_per_piece[lp.source_piece];
  }
  for (const auto& p : ds.mixed_pool) on_mixed += p.count_on();
  stats.negative = stats_of(ds.negative.size(), on_negative);
  stats.positive = stats_of(ds.positive.size(), on_positive);
  stats.mixed = stats_of(ds.mixed_pool.size(), on_mixed);
  return stats;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  for (auto& f : fields) {
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r' || f.back() == '\t')) f.pop_back();
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
  }
  return fields;
}

double parse_value(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError(DataErrc::InvalidAnnotation, "line " + std::to_string(line_no) + ": bad valence '" + s + "'");
  }
  return v;
}

std::string file_stem(const std::string& path_text) {
  return std::filesystem::path(path_text).stem().string();
}

}  // namespace

std::vector<ValenceAnnotation> parse_annotations(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    rows.push_back(split_csv_line(line));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw DataError(DataErrc::InvalidAnnotation, "annotation file is empty");

  const auto& header = rows.front();
  std::vector<ValenceAnnotation> out;
  if (header.front() == "piece_id") {
    for (std::size_t r = 1; r < rows.size(); ++r) {
      ValenceAnnotation a;
      a.piece_id = rows[r].front();
      if (a.piece_id.empty()) {
        throw DataError(DataErrc::InvalidAnnotation, "line " + std::to_string(line_numbers[r]) + ": empty piece_id");
      }
      for (std::size_t c = 1; c < rows[r].size(); ++c) {
        if (rows[r][c].empty()) continue;
        a.valence_series.push_back(parse_value(rows[r][c], line_numbers[r]));
      }
      a.validate();
      out.push_back(std::move(a));
    }
    return out;
  }

  const auto midi_col = std::find(header.begin(), header.end(), "midi");
  const auto valence_col = std::find(header.begin(), header.end(), "valence");
  if (midi_col == header.end() || valence_col == header.end()) {
    throw DataError(DataErrc::InvalidAnnotation,
                    "header must start with 'piece_id' or contain 'midi' and 'valence' columns");
  }
  const auto mi = static_cast<std::size_t>(midi_col - header.begin());
  const auto vi = static_cast<std::size_t>(valence_col - header.begin());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() <= std::max(mi, vi)) {
      throw DataError(DataErrc::InvalidAnnotation, "line " + std::to_string(line_numbers[r]) + ": missing columns");
    }
    ValenceAnnotation a;
    a.piece_id = file_stem(rows[r][mi]);
    a.valence_series.push_back(parse_value(rows[r][vi], line_numbers[r]));
    a.validate();
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<ValenceAnnotation> read_annotations(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  if (!read_file(path, bytes)) throw DataError(DataErrc::IoFailure, "cannot read " + path.string());
  return parse_annotations(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace mst::data
