#pragma once

// Valence-labelled two-domain phrase dataset and its on-disk format.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mst/roll/pianoroll.hpp"
#include "mst/util/error.hpp"

namespace mst::data {

enum class DataErrc {
  MissingAnnotation,
  DuplicateAnnotation,
  InvalidAnnotation,
  EmptyClass,
  IoFailure,
  BadMagic,
  VersionMismatch,
  CorruptRecord,
};

std::string_view to_string(DataErrc code);

class DataError : public Error {
 public:
  DataError(DataErrc code, const std::string& message);
  [[nodiscard]] std::string_view code() const noexcept override { return to_string(errc_); }
  [[nodiscard]] DataErrc errc() const noexcept { return errc_; }

 private:
  DataErrc errc_;
};

enum class Label : std::uint8_t { Negative = 0, Positive = 1 };

std::string_view to_string(Label label);

struct ValenceAnnotation {
  std::string piece_id;
  std::vector<double> valence_series;

  // Throws DataError{InvalidAnnotation}: empty series or value outside [-1, 1].
  void validate() const;
};

struct LabeledPhrase {
  roll::PianoRollPhrase phrase;
  Label label = Label::Negative;
  std::string source_piece;
  std::uint32_t phrase_index = 0;
  friend bool operator==(const LabeledPhrase&, const LabeledPhrase&) = default;
};

struct LabeledDataset {
  std::vector<LabeledPhrase> negative;
  std::vector<LabeledPhrase> positive;
  std::vector<roll::PianoRollPhrase> mixed_pool;  // negatives then positives
  std::uint64_t seed = 0;
  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// One converted source piece. window_indices, when non-empty, gives the
// window number of each phrase; otherwise phrase i is window i.
struct PiecePhrases {
  std::string piece_id;
  std::vector<roll::PianoRollPhrase> phrases;
  std::vector<std::uint32_t> window_indices;
  std::size_t total_windows = 0;  // including dropped all-zero windows; 0 = phrases.size()
};

struct ClassCounts {
  std::size_t windows = 0;   // every 64-step window, including all-zero ones
  std::size_t nonzero = 0;   // phrases before balancing
  std::size_t balanced = 0;  // phrases after balancing
};

struct BuildReport {
  ClassCounts negative;
  ClassCounts positive;
  std::size_t negative_pieces = 0;
  std::size_t positive_pieces = 0;
};

// Positive iff mean(valence_series) >= 0.
Label label_piece(const ValenceAnnotation& annotation);

// Pieces are ordered by piece_id before labelling, so the result does not
// depend on input order. The larger class is downsampled (seeded, without
// replacement, original order kept) to the size of the smaller one.
// Throws DataError{MissingAnnotation, DuplicateAnnotation, InvalidAnnotation, EmptyClass}.
LabeledDataset build_dataset(std::span<const PiecePhrases> pieces, std::span<const ValenceAnnotation> annotations,
                             std::uint64_t seed, BuildReport* report = nullptr);

// Exact binary form (see README for the layout). Throws DataError.
std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

// "<stem>.meta.json" next to a dataset file.
std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path);

struct ClassStats {
  std::size_t count = 0;
  double mean_density = 0.0;  // on-cells / (64 * 84 * count)
};

struct DatasetStats {
  ClassStats negative;
  ClassStats positive;
  ClassStats mixed;
  std::map<std::string, std::size_t> phrases_per_piece;
};

DatasetStats dataset_stats(const LabeledDataset& ds);

// Annotation CSV. Native layout: header "piece_id,valence_0,...", one row per
// piece with a variable number of valence values. Also accepted: any header
// with "midi" and "valence" columns (single value per row; piece_id is the
// stem of the midi column). Throws DataError{IoFailure, InvalidAnnotation}.
std::vector<ValenceAnnotation> parse_annotations(std::string_view text);
std::vector<ValenceAnnotation> read_annotations(const std::filesystem::path& path);

}  // namespace mst::data
