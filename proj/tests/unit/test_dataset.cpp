#include <algorithm>
#include <cstring>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "mst/data/dataset.hpp"
#include "mst/util/rng.hpp"
#include "support/generators.hpp"

using namespace mst;
using namespace mst::data;
using roll::kCells;
using roll::kPitches;
using roll::kSteps;
using roll::PianoRollPhrase;

using testing::random_dataset;

namespace {

constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4 + 8;

ValenceAnnotation annotation(std::string id, std::vector<double> series) { return {std::move(id), std::move(series)}; }

PianoRollPhrase marked_phrase(std::size_t tag) {
  PianoRollPhrase p;
  p.set(tag % kSteps, (tag / kSteps) % kPitches, true);
  return p;
}

PiecePhrases piece(std::string id, std::size_t phrases, std::size_t tag_base) {
  PiecePhrases pp;
  pp.piece_id = std::move(id);
  for (std::size_t i = 0; i < phrases; ++i) pp.phrases.push_back(marked_phrase(tag_base + i));
  return pp;
}

DataErrc data_error(auto&& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.errc();
  }
  FAIL("no DataError thrown");
  return DataErrc::IoFailure;
}

}  // namespace

TEST_CASE("label_piece: sign of the mean valence") {
  CHECK(label_piece(annotation("a", {0.5, 0.7})) == Label::Positive);
  CHECK(label_piece(annotation("b", {-0.2, -0.4, -0.9})) == Label::Negative);
  CHECK(label_piece(annotation("c", {-0.5, 0.5})) == Label::Positive);  // mean exactly 0
  CHECK(label_piece(annotation("d", {0.0})) == Label::Positive);
  CHECK(label_piece(annotation("e", {-0.01})) == Label::Negative);
}

TEST_CASE("label_piece: bad annotations are rejected") {
  CHECK(data_error([] { (void)label_piece(annotation("x", {})); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)label_piece(annotation("x", {1.5})); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)label_piece(annotation("x", {-1.01})); }) == DataErrc::InvalidAnnotation);
  CHECK(label_piece(annotation("x", {-1.0, 1.0})) == Label::Positive);
}

TEST_CASE("build: larger class is downsampled to the smaller one") {
  std::vector<PiecePhrases> pieces = {piece("pos", 10, 0), piece("neg", 6, 100)};
  const std::vector<ValenceAnnotation> ann = {annotation("pos", {0.6}), annotation("neg", {-0.6})};
  BuildReport report;
  const auto ds = build_dataset(pieces, ann, 42, &report);
  CHECK(ds.negative.size() == 6);
  CHECK(ds.positive.size() == 6);
  CHECK(ds.mixed_pool.size() == 12);
  CHECK(ds.seed == 42);
  CHECK(report.positive.nonzero == 10);
  CHECK(report.negative.nonzero == 6);
  CHECK(report.positive.balanced == 6);
  CHECK(report.positive_pieces == 1);
  CHECK(report.negative_pieces == 1);

  // Negatives kept whole, in order; positives are a distinct ordered subset.
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(ds.negative[i].phrase == marked_phrase(100 + i));
    CHECK(ds.negative[i].phrase_index == i);
    CHECK(ds.negative[i].source_piece == "neg");
    CHECK(ds.negative[i].label == Label::Negative);
  }
  std::set<std::uint32_t> kept;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& lp = ds.positive[i];
    CHECK(lp.phrase == marked_phrase(lp.phrase_index));
    if (i > 0) CHECK(lp.phrase_index > ds.positive[i - 1].phrase_index);
    kept.insert(lp.phrase_index);
  }
  CHECK(kept.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ds.mixed_pool[i] == ds.negative[i].phrase);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ds.mixed_pool[6 + i] == ds.positive[i].phrase);
}

TEST_CASE("build: deterministic for a seed and independent of piece order") {
  std::vector<PiecePhrases> pieces = {piece("p1", 7, 0), piece("n1", 3, 50), piece("p2", 5, 20), piece("n2", 2, 80)};
  const std::vector<ValenceAnnotation> ann = {annotation("p1", {0.1}), annotation("p2", {0.3, -0.1}),
                                              annotation("n1", {-0.3}), annotation("n2", {-1.0})};
  const auto a = build_dataset(pieces, ann, 7);
  const auto b = build_dataset(pieces, ann, 7);
  CHECK(a == b);
  std::reverse(pieces.begin(), pieces.end());
  CHECK(build_dataset(pieces, ann, 7) == a);

  bool any_differs = false;
  for (std::uint64_t s = 8; s < 20 && !any_differs; ++s) any_differs = build_dataset(pieces, ann, s).positive != a.positive;
  CHECK(any_differs);
}

TEST_CASE("build: window indices and totals are carried through") {
  PiecePhrases p = piece("p", 2, 0);
  p.window_indices = {1, 4};
  p.total_windows = 6;
  PiecePhrases n = piece("n", 2, 10);
  const std::vector<ValenceAnnotation> ann = {annotation("p", {0.2}), annotation("n", {-0.2})};
  BuildReport report;
  const auto ds = build_dataset(std::vector{p, n}, ann, 1, &report);
  CHECK(ds.positive[0].phrase_index == 1);
  CHECK(ds.positive[1].phrase_index == 4);
  CHECK(report.positive.windows == 6);
  CHECK(report.negative.windows == 2);

  p.window_indices = {1};
  CHECK(data_error([&] { (void)build_dataset(std::vector{p, n}, ann, 1); }) == DataErrc::CorruptRecord);
}

TEST_CASE("build: annotation and class errors") {
  const std::vector<PiecePhrases> only_positive = {piece("a", 3, 0), piece("b", 2, 10)};
  const std::vector<ValenceAnnotation> both_positive = {annotation("a", {0.4}), annotation("b", {0.9})};
  CHECK(data_error([&] { (void)build_dataset(only_positive, both_positive, 1); }) == DataErrc::EmptyClass);

  const std::vector<ValenceAnnotation> missing = {annotation("a", {0.4})};
  CHECK(data_error([&] { (void)build_dataset(only_positive, missing, 1); }) == DataErrc::MissingAnnotation);

  const std::vector<ValenceAnnotation> duplicate = {annotation("a", {0.4}), annotation("b", {-0.4}),
                                                    annotation("a", {-0.1})};
  CHECK(data_error([&] { (void)build_dataset(only_positive, duplicate, 1); }) == DataErrc::DuplicateAnnotation);
}

TEST_CASE("codec: header layout") {
  LabeledDataset ds;
  ds.seed = 0x0102030405060708ull;
  ds.negative.push_back({marked_phrase(3), Label::Negative, "ab", 9});
  ds.positive.push_back({marked_phrase(5), Label::Positive, "", 2});
  const auto bytes = encode_dataset(ds);
  REQUIRE(bytes.size() == kHeaderBytes + (1 + 4 + 2 + 4 + kCells) + (1 + 4 + 0 + 4 + kCells));
  CHECK(std::memcmp(bytes.data(), "PRDS", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 1);   // negative count, little-endian
  CHECK(bytes[10] == 1);  // positive count
  CHECK(bytes[14] == 0x08);
  CHECK(bytes[21] == 0x01);
  CHECK(bytes[22] == 0);  // first record label
  CHECK(bytes[23] == 2);  // id length
  CHECK(bytes[27] == 'a');
  CHECK(bytes[29] == 9);  // phrase index
  CHECK(bytes[33 + 3 * kPitches] == 1);  // cell (step 3, pitch 0), row-major
}

TEST_CASE("codec: random datasets round-trip bit-identically") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ds = random_dataset(rng);
    const auto bytes = encode_dataset(ds);
    const auto back = decode_dataset(bytes);
    REQUIRE(back == ds);
    REQUIRE(encode_dataset(back) == bytes);
  }
}

TEST_CASE("codec: every truncation is a CorruptRecord") {
  Rng rng(5);
  LabeledDataset ds;
  while (ds.negative.empty()) ds = random_dataset(rng);
  const auto bytes = encode_dataset(ds);
  for (std::size_t len = 4; len < bytes.size(); ++len) {
    const std::span<const std::uint8_t> cut(bytes.data(), len);
    REQUIRE(data_error([&] { (void)decode_dataset(cut); }) == DataErrc::CorruptRecord);
  }
  for (std::size_t len = 0; len < 4; ++len) {
    const std::span<const std::uint8_t> cut(bytes.data(), len);
    CHECK(data_error([&] { (void)decode_dataset(cut); }) == DataErrc::BadMagic);
  }
}

TEST_CASE("codec: typed errors for structural corruption") {
  LabeledDataset ds;
  ds.negative.push_back({marked_phrase(1), Label::Negative, "n", 0});
  ds.positive.push_back({marked_phrase(2), Label::Positive, "p", 0});
  const auto good = encode_dataset(ds);
  auto mutate = [&](auto&& edit) {
    auto b = good;
    edit(b);
    return data_error([&] { (void)decode_dataset(b); });
  };
  CHECK(mutate([](auto& b) { b[0] = 'X'; }) == DataErrc::BadMagic);
  CHECK(mutate([](auto& b) { b[4] = 2; }) == DataErrc::VersionMismatch);
  CHECK(mutate([](auto& b) { b[6] = 200; }) == DataErrc::CorruptRecord);  // count beyond file
  CHECK(mutate([](auto& b) { b[22] = 1; }) == DataErrc::CorruptRecord);   // label out of class
  CHECK(mutate([](auto& b) { b[22] = 7; }) == DataErrc::CorruptRecord);
  CHECK(mutate([](auto& b) { b[23] = 0xFF; }) == DataErrc::CorruptRecord);  // id length
  CHECK(mutate([](auto& b) { b[kHeaderBytes + 10 + 100] = 2; }) == DataErrc::CorruptRecord);  // cell value
  CHECK(mutate([](auto& b) { b.push_back(0); }) == DataErrc::CorruptRecord);
}

TEST_CASE("codec: random byte corruption is either rejected or decoded faithfully") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto bytes = encode_dataset(random_dataset(rng));
    const std::size_t flips = 1 + rng.below(4);
    for (std::size_t f = 0; f < flips; ++f) bytes[rng.below(bytes.size())] = static_cast<std::uint8_t>(rng.below(256));
    try {
      const auto ds = decode_dataset(bytes);
      REQUIRE(encode_dataset(ds) == bytes);
    } catch (const DataError&) {
    }
  }
}

TEST_CASE("codec: save and load through a file") {
  Rng rng(3);
  const auto ds = random_dataset(rng);
  const auto path = std::filesystem::temp_directory_path() / "mst_test_dataset.prds";
  save_dataset(ds, path);
  CHECK(load_dataset(path) == ds);
  std::filesystem::remove(path);
  CHECK(data_error([&] { (void)load_dataset(path); }) == DataErrc::IoFailure);
  CHECK(sidecar_path("out/train.prds") == std::filesystem::path("out/train.meta.json"));
}

TEST_CASE("stats: counts and densities") {
  LabeledDataset ds;
  PianoRollPhrase full;
  for (std::size_t c = 0; c < kCells; ++c) full.set(c / kPitches, c % kPitches, true);
  PianoRollPhrase three;
  three.set(0, 0, true);
  three.set(1, 1, true);
  three.set(2, 2, true);
  ds.negative = {{full, Label::Negative, "x", 0}, {full, Label::Negative, "y", 0}};
  ds.positive = {{three, Label::Positive, "x", 1}, {PianoRollPhrase{}, Label::Positive, "z", 0}};
  for (const auto& lp : ds.negative) ds.mixed_pool.push_back(lp.phrase);
  for (const auto& lp : ds.positive) ds.mixed_pool.push_back(lp.phrase);

  const auto s = dataset_stats(ds);
  CHECK(s.negative.count == 2);
  CHECK(s.negative.mean_density == 1.0);
  CHECK(s.positive.count == 2);
  CHECK(s.positive.mean_density == doctest::Approx(3.0 / (2.0 * kCells)));
  CHECK(s.mixed.count == 4);
  CHECK(s.mixed.mean_density == doctest::Approx((2.0 * kCells + 3.0) / (4.0 * kCells)));
  CHECK(s.phrases_per_piece.at("x") == 2);
  CHECK(s.phrases_per_piece.at("y") == 1);
  CHECK(s.phrases_per_piece.at("z") == 1);

  const auto empty = dataset_stats(LabeledDataset{});
  CHECK(empty.mixed.count == 0);
  CHECK(empty.mixed.mean_density == 0.0);
}

TEST_CASE("annotations: native layout with variable-length series") {
  const auto ann = parse_annotations("piece_id,valence_0,valence_1,valence_2\nalpha,0.5,-0.25,\n\n\"be,ta\",-1\r\n");
  REQUIRE(ann.size() == 2);
  CHECK(ann[0].piece_id == "alpha");
  CHECK(ann[0].valence_series == std::vector<double>{0.5, -0.25});
  CHECK(ann[1].piece_id == "be,ta");
  CHECK(ann[1].valence_series == std::vector<double>{-1.0});
}

TEST_CASE("annotations: midi/valence column layout") {
  const auto ann = parse_annotations("id,midi,valence,arousal\n1,pieces/Song One.mid,0.3,0.1\n2,x/y.mid,-0.7,0\n");
  REQUIRE(ann.size() == 2);
  CHECK(ann[0].piece_id == "Song One");
  CHECK(ann[0].valence_series == std::vector<double>{0.3});
  CHECK(ann[1].piece_id == "y");
  CHECK(ann[1].valence_series == std::vector<double>{-0.7});
}

TEST_CASE("annotations: malformed input") {
  CHECK(data_error([] { (void)parse_annotations(""); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)parse_annotations("name,score\na,1\n"); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)parse_annotations("piece_id,v\na,abc\n"); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)parse_annotations("piece_id,v\na,2.0\n"); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)parse_annotations("piece_id,v\na,\n"); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)parse_annotations("piece_id,v\n,0.1\n"); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)parse_annotations("midi,valence\na.mid\n"); }) == DataErrc::InvalidAnnotation);
  CHECK(data_error([] { (void)read_annotations("/nonexistent/ann.csv"); }) == DataErrc::IoFailure);
}
