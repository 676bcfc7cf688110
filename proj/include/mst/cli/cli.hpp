#pragma once

// The `mst` command line: subcommands over the whole pipeline, plus the
// corpus-to-dataset pipeline that build-dataset runs.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mst/data/dataset.hpp"
#include "mst/roll/pianoroll.hpp"
#include "mst/util/error.hpp"

namespace mst::cli {

// Errors raised by the CLI itself (missing inputs, refused outputs) and
// module errors re-raised with the offending file name.
class CliError : public Error {
 public:
  CliError(std::string code, const std::string& message, bool internal = false)
      : Error(message), code_(std::move(code)), internal_(internal) {}
  [[nodiscard]] std::string_view code() const noexcept override { return code_; }
  [[nodiscard]] bool is_internal() const noexcept override { return internal_; }

 private:
  std::string code_;
  bool internal_;
};

struct CorpusOptions {
  std::filesystem::path midi_dir;
  std::filesystem::path annotations;
  std::uint64_t seed = 0;
  bool skip_invalid = false;  // unparseable files are counted and skipped instead of failing the run
  roll::ConversionConfig conversion;
};

struct CorpusReport {
  std::size_t files_read = 0;
  std::size_t rejected = 0;  // failed the 4/4 filter
  std::size_t invalid = 0;   // unparseable, skipped under skip_invalid
  std::size_t viable = 0;    // passed parsing and the 4/4 filter
  std::size_t without_phrases = 0;  // viable, but no note fell on the pitch range
  std::vector<std::string> rejected_files;
  std::vector<std::string> invalid_files;  // "name: error"
  data::BuildReport build;
};

struct CorpusResult {
  data::LabeledDataset dataset;
  CorpusReport report;
};

// All *.mid / *.midi files under midi_dir (recursive), in path order.
std::vector<std::filesystem::path> list_midi_files(const std::filesystem::path& dir);

// Parse -> 4/4 filter -> phrase split -> labelling -> balancing. The piece id
// of a file is its stem. Throws module errors prefixed with the file name.
CorpusResult build_corpus_dataset(const CorpusOptions& options);

// Sidecar metadata for a built dataset, as JSON text.
std::string corpus_sidecar_json(const CorpusOptions& options, const CorpusReport& report);

// Runs one command line (args excludes the program name). Results go to
// `out`, progress and diagnostics to `err`. Returns the process exit code:
// 0 success, 1 input or data error, 2 internal invariant failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mst::cli
