#include <algorithm>
#include <map>

#include "json.hpp"
#include "mst/cli/cli.hpp"
#include "mst/util/binary_io.hpp"

namespace mst::cli {

namespace {

bool is_midi_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".mid" || ext == ".midi";
}

}  // namespace

std::vector<std::filesystem::path> list_midi_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw CliError("IoFailure", dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (auto it = std::filesystem::recursive_directory_iterator(dir, ec); !ec && it != std::filesystem::end(it);
       it.increment(ec)) {
    if (it->is_regular_file(ec) && is_midi_extension(it->path())) files.push_back(it->path());
  }
  if (ec) throw CliError("IoFailure", "cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

CorpusResult build_corpus_dataset(const CorpusOptions& options) {
  options.conversion.validate();
  const auto annotations = data::read_annotations(options.annotations);
  std::map<std::string, bool> annotated;
  for (const auto& a : annotations) annotated[a.piece_id] = true;

  CorpusResult result;
  auto& report = result.report;
  std::vector<data::PiecePhrases> pieces;
  std::map<std::string, std::filesystem::path> seen;
  for (const auto& path : list_midi_files(options.midi_dir)) {
    ++report.files_read;
    const std::string name = path.lexically_relative(options.midi_dir).string();
    std::vector<std::uint8_t> bytes;
    if (!read_file(path, bytes)) throw CliError("IoFailure", "cannot read " + path.string());

    midi::MidiFile file;
    try {
      file = midi::parse_smf(bytes);
    } catch (const midi::MidiError& e) {
      if (!options.skip_invalid) {
        throw CliError(std::string(e.code()), name + ": " + e.what(), e.is_internal());
      }
      ++report.invalid;
      report.invalid_files.push_back(name + ": " + e.what());
      continue;
    }
    if (options.conversion.require_four_four && !roll::check_time_signature(file)) {
      ++report.rejected;
      report.rejected_files.push_back(name);
      continue;
    }
    ++report.viable;

    const std::string id = path.stem().string();
    if (auto [it, fresh] = seen.emplace(id, path); !fresh) {
      throw CliError("DuplicatePiece", name + ": piece id '" + id + "' is also used by " + it->second.string());
    }
    if (!annotated.contains(id)) {
      throw data::DataError(data::DataErrc::MissingAnnotation, name + ": no valence annotation for piece '" + id + "'");
    }
    auto split = roll::split_phrases(file, options.conversion);
    if (split.phrases.empty()) ++report.without_phrases;
    pieces.push_back({id, std::move(split.phrases), std::move(split.window_indices), split.total_windows});
  }

  result.dataset = data::build_dataset(pieces, annotations, options.seed, &report.build);
  return result;
}

std::string corpus_sidecar_json(const CorpusOptions& options, const CorpusReport& report) {
  using nlohmann::ordered_json;
  auto counts = [](const data::ClassCounts& c) {
    return ordered_json{{"windows", c.windows}, {"nonzero_phrases", c.nonzero}, {"balanced", c.balanced}};
  };
  ordered_json j;
  j["source"] = {{"midi_dir", options.midi_dir.string()}, {"annotations", options.annotations.string()}};
  j["config"] = {{"seed", options.seed},
                 {"skip_invalid", options.skip_invalid},
                 {"pitch_low", options.conversion.pitch_low},
                 {"pitch_count", options.conversion.pitch_count},
                 {"require_four_four", options.conversion.require_four_four},
                 {"steps_per_phrase", roll::kSteps}};
  j["files"] = {{"read", report.files_read},
                {"rejected_time_signature", report.rejected},
                {"invalid", report.invalid},
                {"viable", report.viable},
                {"without_phrases", report.without_phrases}};
  j["classes"] = {{"negative", counts(report.build.negative)}, {"positive", counts(report.build.positive)}};
  j["pieces"] = {{"negative", report.build.negative_pieces}, {"positive", report.build.positive_pieces}};
  j["rejected_files"] = report.rejected_files;
  j["invalid_files"] = report.invalid_files;
  return j.dump(2) + "\n";
}

}  // namespace mst::cli
