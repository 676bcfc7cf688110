#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "mst/cli/cli.hpp"
#include "mst/gan/checkpoint.hpp"
#include "mst/gan/train.hpp"
#include "mst/nn/gradcheck.hpp"
#include "mst/util/binary_io.hpp"
#include "mst/util/kv_config.hpp"

namespace mst::cli {

namespace {

constexpr const char* kSeedEnv = "MST_SEED";

std::uint64_t parse_seed(std::string_view text, const std::string& source) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw CliError("BadConfig", source + ": '" + std::string(text) + "' is not an unsigned integer seed");
  }
  return v;
}

// Seed used when no flag or config file gives one.
std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnv);
  return env == nullptr ? 0 : parse_seed(env, kSeedEnv);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  if (!read_file(path, bytes)) throw CliError("IoFailure", "cannot read " + path.string());
  return bytes;
}

KvConfig read_config_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return KvConfig::parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const std::invalid_argument& e) {
    throw CliError("BadConfig", path.string() + ": " + e.what());
  }
}

void apply_assignments(KvConfig& kv, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw CliError("BadConfig", "--set expects key=value, got '" + a + "'");
    kv.set(a.substr(0, eq), a.substr(eq + 1));
  }
}

bool given(const CLI::Option* opt) { return opt->count() > 0; }

// ---------------------------------------------------------------- build-dataset

struct BuildArgs {
  std::string midi_dir, annotations, out;
  std::uint64_t seed = 0;
  bool skip_invalid = false;
  CLI::Option* seed_opt = nullptr;
};

int cmd_build_dataset(const BuildArgs& a, std::ostream& out, std::ostream& err) {
  CorpusOptions options;
  options.midi_dir = a.midi_dir;
  options.annotations = a.annotations;
  options.seed = given(a.seed_opt) ? a.seed : default_seed();
  options.skip_invalid = a.skip_invalid;

  err << "building dataset from " << options.midi_dir.string() << " (seed " << options.seed << ")\n";
  const auto result = build_corpus_dataset(options);
  const auto& r = result.report;
  for (const auto& f : r.rejected_files) err << "rejected (time signature): " << f << "\n";
  for (const auto& f : r.invalid_files) err << "skipped (invalid): " << f << "\n";

  data::save_dataset(result.dataset, a.out);
  const auto sidecar = data::sidecar_path(a.out);
  const std::string json = corpus_sidecar_json(options, r);
  if (!write_file(sidecar, std::span(reinterpret_cast<const std::uint8_t*>(json.data()), json.size()))) {
    throw CliError("IoFailure", "cannot write " + sidecar.string());
  }

  out << "files read: " << r.files_read << "\n";
  out << "rejected: " << r.rejected << "\n";
  out << "invalid: " << r.invalid << "\n";
  out << "viable: " << r.viable << "\n";
  out << "pieces: negative " << r.build.negative_pieces << ", positive " << r.build.positive_pieces << "\n";
  for (const auto& [name, c] : {std::pair{"negative", r.build.negative}, std::pair{"positive", r.build.positive}}) {
    out << name << " phrases: windows " << c.windows << ", nonzero " << c.nonzero << ", balanced " << c.balanced
        << "\n";
  }
  out << "dataset: " << a.out << "\n";
  out << "metadata: " << sidecar.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------------ train

struct TrainArgs {
  std::string dataset, out_dir, config_file;
  std::vector<std::string> assignments;
  bool resume = false;
  gan::TrainingConfig cfg;
  gan::ArchitectureConfig arch;
  std::vector<std::pair<CLI::Option*, std::string>> keyed;  // flag -> config key
};

void store_flag_overrides(const TrainArgs& a, KvConfig& kv) {
  KvConfig all;
  a.cfg.store(all);
  a.arch.store(all);
  for (const auto& [opt, key] : a.keyed) {
    if (given(opt)) kv.set(key, *all.get(key));
  }
}

std::string banner(const gan::TrainingConfig& c, const gan::ArchitectureConfig& arch, std::size_t pairs) {
  std::ostringstream s;
  s << "training: epochs=" << c.epochs << " batch_size=" << c.batch_size << " lambda=" << format_double(c.lambda_cycle)
    << " gamma=" << format_double(c.gamma_mixed) << " lr=" << format_double(c.lr)
    << " lr_decay_start=" << c.lr_decay_start
    << " beta1=" << format_double(c.beta1) << " beta2=" << format_double(c.beta2) << " seed=" << c.seed
    << " checkpoint_every=" << c.checkpoint_every << " convergence=" << c.convergence_window << "/"
    << format_double(c.convergence_tolerance) << "\n";
  s << "architecture: base_filters=" << arch.base_filters << " residual_blocks=" << arch.residual_blocks
    << " edge_kernel=" << arch.edge_kernel << " residual_kernel=" << arch.residual_kernel
    << " score_kernel=" << arch.score_kernel << "\n";
  s << "dataset: " << pairs << " pairs per epoch\n";
  return s.str();
}

// Keeps the header and the rows of completed epochs of an existing history.
std::string surviving_history(const std::filesystem::path& path, std::size_t epochs_completed) {
  std::ifstream in(path);
  std::string kept = gan::history_csv_header() + "\n";
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (std::exchange(first, false)) continue;  // header
    std::size_t epoch = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), epoch);
    if (ec == std::errc() && epoch >= 1 && epoch <= epochs_completed) kept += line + "\n";
  }
  return kept;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto dataset = data::load_dataset(a.dataset);
  const std::filesystem::path dir = a.out_dir;

  KvConfig overrides;
  if (!a.config_file.empty()) overrides = read_config_file(a.config_file);
  apply_assignments(overrides, a.assignments);
  store_flag_overrides(a, overrides);
  for (const auto& [key, value] : overrides.values()) {
    if (!key.starts_with("train.") && !key.starts_with("arch.")) throw CliError("BadConfig", "unknown key " + key);
  }

  KvConfig base;
  gan::CycleGanModel model;
  gan::TrainingProgress progress;
  if (a.resume) {
    const auto latest = gan::latest_checkpoint(dir);
    if (!latest) {
      throw gan::GanError(gan::GanErrc::NoCheckpoint, "--resume: no checkpoint_epoch_*.mstc in " + dir.string());
    }
    auto ck = gan::load_checkpoint(*latest);
    ck.config.store(base);
    ck.model.arch.store(base);
    model = std::move(ck.model);
    progress = ck.progress;
    progress.converged = false;  // a resumed run may extend the budget
    err << "resuming from " << latest->string() << " after epoch " << progress.epochs_completed << "\n";
  } else {
    gan::TrainingConfig defaults;
    defaults.seed = default_seed();
    defaults.store(base);
    gan::ArchitectureConfig{}.store(base);
  }
  for (const auto& [key, value] : overrides.values()) base.set(key, value);
  const auto cfg = gan::TrainingConfig::load(base);
  const auto arch = gan::ArchitectureConfig::load(base);
  if (a.resume && !(arch == model.arch)) {
    throw CliError("BadConfig", "the architecture of a resumed run cannot change");
  }
  if (!a.resume) model = gan::CycleGanModel::create(arch, cfg.seed, cfg.adam());

  const std::size_t pairs = std::min(dataset.negative.size(), dataset.positive.size());
  err << banner(cfg, arch, pairs);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw CliError("IoFailure", "cannot create " + dir.string() + ": " + ec.message());
  const auto history_path = dir / "history.csv";
  const std::string history_prefix =
      a.resume ? surviving_history(history_path, progress.epochs_completed) : gan::history_csv_header() + "\n";
  std::ofstream history(history_path, std::ios::trunc);
  history << history_prefix;
  if (!history) throw CliError("IoFailure", "cannot write " + history_path.string());

  gan::TrainOptions opt;
  opt.checkpoint_dir = dir;
  opt.on_batch = [&](const gan::HistoryRow& row) { history << gan::history_csv_row(row) << "\n"; };
  opt.on_epoch = [&](const gan::EpochReport& r) {
    history.flush();
    err << "epoch " << r.epoch << "/" << cfg.epochs << ": G " << std::setprecision(6) << r.generator_loss << " D "
        << r.discriminator_loss << (r.converged ? " (converged)" : "");
    if (r.checkpoint) err << " -> " << r.checkpoint->filename().string();
    err << "\n";
  };
  progress = gan::train(model, dataset, cfg, progress, opt);
  history.close();
  if (!history) throw CliError("IoFailure", "cannot write " + history_path.string());

  out << "epochs: " << progress.epochs_completed << "\n";
  out << "converged: " << (progress.converged ? "yes" : "no") << "\n";
  if (auto latest = gan::latest_checkpoint(dir)) out << "checkpoint: " << latest->string() << "\n";
  out << "history: " << history_path.string() << "\n";
  return 0;
}

// --------------------------------------------------------------------- transfer

struct TransferArgs {
  std::string checkpoint, input, direction, output;
};

int cmd_transfer(const TransferArgs& a, std::ostream& out, std::ostream& err) {
  const auto ck = gan::load_checkpoint(a.checkpoint);
  const auto file = midi::parse_smf(read_bytes(a.input));
  const auto split = roll::split_phrases(file);
  if (split.phrases.empty()) throw CliError("EmptyResult", a.input + ": no notes in the pitch range to transfer");

  const auto dir = a.direction == "a2b" ? gan::Direction::AtoB : gan::Direction::BtoA;
  const auto transferred = gan::transfer(ck.model, split.phrases, dir);
  const auto bytes = midi::write_smf(roll::phrases_to_midi(transferred));
  const auto report = midi::validate_smf(bytes);
  if (!report.is_valid || report.has("unmatched-note-on")) {
    throw CliError("InvalidOutput", "refusing to write " + a.output + ": generated file fails validation", true);
  }
  if (!write_file(a.output, bytes)) throw CliError("IoFailure", "cannot write " + a.output);

  std::size_t on = 0;
  for (const auto& p : transferred) on += p.count_on();
  err << "transferred " << transferred.size() << " phrases (" << a.direction << "), " << on << " on-cells\n";
  out << "output: " << a.output << "\n";
  out << "phrases: " << transferred.size() << "\n";
  return 0;
}

// ------------------------------------------------------------- validate & co.

int cmd_validate(const std::string& path, std::ostream& out) {
  const auto report = midi::validate_smf(read_bytes(path));
  for (const auto& issue : report.issues) {
    out << (issue.severity == midi::Severity::Error ? "error " : "warning ") << issue.code << " at byte "
        << issue.offset << ": " << issue.message << "\n";
  }
  out << (report.is_valid ? "valid" : "invalid") << ": " << report.count(midi::Severity::Error) << " errors, "
      << report.count(midi::Severity::Warning) << " warnings\n";
  return report.is_valid ? 0 : 1;
}

int cmd_roundtrip(const std::string& path, std::ostream& out) {
  const auto first = roll::midi_to_phrases(midi::parse_smf(read_bytes(path)));
  if (first.empty()) throw CliError("EmptyResult", path + ": no notes in the pitch range");
  const auto second = roll::midi_to_phrases(midi::parse_smf(midi::write_smf(roll::phrases_to_midi(first))));
  if (second != first) {
    std::size_t i = 0;
    while (i < std::min(first.size(), second.size()) && first[i] == second[i]) ++i;
    throw CliError("RoundTripMismatch",
                   "round trip changed the phrases (" + std::to_string(first.size()) + " -> " +
                       std::to_string(second.size()) + ", first difference at phrase " + std::to_string(i) + ")",
                   true);
  }
  out << "OK, " << first.size() << " phrases, exact match\n";
  return 0;
}

int cmd_stats(const std::string& path, bool per_piece, std::ostream& out) {
  const auto s = data::dataset_stats(data::load_dataset(path));
  out << std::setprecision(6);
  for (const auto& [name, c] : {std::pair{"negative", s.negative}, std::pair{"positive", s.positive},
                                std::pair{"mixed", s.mixed}}) {
    out << name << ": " << c.count << " phrases, mean density " << c.mean_density << "\n";
  }
  out << "pieces: " << s.phrases_per_piece.size() << "\n";
  if (per_piece) {
    for (const auto& [piece, n] : s.phrases_per_piece) out << "  " << piece << ": " << n << "\n";
  }
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t cases = 20;
  double tolerance = nn::kGradCheckTolerance;
  CLI::Option* seed_opt = nullptr;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const std::uint64_t seed = given(a.seed_opt) ? a.seed : default_seed();
  const auto summaries = nn::run_gradcheck_suite(seed, a.cases, a.tolerance);
  bool ok = true;
  for (const auto& s : summaries) {
    out << (s.passed() ? "PASS " : "FAIL ") << std::left << std::setw(18) << s.layer << " cases " << s.cases
        << " failed " << s.failed_cases << " max rel error " << std::scientific << std::setprecision(3)
        << s.max_rel_error << std::defaultfloat;
    if (!s.passed()) out << " worst " << s.worst_case;
    out << "\n";
    ok = ok && s.passed();
  }
  out << (ok ? "all layers pass" : "gradient check FAILED") << " at tolerance " << a.tolerance << "\n";
  return ok ? 0 : 2;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Music sentiment transfer: piano-roll datasets, CycleGAN training and transfer.", "mst"};
  app.require_subcommand(1);
  app.fallthrough(false);

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build-dataset", "Convert a MIDI corpus and valence annotations to a dataset");
  build_cmd->add_option("--midi-dir", build.midi_dir, "Directory searched recursively for .mid files")->required();
  build_cmd->add_option("--annotations", build.annotations, "Valence annotation CSV")->required();
  build_cmd->add_option("--out", build.out, "Dataset file to write; metadata goes to <stem>.meta.json")->required();
  build.seed_opt =
      build_cmd->add_option("--seed", build.seed, "Balancing seed")->default_str(std::string("$") + kSeedEnv + " or 0");
  build_cmd->add_flag("--skip-invalid", build.skip_invalid, "Skip unparseable files instead of failing")
      ->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a CycleGAN on a dataset");
  train_cmd->add_option("--dataset", train.dataset, "Dataset file from build-dataset")->required();
  train_cmd->add_option("--out", train.out_dir, "Directory for checkpoints and history.csv")->required();
  train_cmd->add_option("--config", train.config_file, "key=value file (train.* / arch.* keys); flags override it");
  train_cmd->add_option("--set", train.assignments, "Extra key=value override, repeatable");
  train_cmd->add_flag("--resume", train.resume, "Continue from the latest checkpoint in --out")->capture_default_str();
  auto keyed = [&](CLI::Option* opt, const char* key) {
    opt->capture_default_str();
    train.keyed.emplace_back(opt, key);
  };
  keyed(train_cmd->add_option("--epochs", train.cfg.epochs, "Epoch budget"), "train.epochs");
  keyed(train_cmd->add_option("--batch-size", train.cfg.batch_size, "Pairs per batch"), "train.batch_size");
  keyed(train_cmd->add_option("--lambda", train.cfg.lambda_cycle, "Cycle-consistency weight"), "train.lambda_cycle");
  keyed(train_cmd->add_option("--gamma", train.cfg.gamma_mixed, "Mixed-pool discriminator weight"),
        "train.gamma_mixed");
  keyed(train_cmd->add_option("--lr", train.cfg.lr, "Adam learning rate"), "train.lr");
  keyed(train_cmd->add_option("--lr-decay-start", train.cfg.lr_decay_start,
                              "Epoch after which lr decays linearly towards 0 (0: constant)"),
        "train.lr_decay_start");
  keyed(train_cmd->add_option("--beta1", train.cfg.beta1, "Adam beta1"), "train.beta1");
  keyed(train_cmd->add_option("--beta2", train.cfg.beta2, "Adam beta2"), "train.beta2");
  auto* train_seed = train_cmd->add_option("--seed", train.cfg.seed, "Initialisation and shuffling seed");
  train_seed->default_str(std::string("$") + kSeedEnv + " or 0");
  train.keyed.emplace_back(train_seed, "train.seed");
  keyed(train_cmd->add_option("--checkpoint-every", train.cfg.checkpoint_every, "Epochs between checkpoints (0: final only)"),
        "train.checkpoint_every");
  keyed(train_cmd->add_option("--convergence-window", train.cfg.convergence_window, "Moving-average window (epochs)"),
        "train.convergence_window");
  keyed(train_cmd->add_option("--convergence-tolerance", train.cfg.convergence_tolerance,
                              "Relative change that counts as converged (0 disables)"),
        "train.convergence_tolerance");
  keyed(train_cmd->add_option("--base-filters", train.arch.base_filters, "Filters of the first layer"),
        "arch.base_filters");
  keyed(train_cmd->add_option("--residual-blocks", train.arch.residual_blocks, "Generator residual blocks"),
        "arch.residual_blocks");
  keyed(train_cmd->add_option("--edge-kernel", train.arch.edge_kernel, "First/last generator kernel (odd)"),
        "arch.edge_kernel");
  keyed(train_cmd->add_option("--residual-kernel", train.arch.residual_kernel, "Residual block kernel (odd)"),
        "arch.residual_kernel");
  keyed(train_cmd->add_option("--score-kernel", train.arch.score_kernel, "Discriminator score kernel (odd)"),
        "arch.score_kernel");

  TransferArgs transfer;
  auto* transfer_cmd = app.add_subcommand("transfer", "Transfer a MIDI file to the other sentiment domain");
  transfer_cmd->add_option("--checkpoint", transfer.checkpoint, "Checkpoint file")->required();
  transfer_cmd->add_option("--input", transfer.input, "4/4 MIDI file")->required();
  transfer_cmd->add_option("--direction", transfer.direction, "a2b (negative to positive) or b2a")
      ->required()
      ->check(CLI::IsMember({"a2b", "b2a"}));
  transfer_cmd->add_option("--output", transfer.output, "MIDI file to write")->required();

  std::string validate_path, roundtrip_path, stats_path;
  bool per_piece = false;
  auto* validate_cmd = app.add_subcommand("validate", "Check a MIDI file and print every issue");
  validate_cmd->add_option("path", validate_path, "MIDI file")->required();
  auto* roundtrip_cmd = app.add_subcommand("roundtrip", "MIDI -> phrases -> MIDI -> phrases must be exact");
  roundtrip_cmd->add_option("path", roundtrip_path, "4/4 MIDI file")->required();
  auto* stats_cmd = app.add_subcommand("stats", "Print dataset class counts and densities");
  stats_cmd->add_option("path", stats_path, "Dataset file")->required();
  stats_cmd->add_flag("--per-piece", per_piece, "Also list phrases per source piece")->capture_default_str();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every layer's gradients");
  grad.seed_opt = grad_cmd->add_option("--seed", grad.seed, "Shape and value seed")
                      ->default_str(std::string("$") + kSeedEnv + " or 0");
  grad_cmd->add_option("--cases", grad.cases, "Random shapes per layer")->capture_default_str();
  grad_cmd->add_option("--tolerance", grad.tolerance, "Maximum relative error")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    err << "run 'mst --help' or 'mst <command> --help'\n";
    return 1;
  }

  try {
    if (*build_cmd) return cmd_build_dataset(build, out, err);
    if (*train_cmd) return cmd_train(train, out, err);
    if (*transfer_cmd) return cmd_transfer(transfer, out, err);
    if (*validate_cmd) return cmd_validate(validate_path, out);
    if (*roundtrip_cmd) return cmd_roundtrip(roundtrip_path, out);
    if (*stats_cmd) return cmd_stats(stats_path, per_piece, out);
    if (*grad_cmd) return cmd_gradcheck(grad, out);
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << "\n";
    return e.is_internal() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace mst::cli
