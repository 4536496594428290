#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "rhythmiq/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rhythmiq;

int main(int argc, char** argv) {
  CLI::App app{"Monophonic performance-to-score transcription and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value configuration file; command-line flags win");

  PipelineConfig cfg;
  std::string grammar, segments, out;
  std::optional<double> tol;
  app.add_option("--grammar", grammar, "grammar file (default: built-in grammar)");
  app.add_option("--alpha", cfg.alpha, "data-fit weight of the quantizer")->capture_default_str();
  app.add_option("--rest-threshold", cfg.rest_threshold, "silent fraction above which a leaf is a rest")
      ->capture_default_str();
  app.add_option("--resolution", cfg.resolution, "fallback grid points per beat")->capture_default_str();
  app.add_option("--tol", tol, "matching tolerance in seconds (notes 0.05, downbeats 0.07)");
  app.add_flag("--rotations", cfg.rotations,
               "quantize: one score per downbeat rotation; eval downbeats: report best rotation");
  app.add_option("--phase", cfg.phase, "force the downbeat phase of the beat grid");
  app.add_option("--jobs,-j", cfg.jobs, "parallel workers")->capture_default_str();
  app.add_option("--out,-o", out, "output directory (train-grammar: output file)");
  app.add_option("--key", cfg.key_fifths, "key signature in fifths for MusicXML output")
      ->capture_default_str();
  app.add_option("--smoothing,-k", cfg.smoothing, "add-k smoothing for training")->capture_default_str();
  app.add_option("--max-depth", cfg.max_depth, "subdivision depth for training")->capture_default_str();
  app.add_option("--segments", segments, "eval only: time ranges a-b,c-d in seconds");

  fs::path midi, beats_path, corpus, ref, est, reference;

  auto* tempo = app.add_subcommand("tempo", "estimate the global tempo of a MIDI file");
  tempo->add_option("midi", midi)->required();

  auto* quantize = app.add_subcommand("quantize", "transcribe MIDI plus beats into MusicXML");
  quantize->add_option("midi", midi)->required();
  quantize->add_option("beats", beats_path, "beat CSV (default: metronomic grid from the tempo estimate)");

  auto* train = app.add_subcommand("train-grammar", "train a grammar from a MusicXML corpus");
  train->add_option("corpus", corpus)->required();

  auto* eval = app.add_subcommand("eval", "evaluate an estimate against a reference");
  eval->require_subcommand(1);
  std::optional<EvalKind> kind;
  for (const auto& [name, k, help] :
       {std::tuple{"notes", EvalKind::Notes, "onset-only note metrics (MIDI)"},
        std::tuple{"downbeats", EvalKind::Downbeats, "downbeat F-measure (beat CSV)"},
        std::tuple{"score", EvalKind::Score, "score edit rates (MusicXML)"},
        std::tuple{"sdr", EvalKind::Sdr, "signal-to-distortion ratio (WAV)"}}) {
    auto* sub = eval->add_subcommand(name, help);
    sub->add_option("reference", ref)->required();
    sub->add_option("estimate", est)->required();
    const EvalKind value = k;
    sub->callback([&kind, value] { kind = value; });
  }

  auto* rotations = app.add_subcommand("rotations", "list every downbeat rotation of a beat grid");
  rotations->add_option("beats", beats_path)->required();
  rotations->add_option("reference", reference, "reference beat CSV to rank rotations against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorKind::Config);
  }

  try {
    if (!grammar.empty()) cfg.grammar_path = grammar;
    if (!segments.empty()) cfg.segments = parse_segments(segments);
    if (tol) cfg.onset_tol = cfg.downbeat_tol = *tol;
    if (!out.empty()) {
      cfg.out_dir = out;
      cfg.out_file = out;
    }
    std::string result;
    if (*tempo) {
      result = cmd_tempo(midi);
    } else if (*quantize) {
      std::optional<fs::path> beats;
      if (!beats_path.empty()) beats = beats_path;
      result = cmd_quantize(midi, beats, cfg);
    } else if (*train) {
      if (out.empty()) cfg.out_file.reset();
      result = cmd_train_grammar(corpus, cfg);
    } else if (*eval) {
      result = cmd_eval(*kind, ref, est, cfg);
    } else if (*rotations) {
      std::optional<fs::path> r;
      if (!reference.empty()) r = reference;
      result = cmd_rotations(beats_path, r, cfg);
    }
    std::cout << result;
    return 0;
  } catch (const Error& e) {
    std::cerr << "rhythmiq: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "rhythmiq: " << e.what() << "\n";
    return 1;
  }
}
