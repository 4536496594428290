#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rhythmiq/error.hpp"
#include "rhythmiq/grammar.hpp"

namespace rhythmiq {

struct PipelineConfig {
  std::optional<std::filesystem::path> grammar_path;
  double alpha = 8.0;
  double rest_threshold = 0.5;
  /// Grid points per beat for the fallback quantizer.
  int resolution = 4;
  double onset_tol = 0.050;
  double downbeat_tol = 0.070;
  /// Quantize: write one score per downbeat rotation. Eval downbeats: also
  /// report the best rotation.
  bool rotations = false;
  /// Force the downbeat phase of the beat grid.
  std::optional<int> phase;
  std::filesystem::path out_dir = ".";
  /// Output file for train-grammar.
  std::optional<std::filesystem::path> out_file;
  int jobs = 1;
  int key_fifths = 0;
  double smoothing = 1.0;
  int max_depth = kDefaultMaxDepth;
  /// Eval only: keep events inside these [start, end] ranges in seconds.
  std::vector<std::pair<double, double>> segments;

  void validate() const;
};

/// Parse "a-b,c-d" time ranges.
std::vector<std::pair<double, double>> parse_segments(const std::string& text);

/// 0 success, 1 I/O, 2 insufficient data, 3 config or grammar, 4 pairing.
int exit_code(ErrorKind kind);

RhythmGrammar load_grammar(const PipelineConfig& config, std::vector<std::string>* warnings = nullptr);

std::string cmd_tempo(const std::filesystem::path& midi);

/// Writes `<stem>.musicxml`, or `<stem>.rot<k>.musicxml` for every phase in
/// rotation mode, plus `<stem>.warnings.txt` when any measure fell back to
/// the grid. Returns a JSON summary; rotations are ranked by parse cost.
std::string cmd_quantize(const std::filesystem::path& midi,
                         const std::optional<std::filesystem::path>& beats,
                         const PipelineConfig& config);

/// Returns the rule count and per-head entropies as text.
std::string cmd_train_grammar(const std::filesystem::path& corpus_dir, const PipelineConfig& config);

enum class EvalKind { Notes, Downbeats, Score, Sdr };

/// JSON report for a file pair, or a batch report when both paths are
/// directories (paired by file stem).
std::string cmd_eval(EvalKind kind, const std::filesystem::path& ref,
                     const std::filesystem::path& est, const PipelineConfig& config);

/// Downbeats of every rotation of a beat grid, ranked by F against a
/// reference when one is given.
std::string cmd_rotations(const std::filesystem::path& beats,
                          const std::optional<std::filesystem::path>& reference,
                          const PipelineConfig& config);

}  // namespace rhythmiq
