#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rhythmiq/rhythm_tree.hpp"
#include "rhythmiq/symbolic.hpp"

namespace rhythmiq {

inline constexpr double kOnsetTolerance = 0.050;
inline constexpr double kDownbeatTolerance = 0.070;
inline constexpr double kSdrCap = 200.0;

/// Precision, recall and F in percent plus the counts behind them.
struct MatchScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  std::size_t matched = 0;
  std::size_t reference = 0;
  std::size_t estimate = 0;
};

MatchScore match_score(std::size_t matched, std::size_t reference, std::size_t estimate);

/// Size of a maximum bipartite matching; adjacency[i] lists the right items
/// that left item i may pair with.
std::size_t maximum_matching(std::size_t left, std::size_t right,
                             const std::vector<std::vector<std::size_t>>& adjacency);

/// Onset-only note metrics: a reference and an estimated note match when the
/// pitches agree and the onsets are within `onset_tol` seconds, one to one.
MatchScore note_metrics(const Performance& ref, const Performance& est,
                        double onset_tol = kOnsetTolerance);

/// Downbeat metrics with one-to-one matching within `tol` seconds. Both lists
/// must be strictly increasing.
MatchScore downbeat_fmeasure(const std::vector<double>& ref, const std::vector<double>& est,
                             double tol = kDownbeatTolerance);

struct RotationScore {
  MatchScore score;
  int phase = 0;
  /// F for each phase 0..beats_per_bar-1.
  std::vector<double> per_phase;
};

/// Best downbeat F over every rotation of `grid`; ties go to the smaller
/// phase.
RotationScore best_rotation_fmeasure(const std::vector<double>& ref, const BeatGrid& grid,
                                     double tol = kDownbeatTolerance);

/// Edits that turn the estimated score into the reference, as percentages of
/// the reference note count. Insertions are reference events missing from the
/// estimate; deletions are estimated events absent from the reference.
struct EditRates {
  double note_insert = 0.0;
  double note_delete = 0.0;
  double rest_insert = 0.0;
  double rest_delete = 0.0;
  double timesig = 0.0;
  std::size_t reference_notes = 0;
  std::size_t note_inserts = 0;
  std::size_t note_deletes = 0;
  std::size_t rest_inserts = 0;
  std::size_t rest_deletes = 0;
  std::size_t timesig_errors = 0;
};

EditRates score_edit_metrics(const ScoreModel& ref, const ScoreModel& est);

/// 10 log10(sum ref^2 / sum (ref - est)^2), capped at kSdrCap.
double sdr(std::span<const double> reference, std::span<const double> estimate);

struct Audio {
  int sample_rate = 0;
  int channels = 0;
  /// First channel, scaled to [-1, 1].
  std::vector<double> samples;
};

/// RIFF/WAVE reader for 16- and 24-bit PCM and 32-bit float.
Audio read_wav(std::span<const std::uint8_t> bytes);
/// Mono 32-bit float WAVE.
std::vector<std::uint8_t> write_wav(std::span<const double> samples, int sample_rate);

using ParamValue = std::variant<double, std::int64_t, std::string>;

struct MetricEntry {
  std::string metric;
  double value = 0.0;
  std::map<std::string, ParamValue> params;
  std::map<std::string, std::int64_t> counts;
};

struct EvalReport {
  std::string piece;
  std::vector<MetricEntry> entries;
};

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Per-metric mean, standard deviation and maximum over pieces, metrics in
/// order of first appearance.
std::vector<MetricSummary> summarize(const std::vector<EvalReport>& reports);

std::string report_json(const EvalReport& report);
/// Pieces sorted by name followed by the summary table.
std::string batch_report_json(std::vector<EvalReport> reports);

}  // namespace rhythmiq
