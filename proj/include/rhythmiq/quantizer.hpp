#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rhythmiq/grammar.hpp"
#include "rhythmiq/rhythm_tree.hpp"
#include "rhythmiq/symbolic.hpp"

namespace rhythmiq {

struct QuantConfig {
  /// Weight of the data-fit term against the grammar's -log probabilities.
  double alpha = 8.0;
  /// A leaf that is silent for more than this fraction of its length is
  /// better written as a rest.
  double rest_threshold = 0.5;

  void validate() const;
};

struct MeasureOnset {
  /// Fraction of the measure. Onsets borrowed across a barline can lie
  /// slightly outside [0, 1).
  double position;
  int pitch;
};

struct MeasureInput {
  std::vector<MeasureOnset> onsets;
  /// Pitch tied in from the previous measure, if any.
  std::optional<int> carried_pitch;
  /// Positions (fraction of the measure) where sound stops.
  std::vector<double> releases;
  TimeSignature time_signature;
  /// Length of a pickup measure in beats; 0 for a full measure.
  int pickup_beats = 0;
};

struct MeasureParse {
  RhythmTree tree;
  double cost = 0.0;
  /// Unweighted data term: onset distances plus threshold-weighted
  /// sound/silence mismatch, in beats.
  double data_fit = 0.0;
  double grammar_cost = 0.0;
  std::size_t leaves = 0;
  std::size_t tuplets = 0;
};

/// Lowest-cost derivation of one measure, cost = alpha * data_fit + sum of
/// rule weights. Each leaf hosts at most one onset, in order. Throws Capacity
/// when there are more onsets than the grammar has leaves and Parse when no
/// derivation exists.
MeasureParse quantize_measure(const MeasureInput& input, const RhythmGrammar& grammar,
                              const QuantConfig& config = {});

struct QuantizeOptions {
  /// Replace measures that fail to parse by the grid fallback and record a
  /// warning instead of throwing.
  bool fallback_on_failure = false;
  int fallback_resolution = 4;
};

struct QuantizeStats {
  /// Sum of the chosen parse costs, fallback measures excluded.
  double cost = 0.0;
  std::size_t fallback_measures = 0;
};

/// Segment a performance into measures along the grid and parse each one.
ScoreModel quantize_performance(const Performance& perf, const BeatGrid& grid,
                                const RhythmGrammar& grammar, const QuantConfig& config = {},
                                const QuantizeOptions& options = {},
                                std::vector<std::string>* warnings = nullptr,
                                QuantizeStats* stats = nullptr);

/// Nearest-grid baseline: every onset snaps to the closest of `resolution`
/// points per beat; a collision pushes the later onset to the next free
/// point.
ScoreModel fallback_quantize(const Performance& perf, const BeatGrid& grid, int resolution);

/// Grid fallback for a single measure. The resolution doubles until every
/// onset has a point of its own.
RhythmTree fallback_measure(const MeasureInput& input, int resolution,
                            double rest_threshold = 0.5);

}  // namespace rhythmiq
