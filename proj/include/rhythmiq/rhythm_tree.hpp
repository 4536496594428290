#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "rhythmiq/fraction.hpp"
#include "rhythmiq/symbolic.hpp"

namespace rhythmiq {

enum class LeafKind { Note, Rest, Continuation };

std::string_view to_string(LeafKind kind);
std::optional<LeafKind> leaf_kind_from_string(std::string_view text);

/// Nested equal subdivision of a time span. A node without children is a
/// leaf; `kind` and `pitch` only mean something on leaves. Continuation
/// leaves carry the pitch they sustain.
struct RhythmTree {
  std::vector<RhythmTree> children;
  LeafKind kind = LeafKind::Rest;
  int pitch = -1;

  static RhythmTree leaf(LeafKind kind, int pitch = -1);
  static RhythmTree split(std::vector<RhythmTree> children);

  bool is_leaf() const { return children.empty(); }
  std::size_t leaf_count() const;
  std::size_t depth() const;

  friend bool operator==(const RhythmTree&, const RhythmTree&) = default;
};

struct TimedLeaf {
  Fraction start;
  Fraction duration;
  LeafKind kind;
  int pitch;
};

/// Leaves of `tree` laid out over [0, length), left to right.
std::vector<TimedLeaf> timed_leaves(const RhythmTree& tree, Fraction length);

/// Change point inside a measure. Notes and rests start segments; a
/// Continuation can only appear at position 0 and means the measure opens
/// on a tie.
struct TimelineEvent {
  Fraction position;
  LeafKind kind;
  int pitch = -1;

  friend bool operator==(const TimelineEvent&, const TimelineEvent&) = default;
};

/// What a measure sounds like, independent of how the tree spells it.
std::vector<TimelineEvent> timeline(const RhythmTree& tree, Fraction length);

/// Canonical tree for a timeline: the root splits into `root_arity` parts if
/// anything changes inside it, every deeper interval splits in two unless a
/// change point needs thirds. Throws Decomposition when a change point is not
/// reachable within `max_depth` levels of 2/3 subdivisions.
RhythmTree canonical_tree(const std::vector<TimelineEvent>& events, Fraction length,
                          int root_arity, int max_depth);

/// Notated score. Positions and lengths are in beats of the time signature's
/// denominator. With a pickup, measures[0] spans `anacrusis_beats`.
struct ScoreModel {
  TimeSignature time_signature;
  std::vector<RhythmTree> measures;
  double tempo_bpm = 120.0;
  Fraction anacrusis_beats;

  bool has_pickup() const { return anacrusis_beats > Fraction(0); }
  Fraction measure_beats(std::size_t index) const;
  /// Beat offset of a measure from the start of the score.
  Fraction measure_start(std::size_t index) const;
  /// Measure length in whole notes.
  Fraction measure_length(std::size_t index) const;
  Fraction beat_length() const { return Fraction(1, time_signature.denominator); }
};

/// Scores are equal when meter, pickup, rounded tempo and every measure's
/// timeline agree; two trees spelling the same rhythm compare equal.
bool operator==(const ScoreModel& a, const ScoreModel& b);

/// Replace every measure by its canonical tree.
ScoreModel canonicalize(const ScoreModel& score, int max_depth = 8);

/// Throws Validation when a continuation follows silence or a leaf pitch is
/// out of range.
void validate_score(const ScoreModel& score);

struct ScoreNote {
  Fraction onset;     // beats from the start of the score
  Fraction duration;  // beats
  int pitch;
};

/// Sounding notes with ties merged.
std::vector<ScoreNote> score_notes(const ScoreModel& score);

/// Play the score metronomically at its tempo, first measure starting at
/// `start_seconds`.
Performance render_performance(const ScoreModel& score, double start_seconds = 0.0);

struct NotatedEvent {
  Fraction duration;  // whole notes, sounding
  bool rest = false;
  bool measure_rest = false;
  int pitch = -1;
  /// Written value in whole notes before the tuplet ratio, without the dot.
  Fraction type;
  int dots = 0;
  int tuplet_actual = 1;
  int tuplet_normal = 1;
  bool tuplet_start = false;
  bool tuplet_stop = false;
  bool tie_start = false;
  bool tie_stop = false;

  bool in_tuplet() const { return tuplet_actual != tuplet_normal; }
};

/// Written form of a duration: plain or single-dotted value inside an
/// optional m:n tuplet.
struct WrittenDuration {
  Fraction type;
  int dots = 0;
  int actual = 1;
  int normal = 1;
};
std::optional<WrittenDuration> written_duration(Fraction whole_notes);

/// Turn a measure tree into notated events. Notes and their continuations
/// merge wherever the joined value can be written; `tied_into_next` marks the
/// last event as tied over the barline.
std::vector<NotatedEvent> tree_to_notation(const RhythmTree& tree, Fraction measure_length,
                                           bool tied_into_next = false);

}  // namespace rhythmiq
