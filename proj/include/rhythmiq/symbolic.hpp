#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rhythmiq {

/// A played note, in seconds.
struct NoteEvent {
  double onset = 0.0;
  double duration = 0.0;
  int pitch = 60;
  int velocity = 64;

  double offset() const { return onset + duration; }
  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

/// Ordered sequence of played notes. The constructor validates every note and
/// sorts by onset, then pitch.
class Performance {
 public:
  Performance() = default;
  explicit Performance(std::vector<NoteEvent> notes, std::string source_label = {});

  const std::vector<NoteEvent>& notes() const { return notes_; }
  const std::string& source_label() const { return source_label_; }
  bool empty() const { return notes_.empty(); }
  std::size_t size() const { return notes_.size(); }

  /// True when no note sounds past the onset of its successor.
  bool is_monophonic() const;

 private:
  std::vector<NoteEvent> notes_;
  std::string source_label_;
};

struct TimeSignature {
  int numerator = 4;
  int denominator = 4;

  TimeSignature() = default;
  TimeSignature(int num, int den);

  std::string str() const;
  friend auto operator<=>(const TimeSignature&, const TimeSignature&) = default;
};

/// Beat times plus metrical position. `phase` is the index of the first
/// downbeat; downbeats are every `beats_per_bar` beats from there.
class BeatGrid {
 public:
  BeatGrid(std::vector<double> beats, int beats_per_bar, int phase,
           TimeSignature time_signature);
  BeatGrid(std::vector<double> beats, int beats_per_bar, int phase);

  const std::vector<double>& beats() const { return beats_; }
  int beats_per_bar() const { return beats_per_bar_; }
  int phase() const { return phase_; }
  const TimeSignature& time_signature() const { return time_signature_; }

  std::vector<double> downbeats() const;
  BeatGrid with_phase(int phase) const;

  /// Continuous beat index of a time in seconds: integer values at beats,
  /// linear in between, extrapolated with the first/last inter-beat interval.
  double beat_position(double seconds) const;
  /// Inverse of beat_position.
  double time_at(double beat_position) const;

 private:
  std::vector<double> beats_;
  int beats_per_bar_;
  int phase_;
  TimeSignature time_signature_;
};

/// Truncate every note at the onset of its successor; notes left with no
/// duration are dropped.
Performance enforce_monophony(const Performance& perf);

/// Parse the beat annotation CSV (`time_sec,beat_in_bar` per line).
BeatGrid load_beats(std::string_view text);
std::string save_beats(const BeatGrid& grid);

Performance load_midi(std::span<const std::uint8_t> bytes);
/// Format-0 SMF at 480 ticks per quarter with a single tempo event.
std::vector<std::uint8_t> save_midi(const Performance& perf, double bpm);

inline constexpr int kWriteTicksPerQuarter = 480;

}  // namespace rhythmiq
