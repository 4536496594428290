#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rhythmiq/rhythm_tree.hpp"

namespace rhythmiq {

struct SpelledPitch {
  char step = 'C';
  int alter = 0;
  int octave = 4;

  int midi() const;
  friend bool operator==(const SpelledPitch&, const SpelledPitch&) = default;
};

/// Diatonic notes follow the key signature; other notes use a natural when
/// one fits, else a sharp in sharp keys and a flat in flat keys.
SpelledPitch spell_pitch(int midi_pitch, int fifths = 0);

/// Partwise MusicXML 3.1 with a single part. Each measure uses the smallest
/// divisions value that makes every duration an integer.
std::string emit_musicxml(const ScoreModel& score, int fifths = 0);

/// Read a single-part monophonic partwise document. Grace and cue notes are
/// skipped with a warning.
ScoreModel parse_musicxml(std::string_view text, std::vector<std::string>* warnings = nullptr);

}  // namespace rhythmiq
