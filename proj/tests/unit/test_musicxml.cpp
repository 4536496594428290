#include <random>
#include <regex>

#include "doctest.h"
#include "rhythmiq/error.hpp"
#include "rhythmiq/grammar.hpp"
#include "rhythmiq/musicxml.hpp"

using namespace rhythmiq;

namespace {

RhythmTree note(int p = 60) { return RhythmTree::leaf(LeafKind::Note, p); }
RhythmTree split(std::vector<RhythmTree> c) { return RhythmTree::split(std::move(c)); }

std::string note_xml(const std::string& step, int octave, int duration, const std::string& extra = "") {
  return "<note>" + extra + "<pitch><step>" + step + "</step><octave>" + std::to_string(octave) +
         "</octave></pitch><duration>" + std::to_string(duration) + "</duration></note>";
}

std::string document(const std::vector<std::string>& measures, const std::string& time = "4") {
  std::string out =
      "<?xml version=\"1.0\"?><score-partwise version=\"3.0\"><part-list><score-part id=\"P1\">"
      "<part-name>x</part-name></score-part></part-list><part id=\"P1\">";
  for (std::size_t i = 0; i < measures.size(); ++i) {
    out += "<measure number=\"" + std::to_string(i + 1) + "\">";
    if (i == 0)
      out += "<attributes><divisions>1</divisions><time><beats>" + time +
             "</beats><beat-type>4</beat-type></time></attributes>";
    out += measures[i] + "</measure>";
  }
  return out + "</part></score-partwise>";
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("pitch spelling") {
  CHECK(spell_pitch(60, 0) == SpelledPitch{'C', 0, 4});
  CHECK(spell_pitch(61, -3) == SpelledPitch{'D', -1, 4});
  CHECK(spell_pitch(61, 2) == SpelledPitch{'C', 1, 4});
  CHECK(spell_pitch(66, 1) == SpelledPitch{'F', 1, 4});
  CHECK(spell_pitch(70, -1) == SpelledPitch{'B', -1, 4});
  CHECK(spell_pitch(59, 7) == SpelledPitch{'B', 0, 3});
  CHECK(spell_pitch(60, 7) == SpelledPitch{'B', 1, 3});
  for (int fifths = -7; fifths <= 7; ++fifths)
    for (int midi = 0; midi <= 127; ++midi) {
      const SpelledPitch p = spell_pitch(midi, fifths);
      CHECK(p.midi() == midi);
      CHECK(p.alter >= -2);
      CHECK(p.alter <= 2);
    }
  CHECK(kind_of([] { spell_pitch(128); }) == ErrorKind::Validation);
  CHECK(kind_of([] { spell_pitch(60, 8); }) == ErrorKind::Validation);
}

TEST_CASE("four quarter notes") {
  ScoreModel s;
  s.measures = {split({note(), note(), note(), note()})};
  const std::string xml = emit_musicxml(s);
  CHECK(count(xml, "<note>") == 4);
  CHECK(count(xml, "<duration>1</duration>") == 4);
  CHECK(xml.find("<divisions>1</divisions>") != std::string::npos);
  CHECK(count(xml, "<step>C</step>") == 4);
  CHECK(count(xml, "<octave>4</octave>") == 4);
  CHECK(count(xml, "<type>quarter</type>") == 4);
  CHECK(xml.find("<beats>4</beats>") != std::string::npos);
  CHECK(xml.find("<per-minute>120</per-minute>") != std::string::npos);
  CHECK(parse_musicxml(xml) == s);
}

TEST_CASE("triplet time modification") {
  ScoreModel s;
  s.measures = {split({split({note(60), note(62), note(64)}), note(), note(), note()})};
  const std::string xml = emit_musicxml(s);
  CHECK(count(xml, "<actual-notes>3</actual-notes>") == 3);
  CHECK(count(xml, "<normal-notes>2</normal-notes>") == 3);
  CHECK(count(xml, "<tuplet type=\"start\"") == 1);
  CHECK(count(xml, "<tuplet type=\"stop\"") == 1);
  CHECK(xml.find("<divisions>3</divisions>") != std::string::npos);
  CHECK(parse_musicxml(xml) == s);
}

TEST_CASE("ties are written both ways") {
  ScoreModel s;
  s.measures = {split({note(), note(), note(), note(65)}),
                split({RhythmTree::leaf(LeafKind::Continuation, 65), note(), note(), note()})};
  const std::string xml = emit_musicxml(s);
  CHECK(count(xml, "<tie type=\"start\"/>") == 1);
  CHECK(count(xml, "<tie type=\"stop\"/>") == 1);
  CHECK(count(xml, "<tied type=\"start\"/>") == 1);
  CHECK(count(xml, "<tied type=\"stop\"/>") == 1);
  CHECK(parse_musicxml(xml) == s);
}

TEST_CASE("parse errors") {
  const std::string q = note_xml("C", 4, 1);
  CHECK(kind_of([&] {
          parse_musicxml(document({q + note_xml("E", 4, 1, "<chord/>") + q + q + q}));
        }) == ErrorKind::Unsupported);
  try {
    parse_musicxml(document({q + q + q + q, q + q + q + q + q}));
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("measure 2") != std::string::npos);
  }
  CHECK(kind_of([] { parse_musicxml("<score-partwise"); }) == ErrorKind::Format);
}

TEST_CASE("parse ignores markup and skips grace notes") {
  const std::string q = note_xml("C", 4, 1, "");
  const std::string slurred =
      "<note><pitch><step>D</step><octave>4</octave></pitch><duration>1</duration>"
      "<notations><slur type=\"start\"/><articulations><staccato/></articulations></notations>"
      "<lyric><text>la</text></lyric></note>";
  const std::string grace = "<note><grace/><pitch><step>B</step><octave>3</octave></pitch></note>";
  std::vector<std::string> warnings;
  const ScoreModel s = parse_musicxml(document({grace + q + slurred + q + q}), &warnings);
  CHECK(warnings.size() == 1);
  const auto notes = score_notes(s);
  REQUIRE(notes.size() == 4);
  CHECK(notes[1].pitch == 62);
  CHECK(s.tempo_bpm == doctest::Approx(120));
}

TEST_CASE("pickup measure is read from a short first measure") {
  const std::string q = note_xml("G", 4, 1);
  const std::string doc = std::regex_replace(document({q, q + q + q}, "3"), std::regex("number=\"1\""),
                                             "number=\"0\" implicit=\"yes\"");
  const ScoreModel s = parse_musicxml(doc);
  CHECK(s.anacrusis_beats == Fraction(1));
  CHECK(s.measures.size() == 2);
  CHECK(s.time_signature == TimeSignature(3, 4));
}

TEST_CASE("round trip and exact measure sums on sampled scores") {
  const RhythmGrammar g = default_grammar();
  std::mt19937_64 rng(41);
  const std::regex divisions("<divisions>(\\d+)</divisions>");
  for (int i = 0; i < 150; ++i) {
    const TimeSignature ts = std::vector<TimeSignature>{{2, 4}, {3, 4}, {4, 4}}[static_cast<std::size_t>(i % 3)];
    SampleOptions o;
    o.pickup = i % 4 == 0;
    o.measures = 3;
    o.tempo_bpm = 60 + i;
    const ScoreModel s = sample_score(g, ts, rng, o);
    const int fifths = i % 15 - 7;
    const std::string xml = emit_musicxml(s, fifths);
    CHECK(parse_musicxml(xml) == s);

    // Every measure's durations add up to its length in divisions.
    std::size_t from = 0;
    long div = 0;
    for (std::size_t m = 0; m < s.measures.size(); ++m) {
      const auto open = xml.find("<measure ", from);
      const auto close = xml.find("</measure>", open);
      const std::string body = xml.substr(open, close - open);
      std::smatch dm;
      if (std::regex_search(body, dm, divisions)) div = std::stol(dm[1]);
      long total = 0;
      const std::regex dur("<duration>(\\d+)</duration>");
      for (auto it = std::sregex_iterator(body.begin(), body.end(), dur); it != std::sregex_iterator(); ++it)
        total += std::stol((*it)[1]);
      const Fraction beats = s.measure_beats(m);
      CHECK(Fraction(total) == beats * Fraction(div));
      from = close;
    }
  }
}
