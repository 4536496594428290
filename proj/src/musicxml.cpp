#include "rhythmiq/musicxml.hpp"

#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "rhythmiq/error.hpp"

namespace rhythmiq {

namespace {

constexpr std::array<char, 7> kSteps = {'C', 'D', 'E', 'F', 'G', 'A', 'B'};
constexpr std::array<int, 7> kStepClass = {0, 2, 4, 5, 7, 9, 11};
constexpr std::string_view kSharpOrder = "FCGDAEB";
constexpr std::string_view kFlatOrder = "BEADGCF";

int step_index(char step) {
  for (int i = 0; i < 7; ++i)
    if (kSteps[i] == step) return i;
  throw Error(ErrorKind::Format, std::string("bad pitch step '") + step + "'");
}

int key_alter(char step, int fifths) {
  if (fifths > 0 && kSharpOrder.substr(0, fifths).find(step) != std::string_view::npos) return 1;
  if (fifths < 0 && kFlatOrder.substr(0, -fifths).find(step) != std::string_view::npos) return -1;
  return 0;
}

SpelledPitch make_spelling(int midi, char step, int alter) {
  const int base = midi - alter - kStepClass[step_index(step)];
  return {step, alter, base / 12 - 1};
}

}  // namespace

int SpelledPitch::midi() const {
  return 12 * (octave + 1) + kStepClass[step_index(step)] + alter;
}

SpelledPitch spell_pitch(int midi_pitch, int fifths) {
  if (midi_pitch < 0 || midi_pitch > 127)
    throw Error(ErrorKind::Validation, "MIDI pitch out of range: " + std::to_string(midi_pitch));
  if (fifths < -7 || fifths > 7)
    throw Error(ErrorKind::Validation, "key fifths out of range: " + std::to_string(fifths));
  const int pc = midi_pitch % 12;
  for (char step : kSteps) {
    const int alter = key_alter(step, fifths);
    if ((kStepClass[step_index(step)] + alter + 12) % 12 == pc)
      return make_spelling(midi_pitch, step, alter);
  }
  for (char step : kSteps)
    if (kStepClass[step_index(step)] == pc) return make_spelling(midi_pitch, step, 0);
  const int alter = fifths >= 0 ? 1 : -1;
  for (char step : kSteps)
    if ((kStepClass[step_index(step)] + alter + 12) % 12 == pc)
      return make_spelling(midi_pitch, step, alter);
  return make_spelling(midi_pitch, 'C', 0);
}

namespace {

std::string type_name(Fraction type) {
  if (type == Fraction(2)) return "breve";
  if (type == Fraction(1)) return "whole";
  if (type == Fraction(1, 2)) return "half";
  if (type == Fraction(1, 4)) return "quarter";
  if (type == Fraction(1, 8)) return "eighth";
  if (type.num() == 1 && is_power_of_two(type.den()) && type.den() <= 1024)
    return std::to_string(type.den()) + "th";
  throw Error(ErrorKind::Validation, "no note type for " + type.str());
}

std::string beat_unit_name(int denominator) { return type_name(Fraction(1, denominator)); }

std::optional<Fraction> beat_unit_value(const std::string& name) {
  for (std::int64_t den = 1; den <= 1024; den *= 2)
    if (type_name(Fraction(1, den)) == name) return Fraction(1, den);
  if (name == "breve") return Fraction(2);
  return std::nullopt;
}

std::string accidental_name(int alter) {
  switch (alter) {
    case -2: return "flat-flat";
    case -1: return "flat";
    case 1: return "sharp";
    case 2: return "double-sharp";
    default: return "natural";
  }
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::string emit_musicxml(const ScoreModel& score, int fifths) {
  validate_score(score);
  if (fifths < -7 || fifths > 7)
    throw Error(ErrorKind::Validation, "key fifths out of range: " + std::to_string(fifths));
  const TimeSignature& ts = score.time_signature;
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
         "<!DOCTYPE score-partwise PUBLIC \"-//Recordare//DTD MusicXML 3.1 Partwise//EN\" "
         "\"http://www.musicxml.org/dtds/partwise.dtd\">\n"
         "<score-partwise version=\"3.1\">\n"
         "  <part-list>\n"
         "    <score-part id=\"P1\">\n"
         "      <part-name>Solo</part-name>\n"
         "    </score-part>\n"
         "  </part-list>\n"
         "  <part id=\"P1\">\n";

  std::int64_t current_divisions = 0;
  for (std::size_t m = 0; m < score.measures.size(); ++m) {
    const Fraction length = score.measure_length(m);
    const bool pickup = m == 0 && score.has_pickup();
    const int number = static_cast<int>(score.has_pickup() ? m : m + 1);
    bool tied_into_next = false;
    if (m + 1 < score.measures.size()) {
      const auto next = timeline(score.measures[m + 1], score.measure_beats(m + 1));
      tied_into_next = !next.empty() && next.front().kind == LeafKind::Continuation;
    }
    const std::vector<NotatedEvent> events =
        tree_to_notation(score.measures[m], length, tied_into_next);

    std::int64_t divisions = 1;
    for (const NotatedEvent& e : events) {
      const Fraction quarters = e.duration * Fraction(4);
      divisions = std::lcm(divisions, quarters.den());
    }

    out << "    <measure number=\"" << number << "\"" << (pickup ? " implicit=\"yes\"" : "")
        << ">\n";
    if (m == 0 || divisions != current_divisions) {
      out << "      <attributes>\n"
          << "        <divisions>" << divisions << "</divisions>\n";
      if (m == 0) {
        out << "        <key>\n          <fifths>" << fifths << "</fifths>\n        </key>\n"
            << "        <time>\n          <beats>" << ts.numerator << "</beats>\n"
            << "          <beat-type>" << ts.denominator << "</beat-type>\n        </time>\n"
            << "        <clef>\n          <sign>G</sign>\n          <line>2</line>\n"
               "        </clef>\n";
      }
      out << "      </attributes>\n";
      current_divisions = divisions;
    }
    if (m == 0) {
      const double quarter_bpm = score.tempo_bpm * 4.0 / ts.denominator;
      out << "      <direction placement=\"above\">\n"
          << "        <direction-type>\n          <metronome>\n"
          << "            <beat-unit>" << beat_unit_name(ts.denominator) << "</beat-unit>\n"
          << "            <per-minute>" << format_number(score.tempo_bpm) << "</per-minute>\n"
          << "          </metronome>\n        </direction-type>\n"
          << "        <sound tempo=\"" << format_number(quarter_bpm) << "\"/>\n"
          << "      </direction>\n";
    }

    std::map<std::pair<char, int>, int> accidentals;
    for (const NotatedEvent& e : events) {
      const Fraction ticks = e.duration * Fraction(4) * Fraction(divisions);
      out << "      <note>\n";
      SpelledPitch sp;
      if (e.rest) {
        out << (e.measure_rest ? "        <rest measure=\"yes\"/>\n" : "        <rest/>\n");
      } else {
        sp = spell_pitch(e.pitch, fifths);
        out << "        <pitch>\n          <step>" << sp.step << "</step>\n";
        if (sp.alter != 0) out << "          <alter>" << sp.alter << "</alter>\n";
        out << "          <octave>" << sp.octave << "</octave>\n        </pitch>\n";
      }
      out << "        <duration>" << ticks.num() << "</duration>\n";
      if (e.tie_stop) out << "        <tie type=\"stop\"/>\n";
      if (e.tie_start) out << "        <tie type=\"start\"/>\n";
      out << "        <voice>1</voice>\n";
      if (!e.measure_rest) {
        out << "        <type>" << type_name(e.type) << "</type>\n";
        for (int d = 0; d < e.dots; ++d) out << "        <dot/>\n";
      }
      if (!e.rest) {
        const auto key = std::make_pair(sp.step, sp.octave);
        const auto it = accidentals.find(key);
        const int shown = it == accidentals.end() ? key_alter(sp.step, fifths) : it->second;
        if (shown != sp.alter && !e.tie_stop)
          out << "        <accidental>" << accidental_name(sp.alter) << "</accidental>\n";
        accidentals[key] = sp.alter;
      }
      if (e.in_tuplet()) {
        out << "        <time-modification>\n"
            << "          <actual-notes>" << e.tuplet_actual << "</actual-notes>\n"
            << "          <normal-notes>" << e.tuplet_normal << "</normal-notes>\n"
            << "        </time-modification>\n";
      }
      const bool notations = e.tie_start || e.tie_stop || e.tuplet_start || e.tuplet_stop;
      if (notations) {
        out << "        <notations>\n";
        if (e.tie_stop) out << "          <tied type=\"stop\"/>\n";
        if (e.tie_start) out << "          <tied type=\"start\"/>\n";
        if (e.tuplet_start)
          out << "          <tuplet type=\"start\" bracket=\"yes\" number=\"1\"/>\n";
        if (e.tuplet_stop) out << "          <tuplet type=\"stop\" number=\"1\"/>\n";
        out << "        </notations>\n";
      }
      out << "      </note>\n";
    }
    out << "    </measure>\n";
  }
  out << "  </part>\n</score-partwise>\n";
  return out.str();
}

namespace {

namespace pt = boost::property_tree;

std::string attr(const pt::ptree& node, const std::string& name) {
  return node.get<std::string>("<xmlattr>." + name, "");
}

bool has_stop(const pt::ptree& note) {
  for (const auto& [name, child] : note)
    if (name == "tie" && attr(child, "type") == "stop") return true;
  if (const auto notations = note.get_child_optional("notations"))
    for (const auto& [name, child] : *notations)
      if (name == "tied" && attr(child, "type") == "stop") return true;
  return false;
}

std::int64_t read_int(const pt::ptree& node, const std::string& path, const std::string& where) {
  const auto text = node.get_optional<std::string>(path);
  if (!text) throw Error(ErrorKind::Format, where + ": missing <" + path + ">");
  try {
    std::size_t used = 0;
    const long long v = std::stoll(*text, &used);
    if (used != text->size()) throw std::invalid_argument(*text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Format, where + ": bad integer in <" + path + ">: '" + *text + "'");
  }
}

struct MeasureBuilder {
  std::vector<TimelineEvent> events;
  Fraction position;  // whole notes

  void rest() {
    if (events.empty() || events.back().kind != LeafKind::Rest)
      events.push_back({position, LeafKind::Rest, -1});
  }
};

}  // namespace

ScoreModel parse_musicxml(std::string_view text, std::vector<std::string>* warnings) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(text)};
    pt::read_xml(in, doc, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorKind::Format, std::string("malformed XML: ") + e.what());
  }
  if (doc.get_child_optional("score-timewise"))
    throw Error(ErrorKind::Unsupported, "timewise MusicXML is not supported");
  const auto root = doc.get_child_optional("score-partwise");
  if (!root) throw Error(ErrorKind::Format, "not a partwise MusicXML document");

  const pt::ptree* part = nullptr;
  for (const auto& [name, child] : *root) {
    if (name != "part") continue;
    if (part) throw Error(ErrorKind::Unsupported, "more than one part");
    part = &child;
  }
  if (!part) throw Error(ErrorKind::Format, "document has no part");

  ScoreModel score;
  std::optional<TimeSignature> time;
  std::optional<double> tempo;
  std::int64_t divisions = 0;
  int sounding_pitch = -1;
  std::vector<std::vector<TimelineEvent>> measure_events;
  std::vector<Fraction> measure_lengths;
  std::size_t index = 0;

  for (const auto& [tag, measure] : *part) {
    if (tag != "measure") continue;
    const std::string number = attr(measure, "number");
    const std::string where = "measure " + (number.empty() ? std::to_string(index + 1) : number);
    MeasureBuilder b;
    for (const auto& [name, node] : measure) {
      if (name == "attributes") {
        if (node.get_optional<std::string>("divisions"))
          divisions = read_int(node, "divisions", where);
        if (node.get_child_optional("time")) {
          const TimeSignature ts(static_cast<int>(read_int(node, "time.beats", where)),
                                 static_cast<int>(read_int(node, "time.beat-type", where)));
          if (time && *time != ts)
            throw Error(ErrorKind::Unsupported, where + ": time signature change to " + ts.str());
          time = ts;
        }
      } else if (name == "direction" || name == "sound") {
        if (tempo || !time) continue;
        if (const auto metronome = node.get_child_optional("direction-type.metronome")) {
          const auto unit = beat_unit_value(metronome->get<std::string>("beat-unit", ""));
          const auto per_minute = metronome->get_optional<double>("per-minute");
          if (unit && per_minute) {
            Fraction value = *unit;
            if (metronome->get_child_optional("beat-unit-dot")) value *= Fraction(3, 2);
            tempo = *per_minute * (value * Fraction(time->denominator)).to_double();
            continue;
          }
        }
        const auto sound = name == "sound" ? node.get_optional<double>("<xmlattr>.tempo")
                                           : node.get_optional<double>("sound.<xmlattr>.tempo");
        if (sound) tempo = *sound * time->denominator / 4.0;
      } else if (name == "backup") {
        throw Error(ErrorKind::Unsupported, where + ": <backup> implies more than one voice");
      } else if (name == "forward") {
        if (divisions <= 0) throw Error(ErrorKind::Format, where + ": duration before divisions");
        b.rest();
        b.position += Fraction(read_int(node, "duration", where), 4 * divisions);
        sounding_pitch = -1;
      } else if (name == "note") {
        if (node.get_child_optional("grace") || node.get_child_optional("cue")) {
          if (warnings) warnings->push_back(where + ": grace or cue note skipped");
          continue;
        }
        if (node.get_child_optional("chord"))
          throw Error(ErrorKind::Unsupported, where + ": chords are not supported");
        if (divisions <= 0) throw Error(ErrorKind::Format, where + ": duration before divisions");
        const std::int64_t ticks = read_int(node, "duration", where);
        if (ticks <= 0) throw Error(ErrorKind::Validation, where + ": note without duration");
        if (node.get_child_optional("rest")) {
          b.rest();
          sounding_pitch = -1;
        } else if (const auto p = node.get_child_optional("pitch")) {
          const std::string step = p->get<std::string>("step", "");
          if (step.size() != 1) throw Error(ErrorKind::Format, where + ": bad pitch step");
          SpelledPitch sp{step[0], static_cast<int>(std::lround(p->get<double>("alter", 0.0))),
                          static_cast<int>(read_int(*p, "octave", where))};
          const int midi = sp.midi();
          if (midi < 0 || midi > 127)
            throw Error(ErrorKind::Validation, where + ": pitch out of MIDI range");
          if (has_stop(node) && midi == sounding_pitch) {
            if (b.events.empty()) b.events.push_back({b.position, LeafKind::Continuation, midi});
          } else {
            b.events.push_back({b.position, LeafKind::Note, midi});
          }
          sounding_pitch = midi;
        } else {
          throw Error(ErrorKind::Unsupported, where + ": unpitched notes are not supported");
        }
        b.position += Fraction(ticks, 4 * divisions);
      }
    }
    if (!time) throw Error(ErrorKind::Format, where + ": no time signature");
    const Fraction full(time->numerator, time->denominator);
    const bool pickup = index == 0 && attr(measure, "implicit") == "yes" &&
                        b.position > Fraction(0) && b.position < full;
    if (!pickup && b.position != full)
      throw Error(ErrorKind::Validation, where + ": duration " + b.position.str() +
                                             " does not match time signature " + time->str());
    if (pickup) score.anacrusis_beats = b.position * Fraction(time->denominator);
    const Fraction beat(1, time->denominator);
    for (TimelineEvent& e : b.events) e.position = e.position / beat;
    measure_events.push_back(std::move(b.events));
    measure_lengths.push_back(b.position / beat);
    ++index;
  }
  if (measure_events.empty()) throw Error(ErrorKind::EmptyInput, "document has no measures");

  score.time_signature = *time;
  score.tempo_bpm = tempo.value_or(120.0);
  for (std::size_t i = 0; i < measure_events.size(); ++i) {
    const Fraction beats = measure_lengths[i];
    const int arity = beats.is_integer() && beats.num() >= 2 ? static_cast<int>(beats.num()) : 0;
    try {
      score.measures.push_back(canonical_tree(measure_events[i], beats, arity, 8));
    } catch (const Error& e) {
      throw Error(e.kind(), "measure " + std::to_string(score.has_pickup() ? i : i + 1) + ": " +
                                e.what());
    }
  }
  validate_score(score);
  return score;
}

}  // namespace rhythmiq
