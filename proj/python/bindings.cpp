#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rhythmiq/evaluation.hpp"
#include "rhythmiq/grammar.hpp"
#include "rhythmiq/musicxml.hpp"
#include "rhythmiq/pipeline.hpp"
#include "rhythmiq/quantizer.hpp"
#include "rhythmiq/tempo.hpp"
#include "rhythmiq/training.hpp"

namespace py = pybind11;
using namespace rhythmiq;

namespace {

py::object to_py_fraction(Fraction f) {
  return py::module_::import("fractions").attr("Fraction")(f.num(), f.den());
}

std::vector<std::uint8_t> as_bytes(const py::bytes& data) {
  const std::string s = data;
  return {s.begin(), s.end()};
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

py::dict match_dict(const MatchScore& s) {
  py::dict d;
  d["precision"] = s.precision;
  d["recall"] = s.recall;
  d["f"] = s.f;
  d["matched"] = s.matched;
  d["reference"] = s.reference;
  d["estimate"] = s.estimate;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rhythmiq, m) {
  m.doc() = "Rhythm-grammar transcription of monophonic performances";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::exception<Error>(m, "RhythmiqError"); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type.get_stored(),
                    (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<NoteEvent>(m, "NoteEvent")
      .def(py::init([](double onset, double duration, int pitch, int velocity) {
             return NoteEvent{onset, duration, pitch, velocity};
           }),
           py::arg("onset"), py::arg("duration"), py::arg("pitch"), py::arg("velocity") = 64)
      .def_readwrite("onset", &NoteEvent::onset)
      .def_readwrite("duration", &NoteEvent::duration)
      .def_readwrite("pitch", &NoteEvent::pitch)
      .def_readwrite("velocity", &NoteEvent::velocity)
      .def("__eq__", [](const NoteEvent& a, const NoteEvent& b) { return a == b; })
      .def("__repr__", [](const NoteEvent& n) {
        return "NoteEvent(onset=" + std::to_string(n.onset) + ", duration=" +
               std::to_string(n.duration) + ", pitch=" + std::to_string(n.pitch) + ")";
      });

  py::class_<Performance>(m, "Performance")
      .def(py::init<std::vector<NoteEvent>, std::string>(), py::arg("notes"),
           py::arg("source_label") = "")
      .def_property_readonly("notes", &Performance::notes)
      .def_property_readonly("source_label", &Performance::source_label)
      .def("is_monophonic", &Performance::is_monophonic)
      .def("__len__", &Performance::size);

  py::class_<TimeSignature>(m, "TimeSignature")
      .def(py::init<int, int>(), py::arg("numerator") = 4, py::arg("denominator") = 4)
      .def_readonly("numerator", &TimeSignature::numerator)
      .def_readonly("denominator", &TimeSignature::denominator)
      .def("__str__", &TimeSignature::str)
      .def("__eq__", [](const TimeSignature& a, const TimeSignature& b) { return a == b; });

  py::class_<BeatGrid>(m, "BeatGrid")
      .def(py::init<std::vector<double>, int, int, TimeSignature>(), py::arg("beats"),
           py::arg("beats_per_bar"), py::arg("phase"), py::arg("time_signature"))
      .def(py::init<std::vector<double>, int, int>(), py::arg("beats"), py::arg("beats_per_bar"),
           py::arg("phase") = 0)
      .def_property_readonly("beats", &BeatGrid::beats)
      .def_property_readonly("beats_per_bar", &BeatGrid::beats_per_bar)
      .def_property_readonly("phase", &BeatGrid::phase)
      .def_property_readonly("time_signature", &BeatGrid::time_signature)
      .def("downbeats", &BeatGrid::downbeats)
      .def("with_phase", &BeatGrid::with_phase);

  py::class_<RhythmTree>(m, "RhythmTree")
      .def_readonly("children", &RhythmTree::children)
      .def_property_readonly("kind", [](const RhythmTree& t) { return std::string(to_string(t.kind)); })
      .def_readonly("pitch", &RhythmTree::pitch)
      .def("is_leaf", &RhythmTree::is_leaf)
      .def("leaf_count", &RhythmTree::leaf_count);

  py::class_<ScoreModel>(m, "ScoreModel")
      .def_readonly("time_signature", &ScoreModel::time_signature)
      .def_readonly("measures", &ScoreModel::measures)
      .def_readonly("tempo_bpm", &ScoreModel::tempo_bpm)
      .def_property_readonly("anacrusis_beats",
                             [](const ScoreModel& s) { return to_py_fraction(s.anacrusis_beats); })
      .def("notes", [](const ScoreModel& s) {
        py::list out;
        for (const ScoreNote& n : score_notes(s))
          out.append(py::make_tuple(to_py_fraction(n.onset), to_py_fraction(n.duration), n.pitch));
        return out;
      })
      .def("__eq__", [](const ScoreModel& a, const ScoreModel& b) { return a == b; })
      .def("__len__", [](const ScoreModel& s) { return s.measures.size(); });

  py::class_<RhythmGrammar>(m, "RhythmGrammar")
      .def_property_readonly("max_depth", &RhythmGrammar::max_depth)
      .def("heads", &RhythmGrammar::heads)
      .def("rules", [](const RhythmGrammar& g) {
        py::list out;
        for (const GrammarRule& r : g.rules()) {
          py::dict d;
          d["head"] = r.head;
          if (r.is_leaf())
            d["leaf"] = std::string(to_string(r.leaf));
          else
            d["children"] = r.children;
          d["probability"] = r.probability();
          out.append(d);
        }
        return out;
      })
      .def("__str__", &serialize_grammar);

  py::class_<TempoEstimate>(m, "TempoEstimate")
      .def_readonly("bpm", &TempoEstimate::bpm)
      .def_readonly("cluster_support", &TempoEstimate::cluster_support)
      .def_readonly("confidence", &TempoEstimate::confidence);
  py::class_<TempoBounds>(m, "TempoBounds")
      .def_readonly("min_bpm", &TempoBounds::min_bpm)
      .def_readonly("max_bpm", &TempoBounds::max_bpm);

  m.def("load_midi", [](const py::bytes& data) { return load_midi(as_bytes(data)); });
  m.def("save_midi", [](const Performance& p, double bpm) { return to_bytes(save_midi(p, bpm)); },
        py::arg("performance"), py::arg("bpm") = 120.0);
  m.def("load_beats", [](const std::string& text) { return load_beats(text); });
  m.def("enforce_monophony", &enforce_monophony);

  m.def("estimate_tempo_ioi",
        [](const Performance& p) { return estimate_tempo_ioi(p); });
  m.def("tempo_bounds", &tempo_bounds);
  m.def("grid_from_tempo", &grid_from_tempo, py::arg("bpm"), py::arg("anchor"), py::arg("span"),
        py::arg("time_signature") = TimeSignature(), py::arg("phase") = 0);
  m.def("enumerate_rotations", &enumerate_rotations);

  m.def("default_grammar", &default_grammar);
  m.def("parse_grammar", [](const std::string& text) { return parse_grammar(text); });
  m.def("sample_score",
        [](const RhythmGrammar& g, const TimeSignature& ts, std::uint64_t seed, int measures,
           bool pickup) {
          std::mt19937_64 rng(seed);
          SampleOptions o;
          o.measures = measures;
          o.pickup = pickup;
          return sample_score(g, ts, rng, o);
        },
        py::arg("grammar"), py::arg("time_signature") = TimeSignature(), py::arg("seed") = 0,
        py::arg("measures") = 4, py::arg("pickup") = false);
  m.def("render_performance", &render_performance, py::arg("score"), py::arg("start_seconds") = 0.0);
  m.def("train_grammar",
        [](const std::vector<ScoreModel>& corpus, double smoothing, int max_depth) {
          TrainOptions o;
          o.smoothing = smoothing;
          o.max_depth = max_depth;
          return train_grammar(corpus, o);
        },
        py::arg("corpus"), py::arg("smoothing") = 1.0, py::arg("max_depth") = kDefaultMaxDepth);

  m.def("quantize",
        [](const Performance& perf, const BeatGrid& grid, const RhythmGrammar& g, double alpha,
           double rest_threshold, bool fallback) {
          QuantConfig c;
          c.alpha = alpha;
          c.rest_threshold = rest_threshold;
          QuantizeOptions o;
          o.fallback_on_failure = fallback;
          std::vector<std::string> warnings;
          ScoreModel s = quantize_performance(perf, grid, g, c, o, &warnings);
          return py::make_tuple(s, warnings);
        },
        py::arg("performance"), py::arg("grid"), py::arg("grammar"), py::arg("alpha") = 8.0,
        py::arg("rest_threshold") = 0.5, py::arg("fallback") = true);
  m.def("fallback_quantize", &fallback_quantize, py::arg("performance"), py::arg("grid"),
        py::arg("resolution") = 4);

  m.def("emit_musicxml", &emit_musicxml, py::arg("score"), py::arg("fifths") = 0);
  m.def("parse_musicxml", [](const std::string& text) { return parse_musicxml(text); });
  m.def("spell_pitch", [](int midi, int fifths) {
    const SpelledPitch p = spell_pitch(midi, fifths);
    return py::make_tuple(std::string(1, p.step), p.alter, p.octave);
  }, py::arg("midi_pitch"), py::arg("fifths") = 0);

  m.def("note_metrics",
        [](const Performance& r, const Performance& e, double tol) {
          return match_dict(note_metrics(r, e, tol));
        },
        py::arg("reference"), py::arg("estimate"), py::arg("onset_tol") = kOnsetTolerance);
  m.def("downbeat_fmeasure",
        [](const std::vector<double>& r, const std::vector<double>& e, double tol) {
          return match_dict(downbeat_fmeasure(r, e, tol));
        },
        py::arg("reference"), py::arg("estimate"), py::arg("tol") = kDownbeatTolerance);
  m.def("best_rotation_fmeasure",
        [](const std::vector<double>& r, const BeatGrid& g, double tol) {
          const RotationScore s = best_rotation_fmeasure(r, g, tol);
          return py::make_tuple(s.score.f, s.phase);
        },
        py::arg("reference"), py::arg("grid"), py::arg("tol") = kDownbeatTolerance);
  m.def("score_edit_metrics", [](const ScoreModel& r, const ScoreModel& e) {
    const EditRates x = score_edit_metrics(r, e);
    py::dict d;
    d["note_insert"] = x.note_insert;
    d["note_delete"] = x.note_delete;
    d["rest_insert"] = x.rest_insert;
    d["rest_delete"] = x.rest_delete;
    d["timesig"] = x.timesig;
    d["reference_notes"] = x.reference_notes;
    return d;
  });
  m.def("sdr", [](const std::vector<double>& r, const std::vector<double>& e) { return sdr(r, e); });

  m.def("exit_code", [](const std::string& kind) {
    for (int k = 0; k <= static_cast<int>(ErrorKind::Pairing); ++k)
      if (to_string(static_cast<ErrorKind>(k)) == kind) return exit_code(static_cast<ErrorKind>(k));
    throw py::value_error("unknown error kind: " + kind);
  });
}
