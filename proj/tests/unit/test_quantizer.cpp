#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "rhythmiq/error.hpp"
#include "rhythmiq/quantizer.hpp"
#include "rhythmiq/tempo.hpp"

using namespace rhythmiq;

namespace {

MeasureInput measure(std::vector<double> positions, TimeSignature ts = {}) {
  MeasureInput in;
  in.time_signature = ts;
  int pitch = 60;
  for (double p : positions) in.onsets.push_back({p, pitch++});
  return in;
}

std::vector<LeafKind> leaf_kinds(const RhythmTree& t) {
  std::vector<LeafKind> out;
  for (const TimedLeaf& l : timed_leaves(t, Fraction(1))) out.push_back(l.kind);
  return out;
}

Performance metronomic(std::vector<double> onsets, double length) {
  std::vector<NoteEvent> notes;
  for (std::size_t i = 0; i < onsets.size(); ++i) notes.push_back({onsets[i], length, 60 + static_cast<int>(i), 80});
  return Performance(notes);
}

}  // namespace

TEST_CASE("dynamic program matches exhaustive enumeration") {
  std::mt19937_64 rng(1234);
  const std::vector<TimeSignature> meters = {{2, 4}, {3, 4}, {4, 4}};
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const TimeSignature ts = meters[static_cast<std::size_t>(trial) % meters.size()];
    const RhythmGrammar g = oracle::random_grammar(rng, ts);
    const MeasureInput in = oracle::random_measure(rng, ts, 5);
    QuantConfig cfg;
    cfg.alpha = std::uniform_real_distribution<double>(0.0, 20.0)(rng);
    cfg.rest_threshold = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    const double expected = oracle::brute_force_cost(g, in, cfg);
    if (std::isinf(expected)) {
      CHECK_THROWS_AS(quantize_measure(in, g, cfg), Error);
      continue;
    }
    const MeasureParse got = quantize_measure(in, g, cfg);
    CHECK(got.cost == doctest::Approx(expected).epsilon(1e-9).scale(1.0));
    CHECK(got.cost == doctest::Approx(cfg.alpha * got.data_fit + got.grammar_cost).epsilon(1e-9));
    ++compared;
  }
  CHECK(compared > 500);
}

TEST_CASE("quarter notes on the grid") {
  const MeasureParse p = quantize_measure(measure({0.0, 0.25, 0.5, 0.75}), default_grammar());
  CHECK(p.data_fit == doctest::Approx(0.0));
  REQUIRE(p.tree.children.size() == 4);
  for (const RhythmTree& c : p.tree.children) {
    CHECK(c.is_leaf());
    CHECK(c.kind == LeafKind::Note);
  }
  CHECK(p.tree.children[2].pitch == 62);
}

TEST_CASE("triplets need a large enough alpha") {
  // One beat of triplets then a quarter, in 2/4.
  const RhythmGrammar g = parse_grammar(
      "maxdepth = 3\nstart 2/4 = M\nM -> (B B) : 1\n"
      "B -> (E E) : 0.5 ; B -> (T T T) : 0.05 ; B -> note : 0.3 ; B -> rest : 0.1 ;"
      " B -> continuation : 0.05\n"
      "E -> (S S) : 0.1 ; E -> note : 0.7 ; E -> rest : 0.1 ; E -> continuation : 0.1\n"
      "S -> note : 0.8 ; S -> continuation : 0.2\n"
      "T -> note : 0.8 ; T -> rest : 0.1 ; T -> continuation : 0.1\n");
  const MeasureInput in = measure({0.0, 1.0 / 6, 2.0 / 6, 0.5}, TimeSignature(2, 4));
  QuantConfig strong;
  strong.alpha = 64;
  const MeasureParse t = quantize_measure(in, g, strong);
  CHECK(t.tuplets == 1);
  CHECK(t.data_fit == doctest::Approx(0.0));
  CHECK(t.cost == doctest::Approx(oracle::brute_force_cost(g, in, strong)).epsilon(1e-9));

  QuantConfig weak;
  weak.alpha = 0.5;
  const MeasureParse d = quantize_measure(in, g, weak);
  CHECK(d.tuplets == 0);
  CHECK(d.data_fit > 0.0);
  CHECK(d.cost == doctest::Approx(oracle::brute_force_cost(g, in, weak)).epsilon(1e-9));

  // The default grammar agrees once alpha is large.
  QuantConfig big;
  big.alpha = 128;
  CHECK(quantize_measure(measure({0.0, 1.0 / 12, 2.0 / 12, 0.25, 0.5, 0.75}), default_grammar(), big)
            .tuplets == 1);
}

TEST_CASE("empty measure is a whole rest") {
  const MeasureParse p = quantize_measure(measure({}), default_grammar());
  CHECK(p.tree.is_leaf());
  CHECK(p.tree.kind == LeafKind::Rest);
  MeasureInput held = measure({});
  held.carried_pitch = 64;
  const MeasureParse q = quantize_measure(held, default_grammar());
  CHECK(q.tree.is_leaf());
  CHECK(q.tree.kind == LeafKind::Continuation);
}

TEST_CASE("capacity and parse errors") {
  std::vector<double> dense;
  for (int i = 0; i < 40; ++i) dense.push_back(i / 40.0);
  try {
    quantize_measure(measure(dense), default_grammar());
    FAIL("expected capacity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Capacity);
  }
  const RhythmGrammar rests_only = parse_grammar("start 4/4 = M\nM -> rest : 1\n");
  try {
    quantize_measure(measure({0.5}), rests_only);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
  }
}

TEST_CASE("raising alpha never worsens the fit") {
  std::mt19937_64 rng(99);
  const RhythmGrammar g = default_grammar();
  for (int trial = 0; trial < 150; ++trial) {
    const MeasureInput in = oracle::random_measure(rng, TimeSignature(4, 4), 8);
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0}) {
      QuantConfig cfg;
      cfg.alpha = alpha;
      const MeasureParse p = quantize_measure(in, g, cfg);
      CHECK(p.data_fit <= previous + 1e-9);
      previous = p.data_fit;
      Fraction total;
      for (const TimedLeaf& l : timed_leaves(p.tree, Fraction(1))) total += l.duration;
      CHECK(total == Fraction(1));
    }
  }
}

TEST_CASE("two bars of quarter notes") {
  std::vector<double> on;
  for (int i = 0; i < 8; ++i) on.push_back(i * 0.5);
  const BeatGrid grid = grid_from_tempo(120, 0, 4);
  const ScoreModel s = quantize_performance(metronomic(on, 0.5), grid, default_grammar());
  REQUIRE(s.measures.size() == 2);
  for (const RhythmTree& m : s.measures) {
    REQUIRE(m.children.size() == 4);
    for (const RhythmTree& c : m.children) CHECK(c.kind == LeafKind::Note);
  }
  CHECK(s.tempo_bpm == doctest::Approx(120));
  CHECK_FALSE(s.has_pickup());
}

TEST_CASE("a note held over the barline becomes a tie") {
  // Beat 4 of bar 1 held for two beats, then quarters.
  std::vector<NoteEvent> notes = {{0.0, 0.5, 60, 80}, {0.5, 0.5, 62, 80}, {1.0, 0.5, 64, 80},
                                  {1.5, 1.0, 65, 80}, {2.5, 0.5, 67, 80}, {3.0, 0.5, 69, 80},
                                  {3.5, 0.5, 71, 80}};
  const ScoreModel s = quantize_performance(Performance(notes), grid_from_tempo(120, 0, 4), default_grammar());
  REQUIRE(s.measures.size() == 2);
  CHECK(s.measures[0].children[3].kind == LeafKind::Note);
  CHECK(leaf_kinds(s.measures[1]).front() == LeafKind::Continuation);
  CHECK(timed_leaves(s.measures[1], Fraction(1)).front().pitch == 65);
  CHECK(score_notes(s)[3].duration == Fraction(2));
}

TEST_CASE("an early onset before the barline moves to the next bar") {
  // 300 bpm: a beat is 0.2 s; the fifth note is 30 ms early.
  const std::vector<double> on = {0.0, 0.2, 0.4, 0.6, 0.77, 1.0, 1.2, 1.4};
  std::vector<NoteEvent> notes;
  for (std::size_t i = 0; i < on.size(); ++i) notes.push_back({on[i], 0.15, 60 + static_cast<int>(i), 80});
  const ScoreModel s =
      quantize_performance(Performance(notes), grid_from_tempo(300, 0, 1.6), default_grammar());
  REQUIRE(s.measures.size() == 2);
  const auto second = timed_leaves(s.measures[1], Fraction(4));
  CHECK(second.front().kind == LeafKind::Note);
  CHECK(second.front().pitch == 64);
  const auto notes_out = score_notes(s);
  REQUIRE(notes_out.size() == 8);
  CHECK(notes_out[4].onset == Fraction(4));
}

TEST_CASE("pickup measure") {
  // Onsets before the first downbeat form an anacrusis of one beat.
  const std::vector<double> on = {0.0, 0.5, 1.0, 1.5, 2.0};
  const BeatGrid grid = grid_from_tempo(120, 0, 2.5, TimeSignature(4, 4), 1);
  const ScoreModel s = quantize_performance(metronomic(on, 0.5), grid, default_grammar());
  CHECK(s.anacrusis_beats == Fraction(1));
  CHECK(score_notes(s).size() == 5);
  CHECK(score_notes(s)[1].onset == Fraction(1));
}

TEST_CASE("dense measure falls back to the grid") {
  std::vector<double> on;
  for (int i = 0; i < 40; ++i) on.push_back(i * 0.05);
  for (int i = 0; i < 4; ++i) on.push_back(2.0 + i * 0.5);
  const Performance p = metronomic(on, 0.04);
  const BeatGrid grid = grid_from_tempo(120, 0, 4);
  CHECK_THROWS_AS(quantize_performance(p, grid, default_grammar()), Error);
  QuantizeOptions o;
  o.fallback_on_failure = true;
  std::vector<std::string> warnings;
  QuantizeStats stats;
  const ScoreModel s = quantize_performance(p, grid, default_grammar(), {}, o, &warnings, &stats);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("measure 1") != std::string::npos);
  CHECK(stats.fallback_measures == 1);
  CHECK(score_notes(s).size() == 44);
}

TEST_CASE("fallback snapping") {
  // 0.24 of a beat at two points per beat snaps to 0.
  MeasureInput in = measure({0.24 / 4});
  const auto leaves = timed_leaves(fallback_measure(in, 2), Fraction(4));
  CHECK(leaves.front().kind == LeafKind::Note);
  CHECK(leaves.front().start == Fraction(0));

  // Two onsets on the same point: the second moves to the next one.
  const BeatGrid grid = grid_from_tempo(120, 0, 2);
  const ScoreModel s = fallback_quantize(metronomic({0.0, 0.01, 0.5, 1.0, 1.5}, 0.4), grid, 4);
  const auto notes = score_notes(s);
  REQUIRE(notes.size() == 5);
  CHECK(notes[0].onset == Fraction(0));
  CHECK(notes[1].onset == Fraction(1, 4));
  CHECK(notes[2].onset == Fraction(1));
}

TEST_CASE("fallback agrees with the parser on exact input") {
  std::vector<double> on;
  for (int i = 0; i < 8; ++i) on.push_back(i * 0.5);
  const BeatGrid grid = grid_from_tempo(120, 0, 4);
  const Performance p = metronomic(on, 0.5);
  CHECK(fallback_quantize(p, grid, 4) == quantize_performance(p, grid, default_grammar()));
}

TEST_CASE("fallback recovers grid positions under sub-half jitter") {
  std::mt19937_64 rng(71);
  for (int resolution : {1, 2, 3, 4}) {
    const double step = 0.5 / resolution;
    std::uniform_real_distribution<double> jitter(-0.499 * step, 0.499 * step);
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<double> exact;
      for (int k = 0; k < 8 * resolution; ++k)
        if (k == 0 || std::uniform_int_distribution<int>(0, 2)(rng) == 0) exact.push_back(k * step);
      std::vector<double> played;
      for (double x : exact) played.push_back(std::max(0.0, x + (x > 0 ? jitter(rng) : 0.0)));
      const BeatGrid grid = grid_from_tempo(120, 0, 4);
      const ScoreModel a = fallback_quantize(metronomic(exact, step * 0.9), grid, resolution);
      const ScoreModel b = fallback_quantize(metronomic(played, step * 0.5), grid, resolution);
      const auto na = score_notes(a), nb = score_notes(b);
      REQUIRE(na.size() == nb.size());
      for (std::size_t i = 0; i < na.size(); ++i) CHECK(na[i].onset == nb[i].onset);
    }
  }
}

TEST_CASE("config validation") {
  QuantConfig c;
  c.alpha = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c.alpha = 1;
  c.rest_threshold = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(quantize_performance(Performance(), grid_from_tempo(120, 0, 2), default_grammar()), Error);
}
