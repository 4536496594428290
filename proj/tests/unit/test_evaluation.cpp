#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "rhythmiq/evaluation.hpp"
#include "rhythmiq/tempo.hpp"

using namespace rhythmiq;

namespace {

RhythmTree note(int p = 60) { return RhythmTree::leaf(LeafKind::Note, p); }
RhythmTree rest() { return RhythmTree::leaf(LeafKind::Rest); }
RhythmTree split(std::vector<RhythmTree> c) { return RhythmTree::split(std::move(c)); }

Performance random_performance(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<NoteEvent> notes;
  for (int i = 0; i < n; ++i) notes.push_back({u(rng) * 2.0, 0.1, 60 + static_cast<int>(u(rng) * 3), 80});
  return Performance(notes);
}

}  // namespace

TEST_CASE("note metrics hand cases") {
  const Performance ref({{0.0, 0.4, 60, 80}, {0.5, 0.4, 62, 80}, {1.0, 0.4, 64, 80}, {1.5, 0.4, 65, 80}});
  const MatchScore same = note_metrics(ref, ref);
  CHECK(same.f == doctest::Approx(100));
  const Performance altered({{0.0, 0.4, 60, 80}, {0.51, 0.4, 61, 80}, {1.03, 0.4, 64, 80}, {1.47, 0.4, 65, 80}});
  const MatchScore m = note_metrics(ref, altered);
  CHECK(m.precision == doctest::Approx(75));
  CHECK(m.recall == doctest::Approx(75));
  CHECK(m.f == doctest::Approx(75));
  CHECK(m.matched == 3);
  const MatchScore empty = note_metrics(ref, Performance());
  CHECK(empty.precision == 0.0);
  CHECK(empty.f == 0.0);
}

TEST_CASE("note matching equals the exhaustive oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 400; ++trial) {
    const int nr = std::uniform_int_distribution<int>(0, 10)(rng);
    const int ne = std::uniform_int_distribution<int>(0, 10)(rng);
    const Performance ref = random_performance(rng, nr);
    const Performance est = random_performance(rng, ne);
    const double tol = 0.15;
    std::vector<std::vector<bool>> ok(ref.size(), std::vector<bool>(est.size()));
    for (std::size_t i = 0; i < ref.size(); ++i)
      for (std::size_t j = 0; j < est.size(); ++j)
        ok[i][j] = ref.notes()[i].pitch == est.notes()[j].pitch &&
                   std::abs(ref.notes()[i].onset - est.notes()[j].onset) <= tol;
    std::vector<bool> used(est.size());
    const std::size_t best = oracle::brute_force_matching(ok, 0, used);
    const MatchScore m = note_metrics(ref, est, tol);
    CHECK(m.matched == best);

    // Swapping roles exchanges precision and recall.
    const MatchScore back = note_metrics(est, ref, tol);
    CHECK(back.precision == doctest::Approx(m.recall));
    CHECK(back.recall == doctest::Approx(m.precision));
    if (m.precision + m.recall > 0)
      CHECK(m.f == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
    CHECK(m.f >= 0.0);
    CHECK(m.f <= 100.0);

    std::vector<NoteEvent> rs, es;
    for (NoteEvent n : ref.notes()) rs.push_back({n.onset + 3.0, n.duration, n.pitch, n.velocity});
    for (NoteEvent n : est.notes()) es.push_back({n.onset + 3.0, n.duration, n.pitch, n.velocity});
    CHECK(note_metrics(Performance(rs), Performance(es), tol).f == doctest::Approx(m.f));
  }
}

TEST_CASE("downbeat F-measure") {
  const std::vector<double> ref = {0, 2, 4, 6};
  CHECK(downbeat_fmeasure(ref, ref).f == doctest::Approx(100));
  CHECK(downbeat_fmeasure(ref, {0.1, 2.1, 4.1, 6.1}).f == 0.0);
  const MatchScore m = downbeat_fmeasure(ref, {0.05, 2.2, 4.0});
  CHECK(m.matched == 2);
  CHECK(m.precision == doctest::Approx(66.6667).epsilon(1e-4));
  CHECK(m.recall == doctest::Approx(50));
  CHECK(m.f == doctest::Approx(57.1429).epsilon(1e-4));
  CHECK_THROWS_AS(downbeat_fmeasure({0, 0}, ref), Error);
}

TEST_CASE("greedy downbeat matching is maximal on increasing lists") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<double> a, b;
    for (int i = 0; i < 7; ++i) a.push_back(u(rng));
    for (int i = 0; i < 7; ++i) b.push_back(u(rng));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    std::vector<std::vector<bool>> ok(a.size(), std::vector<bool>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) ok[i][j] = std::abs(a[i] - b[j]) <= 0.3;
    std::vector<bool> used(b.size());
    CHECK(downbeat_fmeasure(a, b, 0.3).matched == oracle::brute_force_matching(ok, 0, used));
  }
}

TEST_CASE("best rotation") {
  const BeatGrid truth = grid_from_tempo(120, 0, 16);
  const std::vector<double> ref = truth.downbeats();
  const BeatGrid off = truth.with_phase(2);
  CHECK(downbeat_fmeasure(ref, off.downbeats()).f == 0.0);
  const RotationScore r = best_rotation_fmeasure(ref, off);
  CHECK(r.score.f == doctest::Approx(100));
  CHECK(r.phase == 0);
  CHECK(r.per_phase.size() == 4);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> jitter(0.0, 0.06);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> beats;
    for (int i = 0; i < 24; ++i) beats.push_back(0.5 * i + jitter(rng) + 1.0);
    std::sort(beats.begin(), beats.end());
    const BeatGrid g(beats, 3, trial % 3);
    CHECK(best_rotation_fmeasure(ref, g).score.f >= downbeat_fmeasure(ref, g.downbeats()).f);
  }
  // Equal scores go to the smallest phase.
  CHECK(best_rotation_fmeasure({100.0}, BeatGrid({0, 1, 2, 3}, 2, 1)).phase == 0);
}

TEST_CASE("score edit metrics") {
  ScoreModel ref;
  ref.measures = {split({note(60), note(62), note(64), note(65)}), split({note(67), note(69), note(71), note(72)})};
  const EditRates zero = score_edit_metrics(ref, ref);
  CHECK(zero.note_insert == 0.0);
  CHECK(zero.note_delete == 0.0);
  CHECK(zero.rest_insert == 0.0);
  CHECK(zero.rest_delete == 0.0);
  CHECK(zero.timesig == 0.0);

  ScoreModel est = ref;
  est.measures[1] = split({note(67), rest(), note(71), note(72)});
  const EditRates e = score_edit_metrics(ref, est);
  CHECK(e.note_insert == doctest::Approx(12.5));
  CHECK(e.rest_delete == doctest::Approx(12.5));
  CHECK(e.note_delete == 0.0);
  CHECK(e.rest_insert == 0.0);

  // A wrong pitch is one insertion plus one deletion.
  est.measures[1] = split({note(67), note(70), note(71), note(72)});
  const EditRates p = score_edit_metrics(ref, est);
  CHECK(p.note_inserts == 1);
  CHECK(p.note_deletes == 1);

  // Missing measures count as insertions; meter changes count per measure.
  ScoreModel short_est = ref;
  short_est.measures.pop_back();
  CHECK(score_edit_metrics(ref, short_est).note_insert == doctest::Approx(50));
  ScoreModel other_meter = ref;
  other_meter.time_signature = TimeSignature(3, 4);
  other_meter.measures = {split({note(60), note(62), note(64)}), split({note(65), note(67), note(69)})};
  CHECK(score_edit_metrics(ref, other_meter).timesig == doctest::Approx(25));

  // Rates are unbounded above.
  ScoreModel busy;
  busy.measures = {split({note(60), rest(), rest(), rest()})};
  ScoreModel sparse_ref;
  sparse_ref.measures = {note(60)};
  ScoreModel rests;
  rests.measures = {split({note(60), split({rest(), note(61)}), split({rest(), note(62)}), split({rest(), note(63)})})};
  CHECK(score_edit_metrics(sparse_ref, rests).note_delete == doctest::Approx(300));
}

TEST_CASE("edit metrics are zero on identical sampled scores") {
  std::mt19937_64 rng(2);
  const RhythmGrammar g = default_grammar();
  for (int i = 0; i < 50; ++i) {
    SampleOptions o;
    o.pickup = i % 2 == 1;
    const ScoreModel s = sample_score(g, TimeSignature(3 + i % 2, 4), rng, o);
    if (score_notes(s).empty()) continue;
    const EditRates e = score_edit_metrics(s, canonicalize(s));
    CHECK(e.note_insert + e.note_delete + e.rest_insert + e.rest_delete + e.timesig == 0.0);
  }
}

TEST_CASE("sdr") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> ref(4000), noise(4000);
  for (double& x : ref) x = n(rng);
  for (double& x : noise) x = n(rng);
  double er = 0, en = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    er += ref[i] * ref[i];
    en += noise[i] * noise[i];
  }
  const double scale = std::sqrt(er / en / 100.0);
  std::vector<double> est(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + scale * noise[i];
  CHECK(std::abs(sdr(ref, est) - 20.0) <= 0.1);
  CHECK(sdr(ref, ref) == kSdrCap);
  CHECK(sdr(ref, std::vector<double>(ref.size(), 0.0)) == doctest::Approx(0.0).scale(1));
  for (double eps : {0.5, 0.1, 1e-3, 1e-5, -0.2}) {
    std::vector<double> scaled(ref);
    for (double& x : scaled) x *= 1 + eps;
    CHECK(std::abs(sdr(ref, scaled) + 20 * std::log10(std::abs(eps))) <= 1e-6);
  }
  try {
    sdr(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedReference);
  }
  try {
    sdr(ref, std::vector<double>(3, 1.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
}

TEST_CASE("wav round trip") {
  std::vector<double> x;
  for (int i = 0; i < 441; ++i) x.push_back(std::sin(i * 0.1) * 0.5);
  const Audio a = read_wav(write_wav(x, 44100));
  CHECK(a.sample_rate == 44100);
  CHECK(a.channels == 1);
  REQUIRE(a.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a.samples[i] == doctest::Approx(x[i]).epsilon(1e-6));
  CHECK_THROWS_AS(read_wav(std::vector<std::uint8_t>{'R', 'I', 'F', 'F'}), Error);
}

TEST_CASE("batch report json") {
  EvalReport a{"b", {{"note_f", 50.0, {{"onset_tol", 0.05}}, {{"matched", 1}}}}};
  EvalReport b{"a", {{"note_f", 100.0, {}, {}}}};
  const auto summary = summarize({a, b});
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].mean == doctest::Approx(75));
  CHECK(summary[0].std == doctest::Approx(25));
  CHECK(summary[0].max == doctest::Approx(100));
  const auto j = nlohmann::json::parse(batch_report_json({a, b}));
  CHECK(j["pieces"][0]["piece"] == "a");
  CHECK(j["summary"][0]["mean_pm_std"] == "75.00 ± 25.00");
  const auto single = nlohmann::json::parse(report_json(a));
  CHECK(single["metrics"][0]["params"]["onset_tol"] == 0.05);
  CHECK(single["metrics"][0]["counts"]["matched"] == 1);
}
