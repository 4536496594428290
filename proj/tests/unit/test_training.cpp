#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "rhythmiq/error.hpp"
#include "rhythmiq/training.hpp"

using namespace rhythmiq;

namespace {

RhythmTree note(int p = 60) { return RhythmTree::leaf(LeafKind::Note, p); }
RhythmTree split(std::vector<RhythmTree> c) { return RhythmTree::split(std::move(c)); }

ScoreModel score_of(std::vector<RhythmTree> measures, TimeSignature ts = {}) {
  ScoreModel s;
  s.time_signature = ts;
  s.measures = std::move(measures);
  return s;
}

double prob(const RhythmGrammar& g, const std::string& head, std::optional<int> arity,
            std::optional<LeafKind> leaf = std::nullopt) {
  const RuleSelector sel{head, arity, leaf};
  for (const GrammarRule& r : g.rules())
    if (sel.matches(r)) return r.probability();
  return 0.0;
}

}  // namespace

TEST_CASE("quarter-note corpus") {
  std::vector<RhythmTree> bars(10, split({note(), note(), note(), note()}));
  TrainOptions o;
  o.smoothing = 0.0;
  const RhythmGrammar g = train_grammar({score_of(bars)}, o);
  CHECK(g.start_symbol(TimeSignature(4, 4)) == "M4_4");
  CHECK(g.rules().size() == 2);
  CHECK(prob(g, "M4_4", 4) == doctest::Approx(1.0));
  CHECK(prob(g, "B", std::nullopt, LeafKind::Note) == doctest::Approx(1.0));
}

TEST_CASE("duplet and triplet counts") {
  const RhythmTree duplet = split({note(), note()});
  const RhythmTree triplet = split({note(), note(), note()});
  const ScoreModel s = score_of({split({duplet, duplet, duplet, triplet})});
  TrainOptions o;
  o.smoothing = 0.0;
  const RhythmGrammar g = train_grammar({s}, o);
  CHECK(prob(g, "B", 2) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(prob(g, "B", 3) == doctest::Approx(0.25).epsilon(1e-12));

  // Add-one over the five candidates of B: (2) (3) note rest continuation.
  const RhythmGrammar h = train_grammar({s});
  CHECK(prob(h, "B", 2) == doctest::Approx(4.0 / 9).epsilon(1e-12));
  CHECK(prob(h, "B", 3) == doctest::Approx(2.0 / 9).epsilon(1e-12));
  CHECK(prob(h, "B", std::nullopt, LeafKind::Rest) == doctest::Approx(1.0 / 9).epsilon(1e-12));
  std::map<std::string, double> sums;
  for (const GrammarRule& r : h.rules()) {
    CHECK(std::isfinite(r.weight));
    sums[r.head] += r.probability();
  }
  for (const auto& [head, sum] : sums) CHECK(std::abs(sum - 1.0) <= 1e-9);
}

TEST_CASE("training errors") {
  try {
    train_grammar({});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyInput);
  }
  // A quintuplet cannot be written with 2/3 subdivisions.
  const ScoreModel bad = score_of(
      {split({split({note(), note(), note(), note(), note()}), note(), note(), note()})});
  try {
    train_grammar({score_of({split({note(), note(), note(), note()})}), bad});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Decomposition);
    CHECK(std::string(e.what()).find("score 2 measure 1") != std::string::npos);
  }
  std::vector<std::string> warnings;
  TrainOptions o;
  o.skip_undecomposable = true;
  CHECK_NOTHROW(train_grammar({score_of({split({note(), note(), note(), note()})}), bad}, o, &warnings));
  CHECK(warnings.size() == 1);
}

TEST_CASE("training is invariant to corpus order") {
  const RhythmGrammar base = default_grammar();
  std::mt19937_64 rng(23);
  std::vector<ScoreModel> corpus;
  for (int i = 0; i < 12; ++i)
    corpus.push_back(sample_score(base, i % 3 ? TimeSignature(4, 4) : TimeSignature(3, 4), rng));
  const std::string a = serialize_grammar(train_grammar(corpus));
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(corpus.begin(), corpus.end(), rng);
    CHECK(serialize_grammar(train_grammar(corpus)) == a);
  }
}

TEST_CASE("trained grammar parses its own corpus") {
  const RhythmGrammar base = default_grammar();
  std::mt19937_64 rng(29);
  std::vector<ScoreModel> corpus;
  for (int i = 0; i < 8; ++i) corpus.push_back(sample_score(base, TimeSignature(4, 4), rng));
  const RhythmGrammar g = train_grammar(corpus);
  for (const auto& [head, h] : head_entropies(g)) {
    CHECK(h >= 0.0);
    CHECK(h <= std::log(6.0) + 1e-9);
  }
}
