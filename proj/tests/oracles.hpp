#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "rhythmiq/error.hpp"
#include "rhythmiq/grammar.hpp"
#include "rhythmiq/quantizer.hpp"

namespace oracle {

using namespace rhythmiq;

struct Leaf {
  double a, b;
  LeafKind kind;
};

struct Derivation {
  std::vector<Leaf> leaves;
  double weight = 0.0;
};

// Every derivation of `symbol` over [a, a+len), splits allowed while
// depth + 1 <= max_depth.
inline std::vector<Derivation> derivations(const RhythmGrammar& g, const std::string& symbol,
                                           double a, double len, int depth) {
  std::vector<Derivation> out;
  for (std::size_t ri : g.rules_for(symbol)) {
    const GrammarRule& r = g.rules()[ri];
    if (std::isinf(r.weight)) continue;
    if (r.is_leaf()) {
      out.push_back({{{a, a + len, r.leaf}}, r.weight});
      continue;
    }
    if (depth + 1 > g.max_depth()) continue;
    const double part = len / r.arity();
    std::vector<Derivation> acc = {{{}, r.weight}};
    for (int c = 0; c < r.arity(); ++c) {
      const auto kids = derivations(g, r.children[static_cast<std::size_t>(c)], a + c * part, part,
                                    depth + 1);
      std::vector<Derivation> next;
      for (const Derivation& x : acc)
        for (const Derivation& y : kids) {
          Derivation z = x;
          z.leaves.insert(z.leaves.end(), y.leaves.begin(), y.leaves.end());
          z.weight += y.weight;
          next.push_back(std::move(z));
        }
      acc = std::move(next);
    }
    out.insert(out.end(), acc.begin(), acc.end());
  }
  return out;
}

inline double count_derivations(const RhythmGrammar& g, const std::string& symbol, int depth) {
  double total = 0.0;
  for (std::size_t ri : g.rules_for(symbol)) {
    const GrammarRule& r = g.rules()[ri];
    if (r.is_leaf()) {
      total += 1.0;
    } else if (depth + 1 <= g.max_depth()) {
      double p = 1.0;
      for (const std::string& c : r.children) p *= count_derivations(g, c, depth + 1);
      total += p;
    }
  }
  return total;
}

// Silent stretches of [0, len) from an initial state plus on/off events;
// at equal positions the release comes first.
inline std::vector<std::pair<double, double>> silences(bool on, std::vector<double> onsets,
                                                       std::vector<double> releases, double len) {
  struct Ev {
    double p;
    int on;
  };
  std::vector<Ev> ev;
  for (double x : onsets) ev.push_back({x, 1});
  for (double r : releases) ev.push_back({r, 0});
  std::sort(ev.begin(), ev.end(), [](const Ev& x, const Ev& y) {
    return x.p != y.p ? x.p < y.p : x.on < y.on;
  });
  std::vector<std::pair<double, double>> out;
  double from = 0.0;
  for (const Ev& e : ev) {
    const double p = std::clamp(e.p, 0.0, len);
    if (e.on && !on) out.emplace_back(from, p);
    if (!e.on && on) from = p;
    on = e.on;
  }
  if (!on) out.emplace_back(from, len);
  return out;
}

inline double overlap(const std::vector<std::pair<double, double>>& iv, double a, double b) {
  double s = 0.0;
  for (const auto& [lo, hi] : iv) s += std::max(0.0, std::min(b, hi) - std::max(a, lo));
  return s;
}

// Cost of one derivation on a measure input, infinite when the leaves cannot
// host the onsets one per note leaf in order.
inline double derivation_cost(const Derivation& d, const MeasureInput& in, double beats,
                              const QuantConfig& cfg) {
  std::vector<double> x, rel;
  for (const MeasureOnset& o : in.onsets) x.push_back(o.position * beats);
  for (double r : in.releases) rel.push_back(r * beats);
  const auto quiet = silences(in.carried_pitch.has_value(), x, rel, beats);
  const double th = cfg.rest_threshold;
  bool sounding = in.carried_pitch.has_value();
  std::size_t i = 0;
  double fit = 0.0;
  for (const Leaf& l : d.leaves) {
    switch (l.kind) {
      case LeafKind::Note:
        if (i == x.size()) return std::numeric_limits<double>::infinity();
        fit += std::abs(x[i] - l.a) + (1 - th) * overlap(quiet, std::max(l.a, x[i]), l.b);
        ++i;
        sounding = true;
        break;
      case LeafKind::Continuation:
        if (!sounding) return std::numeric_limits<double>::infinity();
        fit += (1 - th) * overlap(quiet, l.a, l.b);
        break;
      case LeafKind::Rest:
        fit += th * ((l.b - l.a) - overlap(quiet, l.a, l.b));
        sounding = false;
        break;
    }
  }
  if (i != x.size()) return std::numeric_limits<double>::infinity();
  return cfg.alpha * fit + d.weight;
}

inline double brute_force_cost(const RhythmGrammar& g, const MeasureInput& in,
                               const QuantConfig& cfg) {
  const int beats = in.time_signature.numerator;
  double best = std::numeric_limits<double>::infinity();
  for (const Derivation& d : derivations(g, g.start_symbol(in.time_signature), 0.0, beats, 0))
    best = std::min(best, derivation_cost(d, in, beats, cfg));
  return best;
}

// Random grammar for one meter: at most 12 rules, every head has a leaf
// rule, max depth 1..3, and a bounded number of derivations.
inline RhythmGrammar random_grammar(std::mt19937_64& rng, const TimeSignature& ts) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const std::vector<std::string> names = {"M", "P", "Q", "R"};
  for (;;) {
    std::vector<GrammarRule> rules;
    const int depth = std::uniform_int_distribution<int>(1, 3)(rng);
    const int symbols = std::uniform_int_distribution<int>(1, 3)(rng);
    const auto pick = [&] {
      return names[static_cast<std::size_t>(std::uniform_int_distribution<int>(1, symbols)(rng))];
    };
    rules.push_back({"M", std::vector<std::string>(static_cast<std::size_t>(ts.numerator), pick()),
                     LeafKind::Note, u(rng)});
    for (LeafKind k : {LeafKind::Note, LeafKind::Rest, LeafKind::Continuation})
      if (u(rng) < 0.5) rules.push_back({"M", {}, k, u(rng)});
    for (int s = 1; s <= symbols; ++s) {
      const std::string& head = names[static_cast<std::size_t>(s)];
      rules.push_back({head, {}, LeafKind::Note, u(rng)});
      if (u(rng) < 0.6) rules.push_back({head, {}, LeafKind::Rest, u(rng)});
      if (u(rng) < 0.6) rules.push_back({head, {}, LeafKind::Continuation, u(rng)});
      const int splits = std::uniform_int_distribution<int>(0, 2)(rng);
      for (int k = 0; k < splits; ++k) {
        const int arity = u(rng) < 0.6 ? 2 : 3;
        std::vector<std::string> kids;
        for (int c = 0; c < arity; ++c) kids.push_back(pick());
        rules.push_back({head, kids, LeafKind::Note, u(rng)});
      }
    }
    if (rules.size() > 12) continue;
    for (GrammarRule& r : rules) r.weight = -std::log(r.weight);
    try {
      RhythmGrammar g(rules, {{ts, "M"}}, depth);
      const double n = count_derivations(g, "M", 0);
      if (n <= 60000) return g;
    } catch (const Error&) {
    }
  }
}

inline MeasureInput random_measure(std::mt19937_64& rng, const TimeSignature& ts,
                                   std::size_t max_onsets) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MeasureInput in;
  in.time_signature = ts;
  const std::size_t n = std::uniform_int_distribution<std::size_t>(0, max_onsets)(rng);
  std::vector<double> pos;
  while (pos.size() < n) {
    double p = u(rng) < 0.5 ? std::floor(u(rng) * 12) / 12 : u(rng);
    if (std::find(pos.begin(), pos.end(), p) == pos.end()) pos.push_back(p);
  }
  std::sort(pos.begin(), pos.end());
  for (double p : pos) in.onsets.push_back({p, 60 + static_cast<int>(u(rng) * 12)});
  if (u(rng) < 0.4) in.carried_pitch = 62;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double end = i + 1 < pos.size() ? pos[i + 1] : 1.0;
    if (u(rng) < 0.5) in.releases.push_back(pos[i] + (end - pos[i]) * u(rng));
  }
  if (in.carried_pitch && u(rng) < 0.5)
    in.releases.push_back((pos.empty() ? 1.0 : pos[0]) * u(rng));
  std::sort(in.releases.begin(), in.releases.end());
  return in;
}

// Largest one-to-one matching by trying every assignment.
inline std::size_t brute_force_matching(const std::vector<std::vector<bool>>& ok, std::size_t i,
                                        std::vector<bool>& used) {
  if (i == ok.size()) return 0;
  std::size_t best = brute_force_matching(ok, i + 1, used);
  for (std::size_t j = 0; j < used.size(); ++j) {
    if (used[j] || !ok[i][j]) continue;
    used[j] = true;
    best = std::max(best, 1 + brute_force_matching(ok, i + 1, used));
    used[j] = false;
  }
  return best;
}

}  // namespace oracle
