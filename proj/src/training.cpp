#include "rhythmiq/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "rhythmiq/error.hpp"

namespace rhythmiq {
namespace {

constexpr const char* kBeat = "B";

bool is_measure_symbol(const std::string& s) { return !s.empty() && s[0] == 'M'; }

int symbol_depth(const std::string& s) {
  return is_measure_symbol(s) ? 0 : static_cast<int>(s.size());
}

std::string child_symbol(const std::string& parent, int arity) {
  return is_measure_symbol(parent) ? kBeat : parent + std::to_string(arity);
}

GrammarRule split_rule(const std::string& head, int arity) {
  GrammarRule r;
  r.head = head;
  r.children.assign(static_cast<std::size_t>(arity), child_symbol(head, arity));
  return r;
}

GrammarRule leaf_rule(const std::string& head, LeafKind kind) {
  GrammarRule r;
  r.head = head;
  r.leaf = kind;
  return r;
}

std::string rule_key(const GrammarRule& r) {
  if (r.is_leaf()) return std::string(to_string(r.leaf));
  return "(" + std::to_string(r.arity()) + ")";
}

struct Counts {
  // head -> rule key -> (rule, count)
  std::map<std::string, std::map<std::string, std::pair<GrammarRule, double>>> table;
  std::map<std::string, int> measure_arity;

  void add(const GrammarRule& r) {
    auto& slot = table[r.head][rule_key(r)];
    slot.first = r;
    slot.second += 1.0;
  }

  void walk(const RhythmTree& t, const std::string& symbol) {
    if (t.is_leaf()) {
      add(leaf_rule(symbol, t.kind));
      return;
    }
    const GrammarRule r = split_rule(symbol, static_cast<int>(t.children.size()));
    add(r);
    for (const RhythmTree& c : t.children) walk(c, r.children.front());
  }
};

std::vector<GrammarRule> candidates(const std::string& head, int measure_arity, int max_depth) {
  std::vector<GrammarRule> out;
  if (is_measure_symbol(head)) {
    out.push_back(split_rule(head, measure_arity));
  } else if (symbol_depth(head) < max_depth) {
    out.push_back(split_rule(head, 2));
    out.push_back(split_rule(head, 3));
  }
  for (LeafKind k : {LeafKind::Note, LeafKind::Rest, LeafKind::Continuation})
    out.push_back(leaf_rule(head, k));
  return out;
}

// Split the pickup into its beats so every beat is counted like a full
// measure's beat; the pickup root itself is not a production of the grammar.
std::vector<RhythmTree> pickup_beats(const ScoreModel& score, int max_depth) {
  const Fraction beats = score.anacrusis_beats;
  if (!beats.is_integer())
    throw Error(ErrorKind::Decomposition, "pickup of " + beats.str() + " beats");
  const auto n = static_cast<int>(beats.num());
  const auto events = timeline(score.measures[0], beats);
  std::vector<RhythmTree> out;
  if (n == 1) {
    out.push_back(canonical_tree(events, beats, 0, max_depth - 1));
    return out;
  }
  RhythmTree root = canonical_tree(events, beats, n, max_depth);
  if (root.is_leaf()) {
    out.push_back(root);
    const LeafKind rest_kind = root.kind == LeafKind::Rest ? LeafKind::Rest : LeafKind::Continuation;
    for (int i = 1; i < n; ++i) out.push_back(RhythmTree::leaf(rest_kind, root.pitch));
    return out;
  }
  return root.children;
}

}  // namespace

std::string measure_symbol(const TimeSignature& ts) {
  if (ts.numerator == 1) return kBeat;
  return "M" + std::to_string(ts.numerator) + "_" + std::to_string(ts.denominator);
}

RhythmGrammar train_grammar(const std::vector<ScoreModel>& corpus, const TrainOptions& options,
                            std::vector<std::string>* warnings) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyInput, "training corpus is empty");
  if (options.smoothing < 0.0) throw Error(ErrorKind::Validation, "smoothing must be >= 0");
  const int max_depth = options.max_depth;

  Counts counts;
  std::map<TimeSignature, std::string> starts;
  std::size_t used = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const ScoreModel& score = corpus[s];
    const TimeSignature& ts = score.time_signature;
    const std::string start = measure_symbol(ts);
    counts.measure_arity[start] = ts.numerator;
    for (std::size_t m = 0; m < score.measures.size(); ++m) {
      const std::string where =
          "score " + std::to_string(s + 1) + " measure " + std::to_string(m + 1);
      try {
        if (m == 0 && score.has_pickup()) {
          const auto beats = pickup_beats(score, max_depth);
          for (const RhythmTree& b : beats) counts.walk(b, kBeat);
        } else {
          const Fraction len(ts.numerator);
          const RhythmTree tree =
              ts.numerator == 1
                  ? canonical_tree(timeline(score.measures[m], len), len, 0, max_depth - 1)
                  : canonical_tree(timeline(score.measures[m], len), len, ts.numerator,
                                   max_depth);
          counts.walk(tree, start);
        }
        ++used;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Decomposition) throw;
        if (!options.skip_undecomposable)
          throw Error(ErrorKind::Decomposition, where + ": " + e.what());
        if (warnings) warnings->push_back(where + " skipped: " + e.what());
      }
    }
    starts.emplace(ts, start);
  }
  if (used == 0) throw Error(ErrorKind::InsufficientData, "no usable measures in the corpus");

  const double k = options.smoothing;
  std::set<std::string> heads;
  for (const auto& [head, rules] : counts.table) heads.insert(head);
  if (k > 0.0) {
    std::vector<std::string> todo(heads.begin(), heads.end());
    for (const auto& [ts, sym] : starts) todo.push_back(sym);
    while (!todo.empty()) {
      const std::string h = todo.back();
      todo.pop_back();
      heads.insert(h);
      const int arity = counts.measure_arity.count(h) ? counts.measure_arity[h] : 2;
      for (const GrammarRule& r : candidates(h, arity, max_depth))
        for (const std::string& c : r.children)
          if (!heads.count(c)) {
            heads.insert(c);
            todo.push_back(c);
          }
    }
  }

  std::vector<std::string> ordered(heads.begin(), heads.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const std::string& a, const std::string& b) {
    if (symbol_depth(a) != symbol_depth(b)) return symbol_depth(a) < symbol_depth(b);
    return a < b;
  });

  std::vector<GrammarRule> rules;
  for (const std::string& h : ordered) {
    const auto& observed = counts.table[h];
    double total = 0.0;
    for (const auto& [key, rc] : observed) total += rc.second;
    std::vector<std::pair<GrammarRule, double>> listed;
    if (k > 0.0) {
      const int arity = counts.measure_arity.count(h) ? counts.measure_arity[h] : 2;
      for (const GrammarRule& r : candidates(h, arity, max_depth)) {
        const auto it = observed.find(rule_key(r));
        listed.emplace_back(it == observed.end() ? r : it->second.first,
                            it == observed.end() ? 0.0 : it->second.second);
      }
      // Observed rules outside the candidate set (deeper than max_depth) still count.
      for (const auto& [key, rc] : observed)
        if (std::none_of(listed.begin(), listed.end(),
                         [&](const auto& l) { return rule_key(l.first) == key; }))
          listed.push_back(rc);
    } else {
      for (const auto& [key, rc] : observed) listed.push_back(rc);
      std::stable_sort(listed.begin(), listed.end(), [](const auto& a, const auto& b) {
        return a.first.is_leaf() != b.first.is_leaf() ? !a.first.is_leaf()
                                                      : rule_key(a.first) < rule_key(b.first);
      });
    }
    const double denom = total + k * static_cast<double>(listed.size());
    for (auto& [r, c] : listed) {
      r.weight = -std::log((c + k) / denom);
      rules.push_back(r);
    }
  }
  return RhythmGrammar(std::move(rules), std::move(starts), max_depth, warnings);
}

std::vector<std::pair<std::string, double>> head_entropies(const RhythmGrammar& grammar) {
  std::vector<std::pair<std::string, double>> out;
  for (const std::string& h : grammar.heads()) {
    double e = 0.0;
    for (std::size_t i : grammar.rules_for(h)) {
      const double p = grammar.rules()[i].probability();
      if (p > 0.0) e -= p * std::log(p);
    }
    out.emplace_back(h, e);
  }
  return out;
}

}  // namespace rhythmiq
