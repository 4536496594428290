#include "rhythmiq/grammar.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "rhythmiq/error.hpp"

namespace rhythmiq {

double GrammarRule::probability() const { return std::exp(-weight); }

namespace {

std::string rule_text(const GrammarRule& r) {
  std::string s = r.head + " -> ";
  if (r.is_leaf()) return s + std::string(to_string(r.leaf));
  s += "(";
  for (std::size_t i = 0; i < r.children.size(); ++i) s += (i ? " " : "") + r.children[i];
  return s + ")";
}

}  // namespace

RhythmGrammar::RhythmGrammar(std::vector<GrammarRule> rules,
                             std::map<TimeSignature, std::string> starts, int max_depth,
                             std::vector<std::string>* warnings)
    : rules_(std::move(rules)), starts_(std::move(starts)), max_depth_(max_depth) {
  if (max_depth_ < 1) throw Error(ErrorKind::Validation, "maxdepth must be >= 1");
  if (rules_.empty()) throw Error(ErrorKind::Validation, "grammar has no rules");
  if (starts_.empty()) throw Error(ErrorKind::Validation, "grammar has no start symbol");

  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const GrammarRule& r = rules_[i];
    if (r.head.empty()) throw Error(ErrorKind::Validation, "rule with empty head");
    if (r.children.size() == 1)
      throw Error(ErrorKind::Validation, "split with a single child: " + rule_text(r));
    if (std::isnan(r.weight) || r.weight < 0.0)
      throw Error(ErrorKind::Validation, "negative probability weight: " + rule_text(r));
    by_head_[r.head].push_back(i);
  }
  for (const GrammarRule& r : rules_)
    for (const std::string& c : r.children)
      if (!by_head_.count(c))
        throw Error(ErrorKind::Reference, "symbol '" + c + "' in " + rule_text(r) + " has no rules");
  for (const auto& [ts, sym] : starts_)
    if (!by_head_.count(sym))
      throw Error(ErrorKind::Validation,
                  "start symbol '" + sym + "' for " + ts.str() + " has no rules");

  for (auto& [head, idx] : by_head_) {
    double total = 0.0;
    for (std::size_t i : idx) total += std::exp(-rules_[i].weight);
    if (!(total > 0.0))
      throw Error(ErrorKind::Validation, "rules for '" + head + "' have zero total probability");
    if (std::abs(total - 1.0) > 1e-6 && warnings) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "probabilities for '%s' sum to %.6f; normalized",
                    head.c_str(), total);
      warnings->push_back(buf);
    }
    const double shift = std::log(total);
    for (std::size_t i : idx) rules_[i].weight = std::max(0.0, rules_[i].weight + shift);
  }

  // Fixpoint: the smallest depth budget with which each symbol terminates.
  std::map<std::string, int> need;
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [head, idx] : by_head_) {
      int best = need.count(head) ? need[head] : max_depth_ + 1;
      for (std::size_t i : idx) {
        const GrammarRule& r = rules_[i];
        if (std::isinf(r.weight)) continue;
        int levels = 0;
        if (!r.is_leaf()) {
          for (const std::string& c : r.children)
            levels = std::max(levels, need.count(c) ? need[c] + 1 : max_depth_ + 2);
        }
        best = std::min(best, levels);
      }
      if (best <= max_depth_ && (!need.count(head) || best < need[head])) {
        need[head] = best;
        changed = true;
      }
    }
  }
  for (const auto& [head, idx] : by_head_)
    if (!need.count(head))
      throw Error(ErrorKind::Validation,
                  "symbol '" + head + "' cannot finish within maxdepth " +
                      std::to_string(max_depth_));
}

const std::string& RhythmGrammar::start_symbol(const TimeSignature& ts) const {
  const auto it = starts_.find(ts);
  if (it == starts_.end())
    throw Error(ErrorKind::Validation, "grammar has no start symbol for " + ts.str());
  return it->second;
}

const std::vector<std::size_t>& RhythmGrammar::rules_for(const std::string& head) const {
  const auto it = by_head_.find(head);
  if (it == by_head_.end()) throw Error(ErrorKind::Reference, "unknown symbol '" + head + "'");
  return it->second;
}

std::vector<std::string> RhythmGrammar::heads() const {
  std::vector<std::string> out;
  for (const auto& [head, idx] : by_head_) out.push_back(head);
  return out;
}

std::size_t RhythmGrammar::max_leaves(const std::string& symbol, int depth) const {
  const auto key = std::make_pair(symbol, depth);
  if (const auto it = leaves_memo_.find(key); it != leaves_memo_.end()) return it->second;
  std::size_t best = 0;
  for (std::size_t i : rules_for(symbol)) {
    const GrammarRule& r = rules_[i];
    if (std::isinf(r.weight)) continue;
    if (r.is_leaf()) {
      best = std::max<std::size_t>(best, 1);
    } else if (depth + 1 <= max_depth_) {
      std::size_t n = 0;
      for (const std::string& c : r.children) n += max_leaves(c, depth + 1);
      best = std::max(best, n);
    }
  }
  leaves_memo_[key] = best;
  return best;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw Error(ErrorKind::Format, "grammar line " + std::to_string(line) + ": " + what);
}

int parse_int(std::string_view s, std::size_t line) {
  s = trim(s);
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    bad_line(line, "expected an integer, got '" + std::string(s) + "'");
  return v;
}

}  // namespace

RhythmGrammar parse_grammar(std::string_view text, std::vector<std::string>* warnings) {
  std::vector<GrammarRule> rules;
  std::map<TimeSignature, std::string> starts;
  int max_depth = kDefaultMaxDepth;
  std::size_t line_no = 0;

  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    while (!line.empty()) {
      const auto semi = line.find(';');
      const std::string_view stmt = trim(line.substr(0, semi));
      line = semi == std::string_view::npos ? std::string_view{} : line.substr(semi + 1);
      if (stmt.empty()) continue;

      if (stmt.rfind("maxdepth", 0) == 0 && stmt.find("->") == std::string_view::npos) {
        const auto eq = stmt.find('=');
        if (eq == std::string_view::npos) bad_line(line_no, "expected 'maxdepth = N'");
        max_depth = parse_int(stmt.substr(eq + 1), line_no);
        continue;
      }
      if (stmt.rfind("start", 0) == 0 && stmt.find("->") == std::string_view::npos) {
        const auto eq = stmt.find('=');
        if (eq == std::string_view::npos) bad_line(line_no, "expected 'start N/D = SYMBOL'");
        const std::string_view sig = trim(stmt.substr(5, eq - 5));
        const auto slash = sig.find('/');
        if (slash == std::string_view::npos) bad_line(line_no, "bad time signature");
        const TimeSignature ts(parse_int(sig.substr(0, slash), line_no),
                               parse_int(sig.substr(slash + 1), line_no));
        const auto sym = words(stmt.substr(eq + 1));
        if (sym.size() != 1) bad_line(line_no, "expected one start symbol");
        if (!starts.emplace(ts, sym[0]).second)
          bad_line(line_no, "duplicate start for " + ts.str());
        continue;
      }

      const auto arrow = stmt.find("->");
      const auto colon = stmt.rfind(':');
      if (arrow == std::string_view::npos || colon == std::string_view::npos || colon < arrow)
        bad_line(line_no, "expected 'HEAD -> BODY : PROB'");
      const auto head = words(stmt.substr(0, arrow));
      if (head.size() != 1) bad_line(line_no, "expected one head symbol");
      const std::string_view body = trim(stmt.substr(arrow + 2, colon - arrow - 2));
      std::string prob_text(trim(stmt.substr(colon + 1)));
      char* end = nullptr;
      const double prob = std::strtod(prob_text.c_str(), &end);
      if (prob_text.empty() || *end != '\0') bad_line(line_no, "bad probability");
      if (prob < 0.0) bad_line(line_no, "negative probability");

      GrammarRule r;
      r.head = head[0];
      r.weight = prob > 0.0 ? -std::log(prob) : std::numeric_limits<double>::infinity();
      if (!body.empty() && body.front() == '(') {
        if (body.back() != ')') bad_line(line_no, "unbalanced parenthesis");
        r.children = words(body.substr(1, body.size() - 2));
        if (r.children.size() < 2) bad_line(line_no, "a split needs at least 2 children");
      } else {
        const auto kind = leaf_kind_from_string(body);
        if (!kind) bad_line(line_no, "unknown leaf label '" + std::string(body) + "'");
        r.leaf = *kind;
      }
      rules.push_back(std::move(r));
    }
  }
  return RhythmGrammar(std::move(rules), std::move(starts), max_depth, warnings);
}

std::string serialize_grammar(const RhythmGrammar& g) {
  std::string out = "maxdepth = " + std::to_string(g.max_depth()) + "\n";
  for (const auto& [ts, sym] : g.starts()) out += "start " + ts.str() + " = " + sym + "\n";
  char buf[32];
  for (const GrammarRule& r : g.rules()) {
    std::snprintf(buf, sizeof buf, " : %.6f\n", r.probability());
    out += rule_text(r) + buf;
  }
  return out;
}

std::string_view default_grammar_text() {
  return R"(# Binary subdivision down to 32nd notes, triplets only at beat level.
maxdepth = 4
start 4/4 = M4
start 3/4 = M3
start 2/4 = M2

M4 -> (B B B B) : 0.94
M4 -> note : 0.02
M4 -> rest : 0.02
M4 -> continuation : 0.02
M3 -> (B B B) : 0.94
M3 -> note : 0.02
M3 -> rest : 0.02
M3 -> continuation : 0.02
M2 -> (B B) : 0.94
M2 -> note : 0.02
M2 -> rest : 0.02
M2 -> continuation : 0.02

B -> (E E) : 0.45
B -> (T T T) : 0.05
B -> note : 0.25
B -> rest : 0.1
B -> continuation : 0.15

E -> (S S) : 0.2
E -> note : 0.5
E -> rest : 0.1
E -> continuation : 0.2

T -> note : 0.8
T -> rest : 0.1
T -> continuation : 0.1

S -> (Z Z) : 0.05
S -> note : 0.75
S -> continuation : 0.2

Z -> note : 0.8
Z -> continuation : 0.2
)";
}

RhythmGrammar default_grammar() { return parse_grammar(default_grammar_text()); }

bool RuleSelector::matches(const GrammarRule& r) const {
  if (head && r.head != *head) return false;
  if (arity && (r.is_leaf() || r.arity() != *arity)) return false;
  if (leaf && (!r.is_leaf() || r.leaf != *leaf)) return false;
  return true;
}

RhythmGrammar adjust_rule_weight(const RhythmGrammar& grammar, const RuleSelector& selector,
                                 double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw Error(ErrorKind::Validation, "weight factor must be a positive number");
  std::vector<GrammarRule> rules = grammar.rules();
  std::set<std::string> touched;
  for (GrammarRule& r : rules)
    if (selector.matches(r)) {
      r.weight -= std::log(factor);
      touched.insert(r.head);
    }
  if (touched.empty()) throw Error(ErrorKind::NotFound, "selector matches no rule");
  for (const std::string& head : touched) {
    double total = 0.0;
    for (const GrammarRule& r : rules)
      if (r.head == head) total += std::exp(-r.weight);
    for (GrammarRule& r : rules)
      if (r.head == head) r.weight = std::max(0.0, r.weight + std::log(total));
  }
  return RhythmGrammar(std::move(rules), grammar.starts(), grammar.max_depth());
}

RhythmTree sample_tree(const RhythmGrammar& grammar, const std::string& symbol,
                       std::mt19937_64& rng, bool& sounding, int& pitch, int depth) {
  std::vector<std::size_t> allowed;
  std::vector<double> probs;
  for (std::size_t i : grammar.rules_for(symbol)) {
    const GrammarRule& r = grammar.rules()[i];
    if (std::isinf(r.weight)) continue;
    if (!r.is_leaf() && depth + 1 > grammar.max_depth()) continue;
    if (r.is_leaf() && r.leaf == LeafKind::Continuation && !sounding) continue;
    allowed.push_back(i);
    probs.push_back(r.probability());
  }
  if (allowed.empty())
    throw Error(ErrorKind::Validation, "no rule of '" + symbol + "' applies at depth " +
                                           std::to_string(depth));
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  const GrammarRule& r = grammar.rules()[allowed[pick(rng)]];
  if (!r.is_leaf()) {
    std::vector<RhythmTree> kids;
    for (const std::string& c : r.children)
      kids.push_back(sample_tree(grammar, c, rng, sounding, pitch, depth + 1));
    return RhythmTree::split(std::move(kids));
  }
  switch (r.leaf) {
    case LeafKind::Note: {
      // Small melodic steps keep the line singable; the range is clamped later.
      std::uniform_int_distribution<int> step(-5, 5);
      pitch += step(rng);
      sounding = true;
      return RhythmTree::leaf(LeafKind::Note, pitch);
    }
    case LeafKind::Continuation:
      return RhythmTree::leaf(LeafKind::Continuation, pitch);
    case LeafKind::Rest:
      sounding = false;
      return RhythmTree::leaf(LeafKind::Rest);
  }
  return RhythmTree::leaf(LeafKind::Rest);
}

namespace {

bool has_sound(const RhythmTree& t) {
  if (t.is_leaf()) return t.kind != LeafKind::Rest;
  return std::any_of(t.children.begin(), t.children.end(), has_sound);
}

bool starts_with_onset_in_first(const RhythmTree& t, Fraction length) {
  for (const TimedLeaf& l : timed_leaves(t, length)) {
    if (l.start >= Fraction(1)) return false;
    if (l.kind == LeafKind::Note) return true;
  }
  return false;
}

void clamp_pitches(RhythmTree& t, int lo, int hi) {
  if (t.is_leaf()) {
    if (t.kind != LeafKind::Rest) t.pitch = std::clamp(t.pitch, lo, hi);
    return;
  }
  for (RhythmTree& c : t.children) clamp_pitches(c, lo, hi);
}

}  // namespace

ScoreModel sample_score(const RhythmGrammar& grammar, const TimeSignature& ts,
                        std::mt19937_64& rng, const SampleOptions& options) {
  if (options.measures < 1) throw Error(ErrorKind::Validation, "need at least one measure");
  const std::string& start = grammar.start_symbol(ts);
  ScoreModel score;
  score.time_signature = ts;
  score.tempo_bpm = options.tempo_bpm;

  std::uniform_int_distribution<int> first_pitch(options.low_pitch, options.high_pitch);
  int pitch = first_pitch(rng);
  bool sounding = false;
  constexpr int kAttempts = 1000;

  if (options.pickup && ts.numerator > 1) {
    const GrammarRule* beats = nullptr;
    for (std::size_t i : grammar.rules_for(start))
      if (grammar.rules()[i].arity() == ts.numerator) beats = &grammar.rules()[i];
    if (beats) {
      std::uniform_int_distribution<int> len(1, ts.numerator - 1);
      const int a = len(rng);
      for (int attempt = 0; attempt < kAttempts; ++attempt) {
        bool s = false;
        int p = pitch;
        std::vector<RhythmTree> kids;
        for (int k = ts.numerator - a; k < ts.numerator; ++k)
          kids.push_back(sample_tree(grammar, beats->children[static_cast<std::size_t>(k)], rng, s,
                                     p, 1));
        RhythmTree tree = a == 1 ? kids.front() : RhythmTree::split(std::move(kids));
        if (!starts_with_onset_in_first(tree, Fraction(a))) continue;
        score.anacrusis_beats = Fraction(a);
        score.measures.push_back(std::move(tree));
        sounding = s;
        pitch = p;
        break;
      }
    }
  }

  for (int m = 0; m < options.measures; ++m) {
    const bool last = m + 1 == options.measures;
    for (int attempt = 0;; ++attempt) {
      bool s = sounding;
      int p = pitch;
      RhythmTree tree = sample_tree(grammar, start, rng, s, p, 0);
      if (last && !has_sound(tree) && attempt < kAttempts) continue;
      score.measures.push_back(std::move(tree));
      sounding = s;
      pitch = std::clamp(p, options.low_pitch, options.high_pitch);
      break;
    }
  }
  for (RhythmTree& t : score.measures) clamp_pitches(t, options.low_pitch, options.high_pitch);
  return score;
}

}  // namespace rhythmiq
