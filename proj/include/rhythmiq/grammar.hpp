#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rhythmiq/rhythm_tree.hpp"
#include "rhythmiq/symbolic.hpp"

namespace rhythmiq {

/// One production. A split rule has two or more children; a leaf rule has none
/// and produces `leaf`. `weight` is -log probability.
struct GrammarRule {
  std::string head;
  std::vector<std::string> children;
  LeafKind leaf = LeafKind::Note;
  double weight = 0.0;

  bool is_leaf() const { return children.empty(); }
  int arity() const { return static_cast<int>(children.size()); }
  double probability() const;
};

inline constexpr int kDefaultMaxDepth = 4;

/// Weighted rhythm grammar. Construction normalizes each head's
/// distribution and validates references, start symbols and termination.
class RhythmGrammar {
 public:
  RhythmGrammar(std::vector<GrammarRule> rules, std::map<TimeSignature, std::string> starts,
                int max_depth = kDefaultMaxDepth, std::vector<std::string>* warnings = nullptr);

  const std::vector<GrammarRule>& rules() const { return rules_; }
  const std::map<TimeSignature, std::string>& starts() const { return starts_; }
  int max_depth() const { return max_depth_; }

  /// Start symbol for a meter; throws Validation when the grammar has none.
  const std::string& start_symbol(const TimeSignature& ts) const;
  /// Indices into rules() for one head, in file order.
  const std::vector<std::size_t>& rules_for(const std::string& head) const;
  bool has_head(const std::string& head) const { return by_head_.count(head) > 0; }
  std::vector<std::string> heads() const;

  /// Most leaves a node of `symbol` at `depth` can expand to.
  std::size_t max_leaves(const std::string& symbol, int depth) const;

 private:
  std::vector<GrammarRule> rules_;
  std::map<TimeSignature, std::string> starts_;
  int max_depth_;
  std::map<std::string, std::vector<std::size_t>> by_head_;
  mutable std::map<std::pair<std::string, int>, std::size_t> leaves_memo_;
};

RhythmGrammar parse_grammar(std::string_view text, std::vector<std::string>* warnings = nullptr);
std::string serialize_grammar(const RhythmGrammar& grammar);

/// Shipped grammar: binary subdivision down to 32nd notes in 2/4, 3/4 and
/// 4/4 with rare beat-level triplets.
std::string_view default_grammar_text();
RhythmGrammar default_grammar();

/// Matches rules by any combination of head, split arity and leaf label.
struct RuleSelector {
  std::optional<std::string> head;
  std::optional<int> arity;
  std::optional<LeafKind> leaf;

  bool matches(const GrammarRule& rule) const;
};

/// Multiply the probability of every selected rule by `factor` and
/// renormalize the affected heads.
RhythmGrammar adjust_rule_weight(const RhythmGrammar& grammar, const RuleSelector& selector,
                                 double factor);

/// Draw a measure tree top-down from the grammar. `sounding` is whether a
/// note is held into the measure and is updated to the state after it;
/// continuation leaves are only drawn while something sounds.
RhythmTree sample_tree(const RhythmGrammar& grammar, const std::string& symbol,
                       std::mt19937_64& rng, bool& sounding, int& pitch, int depth = 0);

struct SampleOptions {
  int measures = 4;
  /// Allow a random pickup of 1..beats-1 beats.
  bool pickup = false;
  double tempo_bpm = 120.0;
  int low_pitch = 55;
  int high_pitch = 84;
};

/// Sample a score whose first pickup beat and last measure both contain
/// sound, so the rhythm survives a render/quantize round trip.
ScoreModel sample_score(const RhythmGrammar& grammar, const TimeSignature& ts,
                        std::mt19937_64& rng, const SampleOptions& options = {});

}  // namespace rhythmiq
