#pragma once

#include <string>
#include <vector>

#include "rhythmiq/grammar.hpp"
#include "rhythmiq/rhythm_tree.hpp"

namespace rhythmiq {

struct TrainOptions {
  /// Add-k smoothing constant.
  double smoothing = 1.0;
  int max_depth = kDefaultMaxDepth;
  /// Skip measures that do not decompose (recorded as warnings) instead of
  /// throwing.
  bool skip_undecomposable = false;
};

/// Symbol names used by training: `M<num>_<den>` for a measure, `B` for a
/// beat, and a beat subdivision appends the arity of each split on its path
/// (B2, B23, ...).
std::string measure_symbol(const TimeSignature& ts);

/// Count productions of every measure's canonical tree and turn them into a
/// grammar with p = (count + k) / (head_total + k * candidates).
RhythmGrammar train_grammar(const std::vector<ScoreModel>& corpus, const TrainOptions& options = {},
                            std::vector<std::string>* warnings = nullptr);

/// Shannon entropy in nats of each head's rule distribution.
std::vector<std::pair<std::string, double>> head_entropies(const RhythmGrammar& grammar);

}  // namespace rhythmiq
