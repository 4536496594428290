#include "rhythmiq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "rhythmiq/error.hpp"

namespace rhythmiq {

void QuantConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw Error(ErrorKind::Validation, "alpha must be a finite number >= 0");
  if (!(rest_threshold > 0.0 && rest_threshold <= 1.0))
    throw Error(ErrorKind::Validation, "rest_threshold must lie in (0, 1]");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTieEps = 1e-9;

// Silence inside a measure, from the carried state, onsets and releases.
class SoundProfile {
 public:
  SoundProfile(bool initially_on, std::vector<std::pair<double, bool>> events, double length) {
    // Releases sort before onsets at the same position.
    std::sort(events.begin(), events.end());
    bool on = initially_on;
    std::size_t k = 0;
    for (; k < events.size() && events[k].first <= 0.0; ++k) on = events[k].second;
    double from = 0.0;
    for (; k < events.size() && events[k].first < length; ++k) {
      const auto [p, turns_on] = events[k];
      if (turns_on && !on) silence_.emplace_back(from, p);
      if (!turns_on && on) from = p;
      on = turns_on;
    }
    if (!on) silence_.emplace_back(from, length);
  }

  double silent(double a, double b) const {
    double s = 0.0;
    for (const auto& [lo, hi] : silence_) s += std::max(0.0, std::min(b, hi) - std::max(a, lo));
    return s;
  }
  double sounding(double a, double b) const { return std::max(0.0, b - a) - silent(a, b); }

 private:
  std::vector<std::pair<double, double>> silence_;
};

struct Ref {
  int node;
  int index;
};

struct Entry {
  double cost = kInf;
  double fit = 0.0;
  double gram = 0.0;
  int leaves = 0;
  int tuplets = 0;
  int rule = -1;
  int host = -1;
  std::vector<Ref> kids;

  bool valid() const { return cost < kInf; }
};

struct Node {
  std::string symbol;
  Fraction start;
  Fraction length;
  int depth;
  bool is_root;
  std::size_t capacity;
  // Child node ids for each split rule of the symbol; empty for leaf rules
  // and for splits that would pass max_depth.
  std::vector<std::pair<std::size_t, std::vector<int>>> splits;
  std::vector<std::size_t> leaf_rules;
  bool solved = false;
  std::vector<Entry> table;
};

class MeasureParser {
 public:
  MeasureParser(const RhythmGrammar& g, const QuantConfig& cfg, std::vector<double> x,
                std::vector<int> pitch, SoundProfile sound)
      : g_(g),
        cfg_(cfg),
        x_(std::move(x)),
        pitch_(std::move(pitch)),
        sound_(std::move(sound)),
        n_(static_cast<int>(x_.size())) {}

  int node(const std::string& symbol, Fraction start, Fraction length, int depth, bool is_root) {
    const auto key = std::make_tuple(symbol, start.num(), start.den(), length.num(), length.den(),
                                     depth, is_root);
    if (const auto it = ids_.find(key); it != ids_.end()) return it->second;
    Node nd{symbol, start, length, depth, is_root, g_.max_leaves(symbol, depth), {}, {}, false, {}};
    for (std::size_t ri : g_.rules_for(symbol)) {
      const GrammarRule& r = g_.rules()[ri];
      if (std::isinf(r.weight)) continue;
      if (r.is_leaf()) {
        nd.leaf_rules.push_back(ri);
        continue;
      }
      if (depth + 1 > g_.max_depth()) continue;
      std::vector<int> kids;
      const Fraction part = length / Fraction(r.arity());
      for (int c = 0; c < r.arity(); ++c)
        kids.push_back(node(r.children[static_cast<std::size_t>(c)], start + part * Fraction(c),
                            part, depth + 1, false));
      nd.splits.emplace_back(ri, std::move(kids));
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(nd));
    ids_.emplace(key, id);
    return id;
  }

  std::size_t capacity(int id) const { return nodes_[static_cast<std::size_t>(id)].capacity; }

  int index(int i, int j, int s_in, int s_out) const {
    return ((i * (n_ + 1) + j) * 2 + s_in) * 2 + s_out;
  }

  const Entry& entry(Ref r) const {
    return nodes_[static_cast<std::size_t>(r.node)].table[static_cast<std::size_t>(r.index)];
  }

  void solve(int id) {
    if (nodes_[static_cast<std::size_t>(id)].solved) return;
    for (auto& [ri, kids] : nodes_[static_cast<std::size_t>(id)].splits)
      for (int k : kids) solve(k);
    Node& nd = nodes_[static_cast<std::size_t>(id)];
    nd.table.assign(static_cast<std::size_t>((n_ + 1) * (n_ + 1) * 4), Entry{});
    const double a = nd.start.to_double();
    const double b = a + nd.length.to_double();
    const double theta = cfg_.rest_threshold;

    for (std::size_t ri : nd.leaf_rules) {
      const GrammarRule& r = g_.rules()[ri];
      for (int i = 0; i <= n_; ++i) {
        for (int s_in = 0; s_in < 2; ++s_in) {
          Entry e;
          e.gram = r.weight;
          e.leaves = 1;
          e.rule = static_cast<int>(ri);
          int j = i;
          int s_out = 1;
          switch (r.leaf) {
            case LeafKind::Rest:
              e.fit = theta * sound_.sounding(a, b);
              s_out = 0;
              break;
            case LeafKind::Continuation:
              if (!s_in) continue;
              e.fit = (1.0 - theta) * sound_.silent(a, b);
              break;
            case LeafKind::Note: {
              if (i == n_) continue;
              const double xi = x_[static_cast<std::size_t>(i)];
              e.fit = std::abs(xi - a) + (1.0 - theta) * sound_.silent(std::max(a, xi), b);
              e.host = i;
              j = i + 1;
              break;
            }
          }
          e.cost = cfg_.alpha * e.fit + e.gram;
          offer(nd.table[static_cast<std::size_t>(index(i, j, s_in, s_out))], std::move(e));
        }
      }
    }

    for (const auto& [ri, kids] : nd.splits) {
      const GrammarRule& r = g_.rules()[ri];
      const int tuplet = !nd.is_root && !is_power_of_two(r.arity()) ? 1 : 0;
      fold(kids, [&](int i, int s_in, int j, int s_out, Entry e) {
        e.gram += r.weight;
        e.cost += r.weight;
        e.tuplets += tuplet;
        e.rule = static_cast<int>(ri);
        offer(nodes_[static_cast<std::size_t>(id)].table[static_cast<std::size_t>(
                  index(i, j, s_in, s_out))],
              std::move(e));
      });
    }
    nodes_[static_cast<std::size_t>(id)].solved = true;
  }

  // Sequential combination of sibling tables; `emit` receives every
  // complete combination spanning onsets [i, j).
  template <typename Emit>
  void fold(const std::vector<int>& kids, Emit emit) {
    const auto width = static_cast<std::size_t>((n_ + 1) * 2);
    for (int s_in = 0; s_in < 2; ++s_in) {
      for (int i = 0; i <= n_; ++i) {
        std::vector<Entry> cur(width);
        cur[static_cast<std::size_t>(i * 2 + s_in)].cost = 0.0;
        int reach = i;
        for (int kid : kids) {
          std::vector<Entry> next(width);
          const int cap = static_cast<int>(capacity(kid));
          const Node& kn = nodes_[static_cast<std::size_t>(kid)];
          for (int m = i; m <= reach; ++m)
            for (int s = 0; s < 2; ++s) {
              const Entry& base = cur[static_cast<std::size_t>(m * 2 + s)];
              if (!base.valid()) continue;
              for (int m2 = m; m2 <= std::min(n_, m + cap); ++m2)
                for (int s2 = 0; s2 < 2; ++s2) {
                  const int idx = index(m, m2, s, s2);
                  const Entry& ke = kn.table[static_cast<std::size_t>(idx)];
                  if (!ke.valid()) continue;
                  Entry c;
                  c.cost = base.cost + ke.cost;
                  c.fit = base.fit + ke.fit;
                  c.gram = base.gram + ke.gram;
                  c.leaves = base.leaves + ke.leaves;
                  c.tuplets = base.tuplets + ke.tuplets;
                  c.kids = base.kids;
                  c.kids.push_back({kid, idx});
                  offer(next[static_cast<std::size_t>(m2 * 2 + s2)], std::move(c));
                }
            }
          reach = std::min(n_, reach + cap);
          cur = std::move(next);
        }
        for (int j = i; j <= n_; ++j)
          for (int s_out = 0; s_out < 2; ++s_out)
            if (cur[static_cast<std::size_t>(j * 2 + s_out)].valid())
              emit(i, s_in, j, s_out, std::move(cur[static_cast<std::size_t>(j * 2 + s_out)]));
      }
    }
  }

  void offer(Entry& slot, Entry cand) {
    if (better(cand, slot)) slot = std::move(cand);
  }

  bool better(const Entry& a, const Entry& b) const {
    if (!a.valid()) return false;
    if (!b.valid()) return true;
    if (a.cost < b.cost - kTieEps) return true;
    if (a.cost > b.cost + kTieEps) return false;
    if (a.leaves != b.leaves) return a.leaves < b.leaves;
    if (a.tuplets != b.tuplets) return a.tuplets < b.tuplets;
    if (a.rule != b.rule) return a.rule < b.rule;
    std::vector<int> sa, sb;
    sequence(a, sa);
    sequence(b, sb);
    return sa < sb;
  }

  void sequence(const Entry& e, std::vector<int>& out) const {
    if (e.rule >= 0) out.push_back(e.rule);
    for (const Ref& k : e.kids) sequence(entry(k), out);
  }

  RhythmTree build(const Entry& e) const {
    if (e.rule >= 0 && g_.rules()[static_cast<std::size_t>(e.rule)].is_leaf()) {
      const LeafKind kind = g_.rules()[static_cast<std::size_t>(e.rule)].leaf;
      return RhythmTree::leaf(kind, kind == LeafKind::Note ? pitch_[static_cast<std::size_t>(e.host)]
                                                           : -1);
    }
    std::vector<RhythmTree> kids;
    for (const Ref& k : e.kids) kids.push_back(build(entry(k)));
    if (kids.size() == 1) return std::move(kids.front());
    return RhythmTree::split(std::move(kids));
  }

  int n() const { return n_; }
  Node& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  const RhythmGrammar& g_;
  const QuantConfig& cfg_;
  std::vector<double> x_;
  std::vector<int> pitch_;
  SoundProfile sound_;
  int n_;
  std::vector<Node> nodes_;
  std::map<std::tuple<std::string, std::int64_t, std::int64_t, std::int64_t, std::int64_t, int, bool>,
           int>
      ids_;
};

void fill_continuations(RhythmTree& t, int& current) {
  if (t.is_leaf()) {
    if (t.kind == LeafKind::Note) current = t.pitch;
    if (t.kind == LeafKind::Continuation) t.pitch = current;
    return;
  }
  for (RhythmTree& c : t.children) fill_continuations(c, current);
}

int measure_beats(const MeasureInput& in) {
  const int bpb = in.time_signature.numerator;
  if (in.pickup_beats < 0 || in.pickup_beats > bpb)
    throw Error(ErrorKind::Validation, "pickup length must lie in [0, beats per bar]");
  return in.pickup_beats > 0 ? in.pickup_beats : bpb;
}

SoundProfile profile_of(const MeasureInput& in, double beats) {
  std::vector<std::pair<double, bool>> events;
  for (const MeasureOnset& o : in.onsets) events.emplace_back(o.position * beats, true);
  for (double r : in.releases) events.emplace_back(r * beats, false);
  return SoundProfile(in.carried_pitch.has_value(), std::move(events), beats);
}

}  // namespace

MeasureParse quantize_measure(const MeasureInput& input, const RhythmGrammar& grammar,
                              const QuantConfig& config) {
  config.validate();
  const int beats = measure_beats(input);
  const int bpb = input.time_signature.numerator;
  for (std::size_t i = 1; i < input.onsets.size(); ++i)
    if (!(input.onsets[i].position > input.onsets[i - 1].position))
      throw Error(ErrorKind::Validation, "measure onsets must be strictly increasing");

  std::vector<double> x;
  std::vector<int> pitch;
  for (const MeasureOnset& o : input.onsets) {
    x.push_back(o.position * beats);
    pitch.push_back(o.pitch);
  }
  MeasureParser p(grammar, config, std::move(x), std::move(pitch), profile_of(input, beats));
  const std::string& start = grammar.start_symbol(input.time_signature);

  std::vector<int> roots;
  if (input.pickup_beats > 0 && input.pickup_beats < bpb) {
    const GrammarRule* bar = nullptr;
    for (std::size_t ri : grammar.rules_for(start))
      if (grammar.rules()[ri].arity() == bpb && !std::isinf(grammar.rules()[ri].weight)) {
        bar = &grammar.rules()[ri];
        break;
      }
    if (!bar)
      throw Error(ErrorKind::Validation,
                  "start symbol '" + start + "' has no split into " + std::to_string(bpb) +
                      " beats for a pickup");
    for (int k = bpb - beats; k < bpb; ++k)
      roots.push_back(p.node(bar->children[static_cast<std::size_t>(k)],
                             Fraction(k - (bpb - beats)), Fraction(1), 1, false));
  } else {
    roots.push_back(p.node(start, Fraction(0), Fraction(beats), 0, true));
  }

  std::size_t capacity = 0;
  for (int r : roots) capacity += p.capacity(r);
  const auto n = static_cast<std::size_t>(p.n());
  if (n > capacity)
    throw Error(ErrorKind::Capacity, std::to_string(n) + " onsets exceed the grammar's " +
                                         std::to_string(capacity) + " leaves for this measure");

  for (int r : roots) p.solve(r);
  const int s_in = input.carried_pitch ? 1 : 0;
  Entry best;
  if (roots.size() == 1) {
    for (int s_out = 0; s_out < 2; ++s_out) {
      const Entry& e = p.at(roots[0]).table[static_cast<std::size_t>(p.index(0, p.n(), s_in, s_out))];
      if (p.better(e, best)) best = e;
    }
  } else {
    p.fold(roots, [&](int i, int si, int j, int, Entry e) {
      if (i == 0 && si == s_in && j == p.n()) p.offer(best, std::move(e));
    });
  }
  if (!best.valid())
    throw Error(ErrorKind::Parse, "no derivation of '" + start + "' fits " + std::to_string(n) +
                                      " onsets");

  MeasureParse out;
  out.tree = p.build(best);
  int current = input.carried_pitch.value_or(-1);
  fill_continuations(out.tree, current);
  out.cost = best.cost;
  out.data_fit = best.fit;
  out.grammar_cost = best.gram;
  out.leaves = static_cast<std::size_t>(best.leaves);
  out.tuplets = static_cast<std::size_t>(best.tuplets);
  return out;
}

namespace {

RhythmTree grid_tree(const std::vector<RhythmTree>& cells, int beats, int resolution) {
  if (cells.size() == 1) return cells.front();
  if (resolution == 1 || beats == 1) return RhythmTree::split(cells);
  std::vector<RhythmTree> beat_nodes;
  for (int b = 0; b < beats; ++b)
    beat_nodes.push_back(RhythmTree::split(
        std::vector<RhythmTree>(cells.begin() + b * resolution, cells.begin() + (b + 1) * resolution)));
  return RhythmTree::split(std::move(beat_nodes));
}

RhythmTree tidy(const RhythmTree& t, int beats) {
  const Fraction len(beats);
  try {
    return canonical_tree(timeline(t, len), len, beats >= 2 ? beats : 0, 16);
  } catch (const Error&) {
    return t;  // subdivisions other than 2 and 3 stay as a flat grid
  }
}

}  // namespace

RhythmTree fallback_measure(const MeasureInput& input, int resolution, double rest_threshold) {
  if (resolution < 1) throw Error(ErrorKind::Validation, "resolution must be >= 1");
  const int beats = measure_beats(input);
  const std::size_t n = input.onsets.size();
  while (n > static_cast<std::size_t>(beats * resolution)) resolution *= 2;
  const int cells = beats * resolution;

  std::vector<int> slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = input.onsets[i].position * cells;
    int c = std::clamp(static_cast<int>(std::floor(x + 0.5)), 0, cells - 1);
    if (i > 0) c = std::max(c, slot[i - 1] + 1);
    slot[i] = c;
  }
  for (std::size_t k = n; k-- > 0;) {
    const int limit = cells - 1 - static_cast<int>(n - 1 - k);
    slot[k] = std::min(slot[k], limit);
  }

  const SoundProfile sound = profile_of(input, static_cast<double>(beats));
  const double cell_len = 1.0 / resolution;
  std::vector<RhythmTree> leaves;
  bool sounding = input.carried_pitch.has_value();
  int pitch = input.carried_pitch.value_or(-1);
  std::size_t next = 0;
  for (int c = 0; c < cells; ++c) {
    const double a = c * cell_len;
    if (next < n && slot[next] == c) {
      pitch = input.onsets[next].pitch;
      leaves.push_back(RhythmTree::leaf(LeafKind::Note, pitch));
      sounding = true;
      ++next;
    } else if (sounding && sound.silent(a, a + cell_len) <= rest_threshold * cell_len) {
      leaves.push_back(RhythmTree::leaf(LeafKind::Continuation, pitch));
    } else {
      leaves.push_back(RhythmTree::leaf(LeafKind::Rest));
      sounding = false;
    }
  }
  return tidy(grid_tree(leaves, beats, resolution), beats);
}

namespace {

struct Segment {
  double start;
  int beats;
  bool pickup;
};

double snap(double u) { return std::round(u * 1e9) / 1e9; }

std::vector<Segment> segment_bars(double first_onset, double last_release, int bpb) {
  std::vector<Segment> out;
  double s = 0.0;
  if (first_onset < 0.0) {
    const double first_beat = std::floor(first_onset);
    const double bar = std::floor(first_beat / bpb) * bpb;
    s = bar;
    if (first_beat > bar) {
      out.push_back({first_beat, static_cast<int>(bar + bpb - first_beat), true});
      s = bar + bpb;
    }
  }
  while (out.empty() || s < last_release - 1e-6) {
    out.push_back({s, bpb, false});
    s += bpb;
  }
  return out;
}

std::optional<int> sounding_pitch_at_end(const RhythmTree& t) {
  const RhythmTree* cur = &t;
  while (!cur->is_leaf()) cur = &cur->children.back();
  if (cur->kind == LeafKind::Rest) return std::nullopt;
  return cur->pitch;
}

bool has_sound(const RhythmTree& t) {
  if (t.is_leaf()) return t.kind != LeafKind::Rest;
  return std::any_of(t.children.begin(), t.children.end(), has_sound);
}

std::string measure_label(const std::vector<Segment>& segs, std::size_t k) {
  const bool pickup = !segs.empty() && segs[0].pickup;
  return "measure " + std::to_string(pickup ? k : k + 1);
}

double grid_tempo(const BeatGrid& grid) {
  const auto& b = grid.beats();
  const double ibi = (b.back() - b.front()) / static_cast<double>(b.size() - 1);
  return std::round(60.0 / ibi);
}

struct Timing {
  std::vector<double> on;
  std::vector<double> off;
  std::vector<int> pitch;
};

Timing beat_timing(const Performance& mono, const BeatGrid& grid) {
  Timing t;
  for (const NoteEvent& n : mono.notes()) {
    t.on.push_back(snap(grid.beat_position(n.onset) - grid.phase()));
    t.off.push_back(snap(grid.beat_position(n.offset()) - grid.phase()));
    t.pitch.push_back(n.pitch);
  }
  return t;
}

TimeSignature meter_of(const BeatGrid& grid) {
  const TimeSignature ts = grid.time_signature();
  if (ts.numerator != grid.beats_per_bar())
    throw Error(ErrorKind::Validation, "time signature " + ts.str() + " disagrees with " +
                                           std::to_string(grid.beats_per_bar()) + " beats per bar");
  return ts;
}

}  // namespace

ScoreModel quantize_performance(const Performance& perf, const BeatGrid& grid,
                                const RhythmGrammar& grammar, const QuantConfig& config,
                                const QuantizeOptions& options, std::vector<std::string>* warnings,
                                QuantizeStats* stats) {
  if (stats) *stats = {};
  if (perf.empty()) throw Error(ErrorKind::EmptyInput, "performance has no notes");
  config.validate();
  const TimeSignature ts = meter_of(grid);
  const int bpb = ts.numerator;
  const Performance mono = enforce_monophony(perf);
  const Timing tm = beat_timing(mono, grid);
  const std::size_t count = tm.on.size();
  const std::vector<Segment> segs =
      segment_bars(tm.on.front(), *std::max_element(tm.off.begin(), tm.off.end()), bpb);

  std::vector<std::size_t> owner(count);
  for (std::size_t i = 0, k = 0; i < count; ++i) {
    while (k + 1 < segs.size() && tm.on[i] >= segs[k].start + segs[k].beats) ++k;
    owner[i] = k;
  }

  struct Attempt {
    RhythmTree tree;
    double cost = kInf;
    std::optional<Error> error;
  };

  const auto make_input = [&](std::size_t k, const std::vector<std::size_t>& members,
                              std::optional<int> carried, double drop_from) {
    const Segment& sg = segs[k];
    const double len = sg.beats;
    const double end = sg.start + len;
    MeasureInput in;
    in.time_signature = ts;
    in.pickup_beats = sg.pickup ? sg.beats : 0;
    in.carried_pitch = carried;
    for (std::size_t i : members) in.onsets.push_back({(tm.on[i] - sg.start) / len, tm.pitch[i]});
    bool sounding = false;
    for (std::size_t i = 0; i < count; ++i) {
      if (tm.on[i] <= sg.start && tm.off[i] > sg.start + 1e-9) sounding = true;
      if (tm.off[i] > sg.start && tm.off[i] <= end + 1e-9 && tm.off[i] < drop_from - 1e-9)
        in.releases.push_back((tm.off[i] - sg.start) / len);
    }
    if (!sounding) in.releases.push_back(0.0);
    return in;
  };

  const auto attempt = [&](const MeasureInput& in) {
    Attempt a;
    try {
      MeasureParse mp = quantize_measure(in, grammar, config);
      a.tree = std::move(mp.tree);
      a.cost = mp.cost;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Capacity && e.kind() != ErrorKind::Parse) throw;
      a.error = e;
    }
    return a;
  };

  const auto members_of = [&](std::size_t k) {
    std::vector<std::size_t> m;
    for (std::size_t i = 0; i < count; ++i)
      if (owner[i] == k) m.push_back(i);
    return m;
  };

  std::vector<RhythmTree> trees;
  std::optional<int> carried;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const std::string label = measure_label(segs, k);
    try {
      std::vector<std::size_t> members = members_of(k);
      const double end = segs[k].start + segs[k].beats;
      MeasureInput chosen = make_input(k, members, carried, kInf);
      Attempt result;
      bool decided = false;

      if (!members.empty() && k + 1 < segs.size() && tm.on[members.back()] >= end - 0.5) {
        const std::size_t q = members.back();
        std::vector<std::size_t> without(members.begin(), members.end() - 1);
        std::vector<std::size_t> next_members = members_of(k + 1);

        Attempt keep = attempt(chosen);
        double cost_keep = keep.cost;
        if (keep.cost < kInf) {
          const Attempt after = attempt(make_input(k + 1, next_members, sounding_pitch_at_end(keep.tree), kInf));
          cost_keep += after.cost;
        }

        const MeasureInput moved_in = make_input(k, without, carried, tm.on[q]);
        Attempt moved = attempt(moved_in);
        double cost_moved = moved.cost;
        if (moved.cost < kInf) {
          next_members.insert(next_members.begin(), q);
          const Attempt after =
              attempt(make_input(k + 1, next_members, sounding_pitch_at_end(moved.tree), kInf));
          cost_moved += after.cost;
        }

        if (cost_moved < cost_keep - kTieEps) {
          owner[q] = k + 1;
          result = std::move(moved);
          chosen = moved_in;
        } else {
          result = std::move(keep);
        }
        decided = result.cost < kInf;
      }
      if (!decided) result = attempt(chosen);

      if (result.error) {
        if (!options.fallback_on_failure) throw *result.error;
        result.tree = fallback_measure(chosen, options.fallback_resolution, config.rest_threshold);
        if (warnings)
          warnings->push_back(label + ": " + result.error->what() + "; grid fallback used");
        if (stats) ++stats->fallback_measures;
      } else if (stats) {
        stats->cost += result.cost;
      }
      carried = sounding_pitch_at_end(result.tree);
      trees.push_back(std::move(result.tree));
    } catch (const Error& e) {
      throw Error(e.kind(), label + ": " + e.what());
    }
  }

  ScoreModel score;
  score.time_signature = ts;
  score.tempo_bpm = grid_tempo(grid);
  if (segs[0].pickup && has_sound(trees[0])) {
    score.anacrusis_beats = Fraction(segs[0].beats);
  } else if (segs[0].pickup) {
    trees.erase(trees.begin());
  }
  score.measures = std::move(trees);
  return score;
}

ScoreModel fallback_quantize(const Performance& perf, const BeatGrid& grid, int resolution) {
  if (resolution < 1) throw Error(ErrorKind::Validation, "resolution must be >= 1");
  if (perf.empty()) throw Error(ErrorKind::EmptyInput, "performance has no notes");
  const TimeSignature ts = meter_of(grid);
  const int bpb = ts.numerator;
  const Performance mono = enforce_monophony(perf);
  const Timing tm = beat_timing(mono, grid);
  const std::size_t count = tm.on.size();

  std::vector<long long> slot(count);
  for (std::size_t i = 0; i < count; ++i) {
    long long c = static_cast<long long>(std::floor(tm.on[i] * resolution + 0.5));
    if (i > 0) c = std::max(c, slot[i - 1] + 1);
    slot[i] = c;
  }
  const double cell = 1.0 / resolution;
  double last = *std::max_element(tm.off.begin(), tm.off.end());
  last = std::max(last, static_cast<double>(slot.back() + 1) * cell);
  const std::vector<Segment> segs =
      segment_bars(static_cast<double>(slot.front()) * cell, last, bpb);

  const auto silent_in = [&](double a, double b) {
    double sound = 0.0;
    for (std::size_t i = 0; i < count; ++i)
      sound += std::max(0.0, std::min(b, tm.off[i]) - std::max(a, tm.on[i]));
    return (b - a) - sound;
  };

  std::vector<RhythmTree> trees;
  bool sounding = false;
  int pitch = -1;
  std::size_t next = 0;
  for (const Segment& sg : segs) {
    const auto first = static_cast<long long>(std::llround(sg.start * resolution));
    std::vector<RhythmTree> leaves;
    for (long long c = first; c < first + static_cast<long long>(sg.beats) * resolution; ++c) {
      const double a = static_cast<double>(c) * cell;
      if (next < count && slot[next] == c) {
        pitch = tm.pitch[next++];
        sounding = true;
        leaves.push_back(RhythmTree::leaf(LeafKind::Note, pitch));
      } else if (sounding && silent_in(a, a + cell) <= 0.5 * cell) {
        leaves.push_back(RhythmTree::leaf(LeafKind::Continuation, pitch));
      } else {
        sounding = false;
        leaves.push_back(RhythmTree::leaf(LeafKind::Rest));
      }
    }
    trees.push_back(tidy(grid_tree(leaves, sg.beats, resolution), sg.beats));
  }

  ScoreModel score;
  score.time_signature = ts;
  score.tempo_bpm = grid_tempo(grid);
  if (segs[0].pickup) score.anacrusis_beats = Fraction(segs[0].beats);
  score.measures = std::move(trees);
  return score;
}

}  // namespace rhythmiq
