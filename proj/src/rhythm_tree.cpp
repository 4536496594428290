#include "rhythmiq/rhythm_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rhythmiq/error.hpp"

namespace rhythmiq {

std::string_view to_string(LeafKind kind) {
  switch (kind) {
    case LeafKind::Note: return "note";
    case LeafKind::Rest: return "rest";
    case LeafKind::Continuation: return "continuation";
  }
  return "rest";
}

std::optional<LeafKind> leaf_kind_from_string(std::string_view text) {
  if (text == "note") return LeafKind::Note;
  if (text == "rest") return LeafKind::Rest;
  if (text == "continuation") return LeafKind::Continuation;
  return std::nullopt;
}

RhythmTree RhythmTree::leaf(LeafKind kind, int pitch) {
  RhythmTree t;
  t.kind = kind;
  t.pitch = kind == LeafKind::Rest ? -1 : pitch;
  return t;
}

RhythmTree RhythmTree::split(std::vector<RhythmTree> children) {
  if (children.size() < 2) throw Error(ErrorKind::Validation, "a split needs at least 2 children");
  RhythmTree t;
  t.children = std::move(children);
  return t;
}

std::size_t RhythmTree::leaf_count() const {
  if (is_leaf()) return 1;
  std::size_t n = 0;
  for (const RhythmTree& c : children) n += c.leaf_count();
  return n;
}

std::size_t RhythmTree::depth() const {
  std::size_t d = 0;
  for (const RhythmTree& c : children) d = std::max(d, c.depth() + 1);
  return d;
}

namespace {

void collect_leaves(const RhythmTree& t, Fraction start, Fraction length,
                    std::vector<TimedLeaf>& out) {
  if (t.is_leaf()) {
    out.push_back({start, length, t.kind, t.pitch});
    return;
  }
  const Fraction part = length / Fraction(static_cast<std::int64_t>(t.children.size()));
  for (std::size_t i = 0; i < t.children.size(); ++i)
    collect_leaves(t.children[i], start + part * Fraction(static_cast<std::int64_t>(i)), part,
                   out);
}

bool fraction_is_power_of_two(Fraction f) {
  return (f.num() == 1 && is_power_of_two(f.den())) || (f.den() == 1 && is_power_of_two(f.num()));
}

}  // namespace

std::vector<TimedLeaf> timed_leaves(const RhythmTree& tree, Fraction length) {
  std::vector<TimedLeaf> out;
  collect_leaves(tree, Fraction(0), length, out);
  return out;
}

std::vector<TimelineEvent> timeline(const RhythmTree& tree, Fraction length) {
  std::vector<TimelineEvent> out;
  for (const TimedLeaf& l : timed_leaves(tree, length)) {
    switch (l.kind) {
      case LeafKind::Note:
        out.push_back({l.start, LeafKind::Note, l.pitch});
        break;
      case LeafKind::Rest:
        if (out.empty() || out.back().kind != LeafKind::Rest)
          out.push_back({l.start, LeafKind::Rest, -1});
        break;
      case LeafKind::Continuation:
        if (out.empty()) out.push_back({l.start, LeafKind::Continuation, l.pitch});
        break;
    }
  }
  return out;
}

namespace {

struct Decomposer {
  const std::vector<TimelineEvent>& events;
  int max_depth;

  RhythmTree label_at(Fraction a) const {
    const TimelineEvent* last = nullptr;
    for (const TimelineEvent& e : events) {
      if (e.position > a) break;
      last = &e;
    }
    if (!last) return RhythmTree::leaf(LeafKind::Rest);
    if (last->position == a) return RhythmTree::leaf(last->kind, last->pitch);
    if (last->kind == LeafKind::Rest) return RhythmTree::leaf(LeafKind::Rest);
    return RhythmTree::leaf(LeafKind::Continuation, last->pitch);
  }

  RhythmTree run(Fraction a, Fraction len, int depth, int forced_arity) const {
    std::int64_t lcm = 1;
    bool inside = false;
    for (const TimelineEvent& e : events) {
      if (e.position <= a || e.position >= a + len) continue;
      inside = true;
      lcm = std::lcm(lcm, ((e.position - a) / len).den());
    }
    if (!inside) return label_at(a);
    int arity = forced_arity;
    if (arity < 2) {
      if (lcm % 3 == 0) {
        arity = 3;
      } else if (is_power_of_two(lcm)) {
        arity = 2;
      } else {
        throw Error(ErrorKind::Decomposition,
                    "position " + (a + len).str() + " needs a subdivision other than 2 or 3");
      }
    }
    if (depth + 1 > max_depth)
      throw Error(ErrorKind::Decomposition,
                  "rhythm needs more than " + std::to_string(max_depth) + " subdivision levels");
    std::vector<RhythmTree> kids;
    const Fraction part = len / Fraction(arity);
    for (int i = 0; i < arity; ++i) kids.push_back(run(a + part * Fraction(i), part, depth + 1, 0));
    return RhythmTree::split(std::move(kids));
  }
};

}  // namespace

RhythmTree canonical_tree(const std::vector<TimelineEvent>& events, Fraction length,
                          int root_arity, int max_depth) {
  const Decomposer d{events, max_depth};
  return d.run(Fraction(0), length, 0, root_arity);
}

Fraction ScoreModel::measure_beats(std::size_t index) const {
  if (index == 0 && has_pickup()) return anacrusis_beats;
  return Fraction(time_signature.numerator);
}

Fraction ScoreModel::measure_start(std::size_t index) const {
  if (index == 0) return Fraction(0);
  const Fraction full(time_signature.numerator);
  if (has_pickup()) return anacrusis_beats + full * Fraction(static_cast<std::int64_t>(index - 1));
  return full * Fraction(static_cast<std::int64_t>(index));
}

Fraction ScoreModel::measure_length(std::size_t index) const {
  return measure_beats(index) * beat_length();
}

bool operator==(const ScoreModel& a, const ScoreModel& b) {
  if (a.time_signature != b.time_signature || a.anacrusis_beats != b.anacrusis_beats ||
      std::lround(a.tempo_bpm) != std::lround(b.tempo_bpm) ||
      a.measures.size() != b.measures.size())
    return false;
  for (std::size_t i = 0; i < a.measures.size(); ++i)
    if (timeline(a.measures[i], a.measure_beats(i)) != timeline(b.measures[i], b.measure_beats(i)))
      return false;
  return true;
}

ScoreModel canonicalize(const ScoreModel& score, int max_depth) {
  ScoreModel out = score;
  for (std::size_t i = 0; i < out.measures.size(); ++i) {
    const Fraction beats = score.measure_beats(i);
    const int arity = beats.is_integer() && beats.num() >= 2 ? static_cast<int>(beats.num()) : 0;
    try {
      out.measures[i] = canonical_tree(timeline(score.measures[i], beats), beats, arity, max_depth);
    } catch (const Error& e) {
      throw Error(e.kind(), "measure " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

void validate_score(const ScoreModel& score) {
  bool sounding = false;
  for (std::size_t i = 0; i < score.measures.size(); ++i) {
    for (const TimedLeaf& l : timed_leaves(score.measures[i], score.measure_beats(i))) {
      if (l.kind == LeafKind::Continuation && !sounding)
        throw Error(ErrorKind::Validation,
                    "measure " + std::to_string(i + 1) + ": continuation after silence");
      if (l.kind != LeafKind::Rest && (l.pitch < 0 || l.pitch > 127))
        throw Error(ErrorKind::Validation,
                    "measure " + std::to_string(i + 1) + ": pitch out of range");
      sounding = l.kind != LeafKind::Rest;
    }
  }
}

std::vector<ScoreNote> score_notes(const ScoreModel& score) {
  std::vector<ScoreNote> out;
  bool open = false;
  for (std::size_t i = 0; i < score.measures.size(); ++i) {
    const Fraction offset = score.measure_start(i);
    for (const TimelineEvent& e : timeline(score.measures[i], score.measure_beats(i))) {
      const Fraction at = offset + e.position;
      if (e.kind == LeafKind::Continuation) continue;
      if (open) out.back().duration = at - out.back().onset;
      open = e.kind == LeafKind::Note;
      if (open) out.push_back({at, Fraction(0), e.pitch});
    }
  }
  if (open) {
    const std::size_t last = score.measures.size() - 1;
    out.back().duration = score.measure_start(last) + score.measure_beats(last) - out.back().onset;
  }
  return out;
}

Performance render_performance(const ScoreModel& score, double start_seconds) {
  if (!(score.tempo_bpm > 0.0)) throw Error(ErrorKind::Validation, "score tempo must be > 0");
  const double sec_per_beat = 60.0 / score.tempo_bpm;
  std::vector<NoteEvent> notes;
  for (const ScoreNote& n : score_notes(score))
    notes.push_back({start_seconds + n.onset.to_double() * sec_per_beat,
                     n.duration.to_double() * sec_per_beat, n.pitch, 80});
  return Performance(std::move(notes));
}

std::optional<WrittenDuration> written_duration(Fraction d) {
  if (d <= Fraction(0)) return std::nullopt;
  std::int64_t odd = d.den();
  while (odd % 2 == 0) odd /= 2;
  WrittenDuration w;
  Fraction written = d;
  if (odd > 1) {
    std::int64_t normal = 1;
    while (normal * 2 < odd) normal *= 2;
    w.actual = static_cast<int>(odd);
    w.normal = static_cast<int>(normal);
    written = d * Fraction(odd, normal);
  }
  const Fraction shortest(1, 1024);
  if (fraction_is_power_of_two(written) && written <= Fraction(2) && written >= shortest) {
    w.type = written;
    return w;
  }
  const Fraction undotted = written * Fraction(2, 3);
  if (fraction_is_power_of_two(undotted) && undotted <= Fraction(2) && undotted >= shortest) {
    w.type = undotted;
    w.dots = 1;
    return w;
  }
  return std::nullopt;
}

namespace {

struct GroupedLeaf {
  TimedLeaf leaf;
  int group;
};

void collect_grouped(const RhythmTree& t, Fraction start, Fraction length, int group,
                     int& next_group, std::vector<GroupedLeaf>& out) {
  if (t.is_leaf()) {
    out.push_back({{start, length, t.kind, t.pitch}, group});
    return;
  }
  const int mine = fraction_is_power_of_two(length) ? next_group++ : group;
  const Fraction part = length / Fraction(static_cast<std::int64_t>(t.children.size()));
  for (std::size_t i = 0; i < t.children.size(); ++i)
    collect_grouped(t.children[i], start + part * Fraction(static_cast<std::int64_t>(i)), part,
                    mine, next_group, out);
}

bool is_tuplet_value(Fraction d) {
  std::int64_t den = d.den();
  while (den % 2 == 0) den /= 2;
  return den > 1;
}

// Largest writable value not above `remaining` that keeps its tuplet ratio.
Fraction largest_piece(Fraction remaining) {
  const auto w = written_duration(remaining);
  if (w) return remaining;
  std::int64_t odd = remaining.den();
  while (odd % 2 == 0) odd /= 2;
  Fraction ratio(1);
  if (odd > 1) {
    std::int64_t normal = 1;
    while (normal * 2 < odd) normal *= 2;
    ratio = Fraction(normal, odd);
  }
  for (Fraction t(2); t >= Fraction(1, 1024); t = t / Fraction(2)) {
    if (t * Fraction(3, 2) * ratio <= remaining) return t * Fraction(3, 2) * ratio;
    if (t * ratio <= remaining) return t * ratio;
  }
  throw Error(ErrorKind::Validation, "duration " + remaining.str() + " cannot be written");
}

struct PendingEvent {
  Fraction duration;
  bool rest;
  int pitch;
  int group;
  bool tie_stop;
};

}  // namespace

std::vector<NotatedEvent> tree_to_notation(const RhythmTree& tree, Fraction measure_length,
                                           bool tied_into_next) {
  std::vector<GroupedLeaf> leaves;
  int next_group = 1;
  collect_grouped(tree, Fraction(0), measure_length, 0, next_group, leaves);
  // The root always bounds a group even when its length is not a power of two.
  for (GroupedLeaf& g : leaves)
    if (g.group == 0) g.group = -1;

  if (leaves.size() == 1 && leaves[0].leaf.kind == LeafKind::Rest) {
    NotatedEvent e;
    e.duration = measure_length;
    e.rest = true;
    e.measure_rest = true;
    const auto w = written_duration(measure_length);
    e.type = w && w->actual == 1 ? w->type : Fraction(1);
    e.dots = w && w->actual == 1 ? w->dots : 0;
    return {e};
  }

  std::vector<PendingEvent> pending;
  for (std::size_t i = 0; i < leaves.size();) {
    const TimedLeaf& l = leaves[i].leaf;
    if (l.kind == LeafKind::Rest) {
      pending.push_back({l.duration, true, -1, leaves[i].group, false});
      ++i;
      continue;
    }
    Fraction dur = l.duration;
    bool any_tuplet = is_tuplet_value(l.duration);
    bool same_group = true;
    std::size_t j = i + 1;
    for (; j < leaves.size() && leaves[j].leaf.kind == LeafKind::Continuation; ++j) {
      const Fraction joined = dur + leaves[j].leaf.duration;
      const bool tuplet = any_tuplet || is_tuplet_value(leaves[j].leaf.duration);
      const bool group_ok = same_group && leaves[j].group == leaves[i].group;
      const auto w = written_duration(joined);
      if (!w) break;
      if (w->actual != 1 && !group_ok) break;
      if (w->actual == 1 && tuplet && !group_ok) break;
      dur = joined;
      any_tuplet = tuplet;
      same_group = group_ok;
    }
    pending.push_back({dur, false, l.pitch, leaves[i].group, l.kind == LeafKind::Continuation});
    i = j;
  }

  std::vector<NotatedEvent> out;
  std::vector<int> groups;
  for (const PendingEvent& p : pending) {
    Fraction remaining = p.duration;
    bool first = true;
    while (remaining > Fraction(0)) {
      const Fraction piece = largest_piece(remaining);
      const auto w = written_duration(piece);
      NotatedEvent e;
      e.duration = piece;
      e.rest = p.rest;
      e.pitch = p.pitch;
      e.type = w->type;
      e.dots = w->dots;
      e.tuplet_actual = w->actual;
      e.tuplet_normal = w->normal;
      e.tie_stop = !p.rest && (first ? p.tie_stop : true);
      remaining -= piece;
      e.tie_start = !p.rest && remaining > Fraction(0);
      out.push_back(e);
      groups.push_back(p.group);
      first = false;
    }
  }
  for (std::size_t i = 0; i + 1 < out.size(); ++i)
    if (!out[i].rest && !out[i + 1].rest && out[i + 1].tie_stop) out[i].tie_start = true;
  if (tied_into_next && !out.empty() && !out.back().rest) out.back().tie_start = true;

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out[i].in_tuplet()) continue;
    const auto same = [&](std::size_t k) {
      return out[k].in_tuplet() && groups[k] == groups[i] &&
             out[k].tuplet_actual == out[i].tuplet_actual;
    };
    out[i].tuplet_start = i == 0 || !same(i - 1);
    out[i].tuplet_stop = i + 1 == out.size() || !same(i + 1);
  }
  return out;
}

}  // namespace rhythmiq
