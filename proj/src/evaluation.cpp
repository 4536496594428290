#include "rhythmiq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

#include "json.hpp"

#include "rhythmiq/error.hpp"
#include "rhythmiq/tempo.hpp"

namespace rhythmiq {

MatchScore match_score(std::size_t matched, std::size_t reference, std::size_t estimate) {
  MatchScore s;
  s.matched = matched;
  s.reference = reference;
  s.estimate = estimate;
  s.precision = estimate ? 100.0 * static_cast<double>(matched) / static_cast<double>(estimate) : 0.0;
  s.recall = reference ? 100.0 * static_cast<double>(matched) / static_cast<double>(reference) : 0.0;
  s.f = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::size_t maximum_matching(std::size_t left, std::size_t right,
                             const std::vector<std::vector<std::size_t>>& adjacency) {
  std::vector<std::size_t> owner(right, left);
  std::vector<char> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t u) {
    for (std::size_t v : adjacency[u]) {
      if (seen[v]) continue;
      seen[v] = 1;
      if (owner[v] == left || augment(owner[v])) {
        owner[v] = u;
        return true;
      }
    }
    return false;
  };
  std::size_t matched = 0;
  for (std::size_t u = 0; u < left; ++u) {
    seen.assign(right, 0);
    if (augment(u)) ++matched;
  }
  return matched;
}

MatchScore note_metrics(const Performance& ref, const Performance& est, double onset_tol) {
  if (!(onset_tol > 0.0)) throw Error(ErrorKind::Validation, "onset tolerance must be positive");
  const auto& r = ref.notes();
  const auto& e = est.notes();
  std::vector<std::vector<std::size_t>> adjacency(r.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < e.size(); ++j)
      if (r[i].pitch == e[j].pitch && std::abs(r[i].onset - e[j].onset) <= onset_tol + 1e-9)
        adjacency[i].push_back(j);
  return match_score(maximum_matching(r.size(), e.size(), adjacency), r.size(), e.size());
}

namespace {

void require_increasing(const std::vector<double>& times, const char* what) {
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw Error(ErrorKind::Validation, std::string(what) + " downbeats are not strictly increasing");
}

}  // namespace

MatchScore downbeat_fmeasure(const std::vector<double>& ref, const std::vector<double>& est,
                             double tol) {
  if (!(tol > 0.0)) throw Error(ErrorKind::Validation, "downbeat tolerance must be positive");
  require_increasing(ref, "reference");
  require_increasing(est, "estimated");
  std::size_t i = 0, j = 0, matched = 0;
  while (i < ref.size() && j < est.size()) {
    const double d = est[j] - ref[i];
    if (std::abs(d) <= tol + 1e-9) {
      ++matched;
      ++i;
      ++j;
    } else if (d < 0) {
      ++j;
    } else {
      ++i;
    }
  }
  return match_score(matched, ref.size(), est.size());
}

RotationScore best_rotation_fmeasure(const std::vector<double>& ref, const BeatGrid& grid,
                                     double tol) {
  RotationScore best;
  bool first = true;
  for (const BeatGrid& rotated : enumerate_rotations(grid)) {
    const MatchScore s = downbeat_fmeasure(ref, rotated.downbeats(), tol);
    best.per_phase.push_back(s.f);
    if (first || s.f > best.score.f + 1e-12) {
      best.score = s;
      best.phase = rotated.phase();
      first = false;
    }
  }
  return best;
}

namespace {

struct MeasureEvents {
  std::vector<std::pair<Fraction, int>> notes;
  std::vector<Fraction> rests;
};

MeasureEvents measure_events(const ScoreModel& score, std::size_t index) {
  MeasureEvents out;
  for (const TimelineEvent& e : timeline(score.measures[index], score.measure_beats(index))) {
    if (e.kind == LeafKind::Note) out.notes.emplace_back(e.position, e.pitch);
    if (e.kind == LeafKind::Rest) out.rests.push_back(e.position);
  }
  return out;
}

template <typename T>
std::size_t lcs(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::size_t> row(b.size() + 1, 0), prev(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::swap(row, prev);
    for (std::size_t j = 1; j <= b.size(); ++j)
      row[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], row[j - 1]);
  }
  return row[b.size()];
}

double percent(std::size_t count, std::size_t total) {
  return 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

EditRates score_edit_metrics(const ScoreModel& ref, const ScoreModel& est) {
  EditRates r;
  const std::size_t n = std::max(ref.measures.size(), est.measures.size());
  for (std::size_t i = 0; i < n; ++i) {
    const MeasureEvents a = i < ref.measures.size() ? measure_events(ref, i) : MeasureEvents{};
    const MeasureEvents b = i < est.measures.size() ? measure_events(est, i) : MeasureEvents{};
    r.reference_notes += a.notes.size();
    if (i >= ref.measures.size()) {
      r.note_deletes += b.notes.size();
      r.rest_deletes += b.rests.size();
      continue;
    }
    const std::size_t common_notes = lcs(a.notes, b.notes);
    const std::size_t common_rests = lcs(a.rests, b.rests);
    r.note_inserts += a.notes.size() - common_notes;
    r.note_deletes += b.notes.size() - common_notes;
    r.rest_inserts += a.rests.size() - common_rests;
    r.rest_deletes += b.rests.size() - common_rests;
    if (i < est.measures.size() &&
        (ref.measure_beats(i) != est.measure_beats(i) ||
         ref.time_signature.denominator != est.time_signature.denominator))
      ++r.timesig_errors;
  }
  if (r.reference_notes == 0)
    throw Error(ErrorKind::EmptyInput, "reference score has no notes to normalize by");
  r.note_insert = percent(r.note_inserts, r.reference_notes);
  r.note_delete = percent(r.note_deletes, r.reference_notes);
  r.rest_insert = percent(r.rest_inserts, r.reference_notes);
  r.rest_delete = percent(r.rest_deletes, r.reference_notes);
  r.timesig = percent(r.timesig_errors, r.reference_notes);
  return r;
}

double sdr(std::span<const double> reference, std::span<const double> estimate) {
  if (reference.empty() || reference.size() != estimate.size())
    throw Error(ErrorKind::Shape, "signal lengths differ: " + std::to_string(reference.size()) +
                                      " vs " + std::to_string(estimate.size()));
  double signal = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    signal += reference[i] * reference[i];
    const double d = reference[i] - estimate[i];
    residual += d * d;
  }
  if (signal == 0.0) throw Error(ErrorKind::UndefinedReference, "reference signal is all zeros");
  if (residual == 0.0) return kSdrCap;
  return std::min(kSdrCap, 10.0 * std::log10(signal / residual));
}

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

Audio read_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorKind::Format, "not a RIFF/WAVE file");
  int format = 0, bits = 0;
  Audio audio;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  for (std::size_t pos = 12; pos + 8 <= bytes.size();) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t size = le32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw Error(ErrorKind::Format, "truncated WAVE chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorKind::Format, "short fmt chunk");
      format = le16(chunk + 8);
      audio.channels = le16(chunk + 10);
      audio.sample_rate = static_cast<int>(le32(chunk + 12));
      bits = le16(chunk + 22);
      if (format == 0xFFFE && size >= 40) format = le16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (!format || !data) throw Error(ErrorKind::Format, "WAVE file lacks fmt or data chunk");
  if (audio.channels < 1) throw Error(ErrorKind::Format, "WAVE file has no channels");
  const bool pcm = format == 1 && (bits == 16 || bits == 24);
  const bool flt = format == 3 && bits == 32;
  if (!pcm && !flt)
    throw Error(ErrorKind::Unsupported, "WAVE encoding " + std::to_string(format) + "/" +
                                            std::to_string(bits) + " bit is not supported");
  const std::size_t width = static_cast<std::size_t>(bits / 8);
  const std::size_t frame = width * static_cast<std::size_t>(audio.channels);
  const std::size_t frames = data_size / frame;
  audio.samples.reserve(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* s = data + i * frame;
    if (flt) {
      float v;
      const std::uint32_t raw = le32(s);
      std::memcpy(&v, &raw, 4);
      audio.samples.push_back(v);
    } else if (bits == 16) {
      audio.samples.push_back(static_cast<std::int16_t>(le16(s)) / 32768.0);
    } else {
      std::int32_t v = s[0] | (s[1] << 8) | (s[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      audio.samples.push_back(v / 8388608.0);
    }
  }
  return audio;
}

std::vector<std::uint8_t> write_wav(std::span<const double> samples, int sample_rate) {
  if (sample_rate <= 0) throw Error(ErrorKind::Validation, "sample rate must be positive");
  std::vector<std::uint8_t> out;
  const auto data_size = static_cast<std::uint32_t>(samples.size() * 4);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 3);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate) * 4);
  put16(out, 4);
  put16(out, 32);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_size);
  for (double s : samples) {
    const float v = static_cast<float>(s);
    std::uint32_t raw;
    std::memcpy(&raw, &v, 4);
    put32(out, raw);
  }
  return out;
}

std::vector<MetricSummary> summarize(const std::vector<EvalReport>& reports) {
  std::vector<MetricSummary> out;
  std::vector<std::vector<double>> values;
  for (const EvalReport& r : reports) {
    for (const MetricEntry& e : r.entries) {
      auto it = std::find_if(out.begin(), out.end(),
                             [&](const MetricSummary& s) { return s.metric == e.metric; });
      if (it == out.end()) {
        out.push_back({e.metric});
        values.emplace_back();
        it = out.end() - 1;
      }
      values[static_cast<std::size_t>(it - out.begin())].push_back(e.value);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& v = values[i];
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    out[i].mean = mean;
    out[i].std = std::sqrt(sq / static_cast<double>(v.size()));
    out[i].max = *std::max_element(v.begin(), v.end());
    out[i].count = v.size();
  }
  return out;
}

namespace {

nlohmann::ordered_json entry_json(const MetricEntry& e) {
  nlohmann::ordered_json j;
  j["metric"] = e.metric;
  j["value"] = e.value;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : e.params)
    std::visit([&](const auto& x) { params[k] = x; }, v);
  j["params"] = params;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [k, v] : e.counts) counts[k] = v;
  j["counts"] = counts;
  return j;
}

nlohmann::ordered_json piece_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["piece"] = r.piece;
  j["metrics"] = nlohmann::ordered_json::array();
  for (const MetricEntry& e : r.entries) j["metrics"].push_back(entry_json(e));
  return j;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string report_json(const EvalReport& report) { return piece_json(report).dump(2) + "\n"; }

std::string batch_report_json(std::vector<EvalReport> reports) {
  std::sort(reports.begin(), reports.end(),
            [](const EvalReport& a, const EvalReport& b) { return a.piece < b.piece; });
  nlohmann::ordered_json j;
  j["pieces"] = nlohmann::ordered_json::array();
  for (const EvalReport& r : reports) j["pieces"].push_back(piece_json(r));
  j["summary"] = nlohmann::ordered_json::array();
  for (const MetricSummary& s : summarize(reports)) {
    nlohmann::ordered_json row;
    row["metric"] = s.metric;
    row["mean"] = s.mean;
    row["std"] = s.std;
    row["max"] = s.max;
    row["count"] = s.count;
    row["mean_pm_std"] = fixed2(s.mean) + " ± " + fixed2(s.std);
    j["summary"].push_back(row);
  }
  return j.dump(2) + "\n";
}

}  // namespace rhythmiq
