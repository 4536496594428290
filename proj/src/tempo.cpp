#include "rhythmiq/tempo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rhythmiq/error.hpp"

namespace rhythmiq {
namespace {

constexpr double kPreferredBpm = 120.0;
constexpr double kPreferenceOctaves = 1.0;
constexpr int kMaxRatio = 8;
constexpr double kRatioTolerance = 0.1;

double tempo_preference(double bpm) {
  const double octaves = std::log2(bpm / kPreferredBpm) / kPreferenceOctaves;
  return std::exp(-0.5 * octaves * octaves);
}

struct Accum {
  double sum = 0.0;
  int count = 0;
  double mean() const { return sum / count; }
};

}  // namespace

TempoBounds::TempoBounds(double min, double max) : min_bpm(min), max_bpm(max) {
  if (!(min > 0.0) || !(max > min))
    throw Error(ErrorKind::Validation, "tempo bounds need 0 < min_bpm < max_bpm");
}

std::vector<IoiCluster> ioi_clusters(const Performance& perf, double cluster_width) {
  if (!(cluster_width > 0.0)) throw Error(ErrorKind::Validation, "cluster_width must be > 0");
  const auto& notes = perf.notes();
  std::vector<double> iois;
  for (std::size_t i = 0; i < notes.size(); ++i)
    for (std::size_t j = i + 1; j < notes.size(); ++j) {
      const double d = notes[j].onset - notes[i].onset;
      if (d > kMaxIoi) break;
      if (d > 1e-9) iois.push_back(d);
    }
  std::sort(iois.begin(), iois.end());

  std::vector<Accum> acc;
  for (double d : iois) {
    Accum* best = nullptr;
    double best_gap = cluster_width;
    for (Accum& c : acc) {
      const double gap = std::abs(c.mean() - d);
      if (gap < best_gap) {
        best_gap = gap;
        best = &c;
      }
    }
    if (best) {
      best->sum += d;
      ++best->count;
    } else {
      acc.push_back({d, 1});
    }
  }
  for (bool merged = true; merged;) {
    merged = false;
    std::sort(acc.begin(), acc.end(),
              [](const Accum& a, const Accum& b) { return a.mean() < b.mean(); });
    for (std::size_t i = 1; i < acc.size(); ++i)
      if (acc[i].mean() - acc[i - 1].mean() < cluster_width) {
        acc[i - 1].sum += acc[i].sum;
        acc[i - 1].count += acc[i].count;
        acc.erase(acc.begin() + static_cast<std::ptrdiff_t>(i));
        merged = true;
        break;
      }
  }

  std::vector<IoiCluster> out;
  out.reserve(acc.size());
  for (const Accum& a : acc) out.push_back({a.mean(), a.count, static_cast<double>(a.count)});
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j) {
      if (i == j) continue;
      const double r = std::max(out[i].mean, out[j].mean) / std::min(out[i].mean, out[j].mean);
      const auto n = static_cast<int>(std::lround(r));
      if (n >= 2 && n <= kMaxRatio && std::abs(r - n) <= kRatioTolerance * n)
        out[i].score += static_cast<double>(out[j].count) / n;
    }
  return out;
}

TempoEstimate estimate_tempo_ioi(const Performance& perf, double cluster_width,
                                 TempoBounds range) {
  if (perf.size() < 3)
    throw Error(ErrorKind::InsufficientData,
                "tempo estimation needs at least 3 notes, got " + std::to_string(perf.size()));
  const std::vector<IoiCluster> clusters = ioi_clusters(perf, cluster_width);
  int total = 0;
  for (const IoiCluster& c : clusters) total += c.count;

  TempoEstimate best;
  double best_score = -1.0;
  for (const IoiCluster& c : clusters) {
    for (int k = 1; k <= kMaxRatio; ++k) {
      for (const double period : {c.mean * k, c.mean / k}) {
        const double bpm = 60.0 / period;
        if (bpm < range.min_bpm || bpm > range.max_bpm) continue;
        const double score = c.score * tempo_preference(bpm);
        const bool better =
            score > best_score + 1e-12 ||
            (std::abs(score - best_score) <= 1e-12 &&
             std::abs(bpm - kPreferredBpm) < std::abs(best.bpm - kPreferredBpm));
        if (!better) continue;
        best_score = score;
        best.bpm = bpm;
        best.cluster_support = c.count;
        best.cluster_period = c.mean;
      }
    }
  }
  if (best_score < 0.0)
    throw Error(ErrorKind::NoTempo, "no inter-onset cluster maps into the tempo range");
  best.confidence = total > 0 ? static_cast<double>(best.cluster_support) / total : 0.0;
  return best;
}

TempoBounds tempo_bounds(const TempoEstimate& prior) {
  if (!(prior.bpm > 0.0)) throw Error(ErrorKind::Validation, "prior bpm must be > 0");
  constexpr double kMaxBpm = 350.0;
  return TempoBounds(std::clamp(prior.bpm - 15.0, 1.0, kMaxBpm - 1.0), kMaxBpm);
}

BeatGrid grid_from_tempo(double bpm, double anchor, double span, TimeSignature time_signature,
                         int phase) {
  if (!(bpm > 0.0)) throw Error(ErrorKind::Validation, "bpm must be > 0");
  if (!(span > 0.0)) throw Error(ErrorKind::Validation, "span must be > 0");
  const double period = 60.0 / bpm;
  const auto count = static_cast<std::size_t>(std::floor(span / period + 1e-9)) + 1;
  std::vector<double> beats;
  for (std::size_t k = 0; k < std::max<std::size_t>(count, 2); ++k)
    beats.push_back(anchor + static_cast<double>(k) * period);
  return BeatGrid(std::move(beats), time_signature.numerator, phase, time_signature);
}

std::vector<BeatGrid> enumerate_rotations(const BeatGrid& grid) {
  std::vector<BeatGrid> out;
  out.reserve(static_cast<std::size_t>(grid.beats_per_bar()));
  for (int p = 0; p < grid.beats_per_bar(); ++p) out.push_back(grid.with_phase(p));
  return out;
}

}  // namespace rhythmiq
