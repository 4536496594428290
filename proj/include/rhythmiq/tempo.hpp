#pragma once

#include <vector>

#include "rhythmiq/symbolic.hpp"

namespace rhythmiq {

struct TempoBounds {
  double min_bpm = 60.0;
  double max_bpm = 350.0;

  TempoBounds() = default;
  TempoBounds(double min, double max);
};

struct TempoEstimate {
  double bpm = 0.0;
  /// Number of inter-onset intervals in the winning cluster.
  int cluster_support = 0;
  /// cluster_support over the total number of intervals considered.
  double confidence = 0.0;
  /// Mean interval of the winning cluster before it was scaled into range.
  double cluster_period = 0.0;
};

/// A group of similar inter-onset intervals.
struct IoiCluster {
  double mean = 0.0;
  int count = 0;
  /// count plus the 1/n-weighted counts of clusters at integer ratios 2..8.
  double score = 0.0;
};

inline constexpr double kDefaultClusterWidth = 0.025;
inline constexpr double kMaxIoi = 2.5;

/// Cluster all onset-pair intervals up to kMaxIoi and score every cluster.
/// Sorted by mean.
std::vector<IoiCluster> ioi_clusters(const Performance& perf,
                                     double cluster_width = kDefaultClusterWidth);

/// Global tempo prior from the inter-onset interval distribution.
TempoEstimate estimate_tempo_ioi(const Performance& perf,
                                 double cluster_width = kDefaultClusterWidth,
                                 TempoBounds range = TempoBounds(60.0, 350.0));

/// Bounds handed to a beat tracker: 15 BPM below the prior, at most 350.
/// The minimum stays below 349 so the range is never empty.
TempoBounds tempo_bounds(const TempoEstimate& prior);

/// Metronomic grid: beats at anchor + k * 60/bpm covering [anchor, anchor + span].
BeatGrid grid_from_tempo(double bpm, double anchor, double span,
                         TimeSignature time_signature = {}, int phase = 0);

/// The grid under every possible downbeat phase, in phase order.
std::vector<BeatGrid> enumerate_rotations(const BeatGrid& grid);

}  // namespace rhythmiq
