#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdiff/contrastive.h"
#include "cdiff/dataset.h"
#include "cdiff/planner.h"

namespace cdiff {

// Equal-width bins over [lo, hi]; values outside are clamped into the edge
// bins, so counts always sum to the number of samples.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  std::size_t total() const;
  double bin_lo(std::size_t b) const;
  double bin_hi(std::size_t b) const;
  // Share of samples in the last bin; 0 for an empty histogram.
  double top_bin_mass() const;
};

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);
// Per-step rewards of every episode.
Histogram reward_histogram(const std::vector<EpisodeRecord>& episodes, std::size_t bins,
                           double lo = 0.0, double hi = 1.0);

// Row e, column j-1: cosine similarity between the state planned j steps ahead
// at step t and the state realized at t + j, averaged over valid t. Columns
// past the episode length hold NaN and flag the row as truncated.
struct ConsistencyMatrix {
  std::size_t lookahead = 0;
  std::vector<std::vector<double>> rows;
  std::vector<bool> truncated;

  // Mean of column j-1 over the rows where it is defined; NaN if none.
  double column_mean(std::size_t j) const;
};

// States are compared after (s - center) / scale when center is non-empty.
// Pairs where either vector has (near) zero norm are skipped.
ConsistencyMatrix consistency_matrix(const std::vector<EpisodeRecord>& episodes,
                                     std::size_t state_dim, std::size_t action_dim,
                                     std::size_t lookahead,
                                     std::span<const double> center = {},
                                     std::span<const double> scale = {});
ConsistencyMatrix consistency_matrix(const RecordSet& records, std::size_t lookahead);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

// First two state coordinates with the raw per-state return v_t.
std::vector<ScatterPoint> state_return_scatter(const OfflineDataset& dataset);
// First two state coordinates with the reward received from that state.
std::vector<ScatterPoint> state_reward_scatter(const std::vector<EpisodeRecord>& episodes);

// Compares how far high-return states sit from low-return ones against the
// typical one-step displacement. Well separated regions favour restricting
// positives to reachable clusters (SRD); intermixed ones favour SR.
struct StrategyAdvice {
  SamplingStrategy recommended = SamplingStrategy::kSR;
  double separation = 0.0;  // mean nearest low-return distance / median step length
  std::size_t high_count = 0;
  std::size_t low_count = 0;
};

StrategyAdvice advise_strategy(const OfflineDataset& dataset, const ContrastiveConfig& cfg,
                               double threshold = 5.0);

// CSV headers: "bin_lo,bin_hi,count"; "episode,truncated,j1..jL"; "x,y,value".
void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);
void write_consistency_csv(const std::filesystem::path& path, const ConsistencyMatrix& m);
void write_scatter_csv(const std::filesystem::path& path,
                       const std::vector<ScatterPoint>& points);

struct LineSeries {
  std::string name;
  std::vector<double> values;
};

void write_histogram_svg(const std::filesystem::path& path, const Histogram& h,
                         const std::string& title);
void write_lines_svg(const std::filesystem::path& path, const std::vector<LineSeries>& series,
                     const std::string& title);

}  // namespace cdiff
