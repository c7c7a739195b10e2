#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdiff/rng.h"

namespace cdiff {

struct KMeansConfig {
  std::size_t clusters = 32;
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
};

struct KMeansResult {
  std::size_t dim = 0;
  std::vector<double> centroids;         // clusters x dim
  std::vector<std::size_t> assignments;  // nearest centroid per point
  // Objective after initialization, after each accepted epoch and after the
  // closing full-batch refinement.
  std::vector<double> objective_history;
};

// Mini-batch k-means with per-centroid learning rate 1/count, seeded with
// k-means++. An epoch whose full objective rises is rolled back. A single
// full-batch mean update and reassignment closes the run.
// points is n x dim, row-major.
KMeansResult mini_batch_kmeans(std::span<const double> points, std::size_t dim,
                               const KMeansConfig& cfg, Rng& rng);

std::size_t nearest_centroid(std::span<const double> centroids, std::size_t dim,
                             std::span<const double> point);

// Sum of squared distances from each point to its assigned centroid.
double kmeans_objective(std::span<const double> points, std::size_t dim,
                        std::span<const double> centroids,
                        std::span<const std::size_t> assignments);

}  // namespace cdiff
