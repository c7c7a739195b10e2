#include "cdiff/kmeans.h"

#include <limits>
#include <string>

#include "cdiff/error.h"

namespace cdiff {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    d += diff * diff;
  }
  return d;
}

std::vector<std::size_t> assign_all(std::span<const double> points, std::size_t dim,
                                    std::span<const double> centroids) {
  const std::size_t n = points.size() / dim;
  std::vector<std::size_t> out(n);
  for (std::size_t p = 0; p < n; ++p) {
    out[p] = nearest_centroid(centroids, dim, points.subspan(p * dim, dim));
  }
  return out;
}

std::vector<double> kmeans_plus_plus(std::span<const double> points,
                                     std::size_t dim, std::size_t k, Rng& rng) {
  const std::size_t n = points.size() / dim;
  std::vector<double> centroids;
  centroids.reserve(k * dim);
  const std::size_t first = rng.index(n);
  centroids.insert(centroids.end(), points.begin() + first * dim,
                   points.begin() + (first + 1) * dim);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    const auto last = std::span<const double>(centroids).subspan((c - 1) * dim, dim);
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      best[p] = std::min(best[p], squared_distance(points.subspan(p * dim, dim), last));
      total += best[p];
    }
    std::size_t pick = rng.index(n);
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t p = 0; p < n; ++p) {
        u -= best[p];
        if (u < 0.0) {
          pick = p;
          break;
        }
      }
    }
    centroids.insert(centroids.end(), points.begin() + pick * dim,
                     points.begin() + (pick + 1) * dim);
  }
  return centroids;
}

}  // namespace

std::size_t nearest_centroid(std::span<const double> centroids, std::size_t dim,
                             std::span<const double> point) {
  const std::size_t k = centroids.size() / dim;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(point, centroids.subspan(c * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double kmeans_objective(std::span<const double> points, std::size_t dim,
                        std::span<const double> centroids,
                        std::span<const std::size_t> assignments) {
  double total = 0.0;
  for (std::size_t p = 0; p < assignments.size(); ++p) {
    total += squared_distance(points.subspan(p * dim, dim),
                              centroids.subspan(assignments[p] * dim, dim));
  }
  return total;
}

KMeansResult mini_batch_kmeans(std::span<const double> points, std::size_t dim,
                               const KMeansConfig& cfg, Rng& rng) {
  if (dim == 0 || points.size() % dim != 0) {
    throw DimensionError("k-means points are not a multiple of dim");
  }
  const std::size_t n = points.size() / dim;
  const std::size_t k = cfg.clusters;
  if (k == 0) throw ConfigError("k-means needs at least one cluster");
  if (k > n) {
    throw ConfigError("k-means cluster count " + std::to_string(k) +
                      " exceeds pool size " + std::to_string(n));
  }
  if (cfg.batch_size == 0) throw ConfigError("k-means batch size must be positive");

  KMeansResult result;
  result.dim = dim;
  result.centroids = kmeans_plus_plus(points, dim, k, rng);
  auto assignment = assign_all(points, dim, result.centroids);
  double accepted = kmeans_objective(points, dim, result.centroids, assignment);
  result.objective_history.push_back(accepted);

  std::vector<double> counts(k, 0.0);
  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> batch(cfg.batch_size);
  std::vector<std::size_t> batch_centre(cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto saved_centroids = result.centroids;
    const auto saved_counts = counts;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      for (std::size_t s = 0; s < cfg.batch_size; ++s) {
        batch[s] = rng.index(n);
        batch_centre[s] = nearest_centroid(result.centroids, dim,
                                           points.subspan(batch[s] * dim, dim));
      }
      for (std::size_t s = 0; s < cfg.batch_size; ++s) {
        const std::size_t c = batch_centre[s];
        counts[c] += 1.0;
        const double eta = 1.0 / counts[c];
        for (std::size_t d = 0; d < dim; ++d) {
          double& centre = result.centroids[c * dim + d];
          centre = (1.0 - eta) * centre + eta * points[batch[s] * dim + d];
        }
      }
    }
    assignment = assign_all(points, dim, result.centroids);
    const double objective = kmeans_objective(points, dim, result.centroids, assignment);
    if (objective > accepted) {
      result.centroids = saved_centroids;
      counts = saved_counts;
    } else {
      accepted = objective;
    }
    result.objective_history.push_back(accepted);
  }

  // Full-batch refinement: centroid <- mean of its members, then reassign.
  assignment = assign_all(points, dim, result.centroids);
  std::vector<double> sums(k * dim, 0.0);
  std::vector<std::size_t> members(k, 0);
  for (std::size_t p = 0; p < n; ++p) {
    ++members[assignment[p]];
    for (std::size_t d = 0; d < dim; ++d) {
      sums[assignment[p] * dim + d] += points[p * dim + d];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (members[c] == 0) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      result.centroids[c * dim + d] = sums[c * dim + d] / static_cast<double>(members[c]);
    }
  }
  result.assignments = assign_all(points, dim, result.centroids);
  result.objective_history.push_back(
      kmeans_objective(points, dim, result.centroids, result.assignments));
  return result;
}

}  // namespace cdiff
