#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdiff/dataset.h"
#include "cdiff/kmeans.h"
#include "cdiff/mlp.h"
#include "cdiff/rng.h"

namespace cdiff {

enum class SamplingStrategy { kSR, kSRD };

SamplingStrategy parse_strategy(const std::string& text);
std::string to_string(SamplingStrategy s);

struct ContrastiveConfig {
  double xi = 0.7;           // positive threshold on scaled returns
  double zeta = 0.3;         // negative threshold
  double slope = 20.0;       // logistic steepness
  std::size_t kappa = 16;    // samples per side
  double temperature = 0.5;
  SamplingStrategy strategy = SamplingStrategy::kSR;
  std::size_t cluster_count = 32;
  std::size_t transition_top_m = 3;
  std::size_t latent_dim = 16;
  std::size_t kmeans_batch = 256;
  std::size_t kmeans_epochs = 10;

  void validate() const;
};

// 1 / (1 + exp(slope * (xi - v))).
double p_positive(double v, const ContrastiveConfig& cfg);
// 1 / (1 + exp(slope * (v - zeta))).
double p_negative(double v, const ContrastiveConfig& cfg);

// a.b / (|a| |b|). Throws NumericError when either norm is below 1e-12.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Row-stochastic cluster transition matrix built from consecutive in-episode
// state pairs. Rows without outgoing pairs are uniform and flagged.
struct TransitionMatrix {
  std::size_t clusters = 0;
  std::vector<double> probs;  // clusters x clusters
  std::vector<bool> uniform_fallback;

  double at(std::size_t from, std::size_t to) const {
    return probs[from * clusters + to];
  }
};

// episode_of[p] names the episode of pool entry p; pool entries p and p + 1
// with the same episode id form a transition.
TransitionMatrix cluster_transitions(std::span<const std::size_t> episode_of,
                                     std::span<const std::size_t> assignments,
                                     std::size_t clusters);

// Probability-proportional draw over a fixed item set.
class WeightedTable {
 public:
  WeightedTable() = default;
  WeightedTable(std::vector<std::size_t> items, std::span<const double> weights_by_item);

  std::size_t eligible() const { return items_.size(); }
  const std::vector<std::size_t>& items() const { return items_; }
  double weight(std::size_t slot) const;

  // count distinct items without replacement; successive draws proportional
  // to weight among the remaining items.
  std::vector<std::size_t> sample(std::size_t count, Rng& rng,
                                  const std::string& side) const;

 private:
  std::size_t draw_slot(Rng& rng) const;

  std::vector<std::size_t> items_;     // only items with weight > 0
  std::vector<double> cumulative_;
};

// Return-indexed state pool for positive/negative sampling.
class ContrastiveIndex {
 public:
  // Pool = every dataset state (normalized), returns min-max scaled.
  static ContrastiveIndex build(const OfflineDataset& dataset,
                                const ContrastiveConfig& cfg, Rng& rng);
  // states: n x dim row-major.
  static ContrastiveIndex from_pool(std::vector<double> states, std::size_t dim,
                                   std::vector<double> scaled_returns,
                                   std::vector<std::size_t> episode_of,
                                   const ContrastiveConfig& cfg, Rng& rng);

  const ContrastiveConfig& config() const { return cfg_; }
  std::size_t pool_size() const { return returns_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> state(std::size_t p) const;
  double scaled_return(std::size_t p) const { return returns_[p]; }
  double positive_prob(std::size_t p) const { return p_pos_[p]; }
  double negative_prob(std::size_t p) const { return p_neg_[p]; }

  bool has_clusters() const { return !clusters_.centroids.empty(); }
  const KMeansResult& clusters() const { return clusters_; }
  const TransitionMatrix& transitions() const { return transitions_; }
  std::size_t cluster_of(std::span<const double> state) const;

  // Union of pool states in the top-m destination clusters of the query's
  // cluster (ties to the lower cluster id; empty clusters skipped).
  std::vector<std::size_t> candidate_set(std::span<const double> state) const;

  // kappa positives and kappa negatives (pool indices). SR draws both sides
  // from the whole pool; SRD draws positives from candidate_set(state).
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> sample_sets(
      std::span<const double> state, Rng& rng) const;

 private:
  std::vector<std::size_t> candidate_clusters(std::size_t cluster) const;

  ContrastiveConfig cfg_;
  std::size_t dim_ = 0;
  std::vector<double> states_;
  std::vector<double> returns_;
  std::vector<double> p_pos_;
  std::vector<double> p_neg_;
  KMeansResult clusters_;
  TransitionMatrix transitions_;
  std::vector<std::vector<std::size_t>> members_;  // pool indices per cluster
  WeightedTable positives_;
  WeightedTable negatives_;
  std::vector<WeightedTable> cluster_positives_;  // SRD, by query cluster
};

// Linear layer + Sigmoid mapping states into the contrastive latent space.
class Projector {
 public:
  Projector() = default;
  Projector(std::size_t state_dim, std::size_t latent_dim, Rng& rng);
  explicit Projector(Mlp net);

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  std::vector<double> project(std::span<const double> state) const;

 private:
  Mlp net_;
};

// -log( sum_k exp(sim(z, z+_k)/T) / sum_k exp(sim(z, z-_k)/T) ) with
// gradients for every embedding involved.
struct EmbeddingLoss {
  double loss = 0.0;
  std::vector<double> d_anchor;
  std::vector<std::vector<double>> d_positives;
  std::vector<std::vector<double>> d_negatives;
};

EmbeddingLoss contrastive_loss_embeddings(
    std::span<const double> anchor,
    const std::vector<std::vector<double>>& positives,
    const std::vector<std::vector<double>>& negatives, double temperature);

// Per-state loss through the projector.
struct StateLoss {
  double loss = 0.0;
  std::vector<double> d_state;        // dL / d(query state)
  std::vector<double> projector_grads;
};

StateLoss contrastive_loss_state(std::span<const double> state,
                                 const std::vector<std::vector<double>>& positives,
                                 const std::vector<std::vector<double>>& negatives,
                                 const Projector& projector, double temperature);

// Horizon-weighted loss over a batch of reconstructed windows: for each
// window, sum over positions j = 1..H of L_j / (j + 1); averaged over the
// batch. Windows are normalized, position-major (state, action).
struct TrajLoss {
  double loss = 0.0;
  std::vector<double> d_windows;      // same layout as the input windows
  std::vector<double> projector_grads;
  std::vector<double> per_window;     // weighted sum per window
};

TrajLoss contrastive_loss_traj(std::span<const double> windows,
                               std::size_t batch, std::size_t state_dim,
                               std::size_t action_dim, std::size_t horizon,
                               const ContrastiveIndex& index,
                               const Projector& projector, Rng& rng);

inline double horizon_weight(std::size_t j) { return 1.0 / static_cast<double>(j + 1); }

}  // namespace cdiff
