#include "cdiff/contrastive.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdiff/error.h"

namespace cdiff {

SamplingStrategy parse_strategy(const std::string& text) {
  if (text == "sr" || text == "SR") return SamplingStrategy::kSR;
  if (text == "srd" || text == "SRD") return SamplingStrategy::kSRD;
  throw ConfigError("unknown sampling strategy '" + text + "'");
}

std::string to_string(SamplingStrategy s) {
  return s == SamplingStrategy::kSR ? "sr" : "srd";
}

void ContrastiveConfig::validate() const {
  if (!(xi >= zeta)) throw ConfigError("contrastive thresholds need xi >= zeta");
  if (!(slope > 0.0)) throw ConfigError("contrastive slope must be positive");
  if (kappa < 1) throw ConfigError("contrastive kappa must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
  if (latent_dim < 1) throw ConfigError("projector latent_dim must be >= 1");
  if (strategy == SamplingStrategy::kSRD) {
    if (cluster_count < 1) throw ConfigError("SRD needs cluster_count >= 1");
    if (transition_top_m < 1) throw ConfigError("SRD needs transition_top_m >= 1");
  }
}

double p_positive(double v, const ContrastiveConfig& cfg) {
  return 1.0 / (1.0 + std::exp(cfg.slope * (cfg.xi - v)));
}

double p_negative(double v, const ContrastiveConfig& cfg) {
  return 1.0 / (1.0 + std::exp(cfg.slope * (v - cfg.zeta)));
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_sim size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) {
    throw NumericError("cosine similarity of a near-zero vector");
  }
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Clusters

TransitionMatrix cluster_transitions(std::span<const std::size_t> episode_of,
                                     std::span<const std::size_t> assignments,
                                     std::size_t clusters) {
  if (episode_of.size() != assignments.size()) {
    throw DimensionError("cluster_transitions: episode ids and assignments differ in size");
  }
  TransitionMatrix m;
  m.clusters = clusters;
  m.probs.assign(clusters * clusters, 0.0);
  m.uniform_fallback.assign(clusters, false);
  std::vector<double> leaving(clusters, 0.0);
  for (std::size_t p = 0; p + 1 < assignments.size(); ++p) {
    if (episode_of[p] != episode_of[p + 1]) continue;
    m.probs[assignments[p] * clusters + assignments[p + 1]] += 1.0;
    leaving[assignments[p]] += 1.0;
  }
  for (std::size_t a = 0; a < clusters; ++a) {
    if (leaving[a] == 0.0) {
      m.uniform_fallback[a] = true;
      for (std::size_t b = 0; b < clusters; ++b) {
        m.probs[a * clusters + b] = 1.0 / static_cast<double>(clusters);
      }
      continue;
    }
    for (std::size_t b = 0; b < clusters; ++b) m.probs[a * clusters + b] /= leaving[a];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Weighted sampling

WeightedTable::WeightedTable(std::vector<std::size_t> items,
                             std::span<const double> weights_by_item) {
  double total = 0.0;
  for (std::size_t item : items) {
    const double w = weights_by_item[item];
    if (w > 0.0) {
      total += w;
      items_.push_back(item);
      cumulative_.push_back(total);
    }
  }
}

double WeightedTable::weight(std::size_t slot) const {
  return slot == 0 ? cumulative_[0] : cumulative_[slot] - cumulative_[slot - 1];
}

std::size_t WeightedTable::draw_slot(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative_.begin()),
                  cumulative_.size() - 1);
}

std::vector<std::size_t> WeightedTable::sample(std::size_t count, Rng& rng,
                                               const std::string& side) const {
  if (items_.size() < count) {
    throw SamplingError(side + " set: only " + std::to_string(items_.size()) +
                        " eligible states for kappa = " + std::to_string(count));
  }
  // Redrawing duplicates is equivalent to drawing from the renormalized
  // remainder. Fall back to explicit renormalization when the mass is too
  // concentrated for rejection to terminate quickly.
  std::vector<std::size_t> slots;
  slots.reserve(count);
  const std::size_t max_attempts = 32 * count + 64;
  std::size_t attempts = 0;
  while (slots.size() < count && attempts < max_attempts) {
    ++attempts;
    const std::size_t s = draw_slot(rng);
    if (std::find(slots.begin(), slots.end(), s) == slots.end()) slots.push_back(s);
  }
  if (slots.size() < count) {
    std::vector<double> w(items_.size());
    for (std::size_t s = 0; s < w.size(); ++s) w[s] = weight(s);
    for (std::size_t s : slots) w[s] = 0.0;
    while (slots.size() < count) {
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = rng.uniform() * total;
      std::size_t pick = w.size();
      for (std::size_t s = 0; s < w.size(); ++s) {
        if (w[s] <= 0.0) continue;
        pick = s;
        u -= w[s];
        if (u < 0.0) break;
      }
      slots.push_back(pick);
      w[pick] = 0.0;
    }
  }
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t s : slots) out.push_back(items_[s]);
  return out;
}

// ---------------------------------------------------------------------------
// Index

ContrastiveIndex ContrastiveIndex::build(const OfflineDataset& dataset,
                                         const ContrastiveConfig& cfg, Rng& rng) {
  std::vector<double> states;
  std::vector<double> returns;
  std::vector<std::size_t> episode_of;
  states.reserve(dataset.num_states() * dataset.state_dim());
  for (std::size_t e = 0; e < dataset.episodes().size(); ++e) {
    const Episode& ep = dataset.episodes()[e];
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const auto s = dataset.norm().normalize_state(ep[t].state);
      states.insert(states.end(), s.begin(), s.end());
      returns.push_back(dataset.norm().scale_return(dataset.state_returns()[e][t]));
      episode_of.push_back(e);
    }
  }
  return from_pool(std::move(states), dataset.state_dim(), std::move(returns),
                   std::move(episode_of), cfg, rng);
}

ContrastiveIndex ContrastiveIndex::from_pool(std::vector<double> states,
                                             std::size_t dim,
                                             std::vector<double> scaled_returns,
                                             std::vector<std::size_t> episode_of,
                                             const ContrastiveConfig& cfg, Rng& rng) {
  cfg.validate();
  if (dim == 0 || states.size() != scaled_returns.size() * dim ||
      episode_of.size() != scaled_returns.size()) {
    throw DimensionError("contrastive pool arrays have inconsistent sizes");
  }
  if (scaled_returns.empty()) throw ConfigError("contrastive pool is empty");
  ContrastiveIndex idx;
  idx.cfg_ = cfg;
  idx.dim_ = dim;
  idx.states_ = std::move(states);
  idx.returns_ = std::move(scaled_returns);
  const std::size_t n = idx.returns_.size();
  idx.p_pos_.resize(n);
  idx.p_neg_.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    idx.p_pos_[p] = p_positive(idx.returns_[p], cfg);
    idx.p_neg_[p] = p_negative(idx.returns_[p], cfg);
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  idx.positives_ = WeightedTable(all, idx.p_pos_);
  idx.negatives_ = WeightedTable(all, idx.p_neg_);

  if (cfg.strategy == SamplingStrategy::kSRD) {
    KMeansConfig kc{cfg.cluster_count, cfg.kmeans_batch, cfg.kmeans_epochs};
    idx.clusters_ = mini_batch_kmeans(idx.states_, dim, kc, rng);
    idx.transitions_ =
        cluster_transitions(episode_of, idx.clusters_.assignments, cfg.cluster_count);
    idx.members_.assign(cfg.cluster_count, {});
    for (std::size_t p = 0; p < n; ++p) {
      idx.members_[idx.clusters_.assignments[p]].push_back(p);
    }
    idx.cluster_positives_.reserve(cfg.cluster_count);
    for (std::size_t c = 0; c < cfg.cluster_count; ++c) {
      std::vector<std::size_t> items;
      for (std::size_t dest : idx.candidate_clusters(c)) {
        items.insert(items.end(), idx.members_[dest].begin(), idx.members_[dest].end());
      }
      std::sort(items.begin(), items.end());
      idx.cluster_positives_.emplace_back(std::move(items), idx.p_pos_);
    }
  }
  return idx;
}

std::span<const double> ContrastiveIndex::state(std::size_t p) const {
  return std::span<const double>(states_).subspan(p * dim_, dim_);
}

std::size_t ContrastiveIndex::cluster_of(std::span<const double> state) const {
  if (!has_clusters()) throw UsageError("index was built without clusters (SR strategy)");
  if (state.size() != dim_) throw DimensionError("query state dimension mismatch");
  return nearest_centroid(clusters_.centroids, dim_, state);
}

std::vector<std::size_t> ContrastiveIndex::candidate_clusters(std::size_t cluster) const {
  const std::size_t k = transitions_.clusters;
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < k; ++c) {
    if (!members_[c].empty()) order.push_back(c);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return transitions_.at(cluster, a) > transitions_.at(cluster, b);
  });
  if (order.size() > cfg_.transition_top_m) order.resize(cfg_.transition_top_m);
  return order;
}

std::vector<std::size_t> ContrastiveIndex::candidate_set(
    std::span<const double> state) const {
  std::vector<std::size_t> out;
  for (std::size_t dest : candidate_clusters(cluster_of(state))) {
    out.insert(out.end(), members_[dest].begin(), members_[dest].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
ContrastiveIndex::sample_sets(std::span<const double> state, Rng& rng) const {
  if (state.size() != dim_) throw DimensionError("query state dimension mismatch");
  const WeightedTable& pos = cfg_.strategy == SamplingStrategy::kSRD
                                 ? cluster_positives_[cluster_of(state)]
                                 : positives_;
  auto positives = pos.sample(cfg_.kappa, rng, "positive");
  auto negatives = negatives_.sample(cfg_.kappa, rng, "negative");
  return {std::move(positives), std::move(negatives)};
}

// ---------------------------------------------------------------------------
// Projector and losses

Projector::Projector(std::size_t state_dim, std::size_t latent_dim, Rng& rng)
    : net_({state_dim, latent_dim}, Activation::kSigmoid, rng) {}

Projector::Projector(Mlp net) : net_(std::move(net)) {
  if (net_.num_layers() != 1 || net_.output_activation() != Activation::kSigmoid) {
    throw DimensionError("projector must be a single linear layer with Sigmoid output");
  }
}

std::vector<double> Projector::project(std::span<const double> state) const {
  return mlp_apply(net_, Tensor::vector(std::vector<double>(state.begin(), state.end())))
      .data;
}

namespace {

struct SimGrad {
  double sim;
  std::vector<double> d_a;
  std::vector<double> d_b;
};

SimGrad cosine_with_grad(std::span<const double> a, std::span<const double> b) {
  const double sim = cosine_sim(a, b);
  double na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  const double inv = 1.0 / std::sqrt(na * nb);
  SimGrad g{sim, std::vector<double>(a.size()), std::vector<double>(b.size())};
  for (std::size_t k = 0; k < a.size(); ++k) {
    g.d_a[k] = b[k] * inv - sim * a[k] / na;
    g.d_b[k] = a[k] * inv - sim * b[k] / nb;
  }
  return g;
}

// log-sum-exp of values and the matching softmax weights.
double log_sum_exp(const std::vector<double>& x, std::vector<double>& softmax) {
  const double m = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  softmax.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    softmax[k] = std::exp(x[k] - m);
    total += softmax[k];
  }
  for (auto& s : softmax) s /= total;
  return m + std::log(total);
}

}  // namespace

EmbeddingLoss contrastive_loss_embeddings(
    std::span<const double> anchor, const std::vector<std::vector<double>>& positives,
    const std::vector<std::vector<double>>& negatives, double temperature) {
  if (positives.empty() || negatives.empty()) {
    throw SamplingError("contrastive loss needs non-empty positive and negative sets");
  }
  EmbeddingLoss out;
  out.d_anchor.assign(anchor.size(), 0.0);
  auto side = [&](const std::vector<std::vector<double>>& set, double sign,
                  std::vector<std::vector<double>>& d_set) {
    std::vector<SimGrad> sims;
    std::vector<double> logits;
    for (const auto& z : set) {
      sims.push_back(cosine_with_grad(anchor, z));
      logits.push_back(sims.back().sim / temperature);
    }
    std::vector<double> softmax;
    const double lse = log_sum_exp(logits, softmax);
    d_set.resize(set.size());
    for (std::size_t k = 0; k < set.size(); ++k) {
      const double coef = sign * softmax[k] / temperature;
      d_set[k].resize(anchor.size());
      for (std::size_t d = 0; d < anchor.size(); ++d) {
        out.d_anchor[d] += coef * sims[k].d_a[d];
        d_set[k][d] = coef * sims[k].d_b[d];
      }
    }
    return lse;
  };
  const double lse_pos = side(positives, -1.0, out.d_positives);
  const double lse_neg = side(negatives, 1.0, out.d_negatives);
  out.loss = lse_neg - lse_pos;
  return out;
}

StateLoss contrastive_loss_state(std::span<const double> state,
                                 const std::vector<std::vector<double>>& positives,
                                 const std::vector<std::vector<double>>& negatives,
                                 const Projector& projector, double temperature) {
  const std::size_t dim = state.size();
  const std::size_t rows = 1 + positives.size() + negatives.size();
  std::vector<double> input;
  input.reserve(rows * dim);
  input.insert(input.end(), state.begin(), state.end());
  for (const auto& s : positives) input.insert(input.end(), s.begin(), s.end());
  for (const auto& s : negatives) input.insert(input.end(), s.begin(), s.end());
  auto [z, tape] = mlp_forward(projector.net(), Tensor::matrix(rows, dim, std::move(input)));

  const std::size_t latent = z.cols();
  auto row_vec = [&](std::size_t r) {
    auto sp = z.row(r);
    return std::vector<double>(sp.begin(), sp.end());
  };
  std::vector<std::vector<double>> zp, zn;
  for (std::size_t k = 0; k < positives.size(); ++k) zp.push_back(row_vec(1 + k));
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    zn.push_back(row_vec(1 + positives.size() + k));
  }
  const auto anchor = row_vec(0);
  EmbeddingLoss el = contrastive_loss_embeddings(anchor, zp, zn, temperature);

  Tensor dz({rows, latent});
  std::copy(el.d_anchor.begin(), el.d_anchor.end(), dz.row(0).begin());
  for (std::size_t k = 0; k < zp.size(); ++k) {
    std::copy(el.d_positives[k].begin(), el.d_positives[k].end(), dz.row(1 + k).begin());
  }
  for (std::size_t k = 0; k < zn.size(); ++k) {
    std::copy(el.d_negatives[k].begin(), el.d_negatives[k].end(),
              dz.row(1 + zp.size() + k).begin());
  }
  MlpGradients g = mlp_backward(tape, dz);
  StateLoss out;
  out.loss = el.loss;
  out.d_state.assign(g.input.row(0).begin(), g.input.row(0).end());
  out.projector_grads = std::move(g.params);
  return out;
}

TrajLoss contrastive_loss_traj(std::span<const double> windows, std::size_t batch,
                               std::size_t state_dim, std::size_t action_dim,
                               std::size_t horizon, const ContrastiveIndex& index,
                               const Projector& projector, Rng& rng) {
  const std::size_t pair = state_dim + action_dim;
  const std::size_t window_size = (horizon + 1) * pair;
  if (horizon < 1) throw ConfigError("contrastive loss needs horizon >= 1");
  if (windows.size() != batch * window_size) {
    throw DimensionError("contrastive_loss_traj: window buffer size mismatch");
  }
  if (index.dim() != state_dim) {
    throw DimensionError("contrastive index state dimension mismatch");
  }
  const std::size_t kappa = index.config().kappa;
  const std::size_t group = 1 + 2 * kappa;
  const std::size_t queries = batch * horizon;

  // Rows per query: the generated state, kappa positives, kappa negatives.
  std::vector<double> input;
  input.reserve(queries * group * state_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 1; j <= horizon; ++j) {
      const auto query = windows.subspan(b * window_size + j * pair, state_dim);
      input.insert(input.end(), query.begin(), query.end());
      auto [pos, neg] = index.sample_sets(query, rng);
      for (std::size_t p : pos) {
        const auto s = index.state(p);
        input.insert(input.end(), s.begin(), s.end());
      }
      for (std::size_t p : neg) {
        const auto s = index.state(p);
        input.insert(input.end(), s.begin(), s.end());
      }
    }
  }
  auto [z, tape] =
      mlp_forward(projector.net(), Tensor::matrix(queries * group, state_dim, std::move(input)));
  const std::size_t latent = z.cols();
  Tensor dz({queries * group, latent});

  TrajLoss out;
  out.per_window.assign(batch, 0.0);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t q = 0; q < queries; ++q) {
    const std::size_t b = q / horizon;
    const std::size_t j = q % horizon + 1;
    const std::size_t base = q * group;
    auto rows_of = [&](std::size_t first, std::size_t count) {
      std::vector<std::vector<double>> r;
      for (std::size_t k = 0; k < count; ++k) {
        auto sp = z.row(first + k);
        r.emplace_back(sp.begin(), sp.end());
      }
      return r;
    };
    const auto anchor = z.row(base);
    EmbeddingLoss el = contrastive_loss_embeddings(
        anchor, rows_of(base + 1, kappa), rows_of(base + 1 + kappa, kappa),
        index.config().temperature);
    const double w = horizon_weight(j);
    out.per_window[b] += w * el.loss;
    const double scale = w * inv_batch;
    auto put = [&](std::size_t row, const std::vector<double>& g) {
      auto dst = dz.row(row);
      for (std::size_t d = 0; d < latent; ++d) dst[d] = scale * g[d];
    };
    put(base, el.d_anchor);
    for (std::size_t k = 0; k < kappa; ++k) {
      put(base + 1 + k, el.d_positives[k]);
      put(base + 1 + kappa + k, el.d_negatives[k]);
    }
  }
  MlpGradients g = mlp_backward(tape, dz);
  out.projector_grads = std::move(g.params);
  out.d_windows.assign(windows.size(), 0.0);
  for (std::size_t q = 0; q < queries; ++q) {
    const std::size_t b = q / horizon;
    const std::size_t j = q % horizon + 1;
    const auto src = g.input.row(q * group);
    std::copy(src.begin(), src.end(),
              out.d_windows.begin() + static_cast<std::ptrdiff_t>(b * window_size + j * pair));
  }
  for (double v : out.per_window) out.loss += v;
  out.loss *= inv_batch;
  return out;
}

}  // namespace cdiff
