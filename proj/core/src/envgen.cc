#include "cdiff/envgen.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdiff/error.h"

namespace cdiff {

namespace {

constexpr double kExpertNoise = 0.005;
constexpr double kMediumNoise = 0.02;
constexpr double kMediumRandomFraction = 0.2;

// First `count` entries of a seeded partial Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> choose(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < count; ++k) {
    std::swap(order[k], order[k + rng.index(n - k)]);
  }
  order.resize(count);
  return order;
}

}  // namespace

BehaviorKind parse_behavior(const std::string& text) {
  if (text == "expert") return BehaviorKind::kExpert;
  if (text == "medium") return BehaviorKind::kMedium;
  if (text == "random") return BehaviorKind::kRandom;
  throw UsageError("unknown behavior policy '" + text + "' (expected expert|medium|random)");
}

std::string to_string(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::kExpert: return "expert";
    case BehaviorKind::kMedium: return "medium";
    case BehaviorKind::kRandom: return "random";
  }
  return "unknown";
}

BehaviorPolicy::BehaviorPolicy(BehaviorKind kind, const MazeLayout& layout)
    : kind_(kind), layout_(layout) {
  if (kind_ != BehaviorKind::kRandom && layout_.waypoints.empty()) {
    throw ConfigError("scripted policies need at least one waypoint");
  }
}

std::vector<double> BehaviorPolicy::uniform_action(Rng& rng) const {
  const double m = layout_.max_action;
  return {(2.0 * rng.uniform() - 1.0) * m, (2.0 * rng.uniform() - 1.0) * m};
}

std::vector<double> BehaviorPolicy::steer(std::span<const double> state) {
  // Advance past waypoints already reached; the last one is kept as target.
  while (waypoint_ + 1 < layout_.waypoints.size()) {
    const auto& w = layout_.waypoints[waypoint_];
    if (std::hypot(w[0] - state[0], w[1] - state[1]) > layout_.goal_radius) break;
    ++waypoint_;
  }
  const auto& w = layout_.waypoints[waypoint_];
  const double m = layout_.max_action;
  return {std::clamp(w[0] - state[0], -m, m), std::clamp(w[1] - state[1], -m, m)};
}

std::vector<double> BehaviorPolicy::act(std::span<const double> state, Rng& rng) {
  if (kind_ == BehaviorKind::kRandom) return uniform_action(rng);
  auto a = steer(state);
  const double m = layout_.max_action;
  if (kind_ == BehaviorKind::kMedium && rng.uniform() < kMediumRandomFraction) {
    return uniform_action(rng);
  }
  const double noise = kind_ == BehaviorKind::kExpert ? kExpertNoise : kMediumNoise;
  for (double& x : a) x = std::clamp(x + noise * rng.normal(), -m, m);
  return a;
}

void MixSpec::validate() const {
  if (!(expert_ratio >= 0.0 && expert_ratio <= 1.0)) {
    throw ConfigError("expert ratio must lie in [0, 1]");
  }
  if (total_episodes == 0) throw ConfigError("mixture needs at least one episode");
}

OfflineDataset generate_dataset(const PointMazeDesk& env, Policy& policy,
                                std::size_t episodes, std::uint64_t seed,
                                const ReturnConfig& returns) {
  if (episodes == 0) throw ConfigError("episodes must be >= 1");
  std::vector<Episode> out;
  out.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    const std::uint64_t episode_seed = mix_seed(seed, e);
    Rng rng(mix_seed(episode_seed, 1));
    policy.reset();
    auto state = env.reset(episode_seed);
    Episode ep;
    for (std::size_t t = 0; t < env.layout().horizon; ++t) {
      const auto action = env.clip_action(policy.act(state, rng));
      auto step = env.step(state, action);
      ep.push_back(Transition{state, action, step.reward, step.next_state, step.done});
      state = std::move(step.next_state);
      if (step.done) break;
    }
    out.push_back(std::move(ep));
  }
  return OfflineDataset::build(std::move(out), returns);
}

OfflineDataset generate_dataset(const PointMazeDesk& env, BehaviorKind kind,
                                std::size_t episodes, std::uint64_t seed,
                                const ReturnConfig& returns) {
  BehaviorPolicy policy(kind, env.layout());
  return generate_dataset(env, policy, episodes, seed, returns);
}

OfflineDataset mix_datasets(const OfflineDataset& a, const OfflineDataset& b,
                            double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("mix ratio must lie in [0, 1]");
  if (a.state_dim() != b.state_dim() || a.action_dim() != b.action_dim()) {
    throw DimensionError("cannot mix datasets with different dimensions");
  }
  const std::size_t total = a.episodes().size();
  const auto n_expert =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  if (n_expert > b.episodes().size()) {
    throw SamplingError("mixture needs " + std::to_string(n_expert) +
                        " expert episodes but only " +
                        std::to_string(b.episodes().size()) + " are available");
  }
  Rng rng(mix_seed(seed, 0x313));
  auto from_b = choose(b.episodes().size(), n_expert, rng);
  auto from_a = choose(total, total - n_expert, rng);
  std::sort(from_a.begin(), from_a.end());
  std::sort(from_b.begin(), from_b.end());

  std::vector<Episode> episodes;
  episodes.reserve(total);
  for (auto i : from_a) episodes.push_back(a.episodes()[i]);
  for (auto i : from_b) episodes.push_back(b.episodes()[i]);
  return OfflineDataset::build(std::move(episodes), a.return_config());
}

OfflineDataset generate_mixture(const PointMazeDesk& env, const MixSpec& spec,
                                std::uint64_t seed, const ReturnConfig& returns) {
  spec.validate();
  const auto base =
      generate_dataset(env, spec.base_kind, spec.total_episodes, mix_seed(seed, 10), returns);
  const auto n_expert = static_cast<std::size_t>(
      std::llround(spec.expert_ratio * static_cast<double>(spec.total_episodes)));
  if (n_expert == 0) return base;
  const auto expert =
      generate_dataset(env, BehaviorKind::kExpert, n_expert, mix_seed(seed, 11), returns);
  return mix_datasets(base, expert, spec.expert_ratio, mix_seed(seed, 12));
}

double success_rate(const OfflineDataset& dataset) {
  const auto& eps = dataset.episodes();
  if (eps.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ep : eps) {
    if (!ep.empty() && ep.back().done && ep.back().reward > 0.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(eps.size());
}

}  // namespace cdiff
