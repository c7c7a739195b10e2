#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cdiff/dataset.h"
#include "cdiff/env.h"
#include "cdiff/rng.h"

namespace cdiff {

// Closed-loop controller. reset() is called at the start of each episode.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() {}
  virtual std::vector<double> act(std::span<const double> state, Rng& rng) = 0;
  // Window planned for the most recent action in raw units, if the policy
  // plans at all.
  virtual const std::vector<double>* last_plan() const { return nullptr; }
};

enum class BehaviorKind { kExpert, kMedium, kRandom };

BehaviorKind parse_behavior(const std::string& text);
std::string to_string(BehaviorKind kind);

// Scripted data-collection policies on a maze layout:
//   expert: waypoint follower with Gaussian action noise (std 0.005)
//   medium: waypoint follower with noise std 0.02; 20% of actions uniform
//   random: uniform actions in the action box
class BehaviorPolicy : public Policy {
 public:
  BehaviorPolicy(BehaviorKind kind, const MazeLayout& layout);

  void reset() override { waypoint_ = 0; }
  std::vector<double> act(std::span<const double> state, Rng& rng) override;

  BehaviorKind kind() const { return kind_; }

 private:
  std::vector<double> steer(std::span<const double> state);
  std::vector<double> uniform_action(Rng& rng) const;

  BehaviorKind kind_;
  MazeLayout layout_;
  std::size_t waypoint_ = 0;
};

struct MixSpec {
  BehaviorKind base_kind = BehaviorKind::kRandom;
  double expert_ratio = 0.1;
  std::size_t total_episodes = 100;

  void validate() const;
};

// Episode e runs from env.reset(mix_seed(seed, e)) with its own policy stream,
// so the output depends only on (env, policy, episodes, seed).
OfflineDataset generate_dataset(const PointMazeDesk& env, Policy& policy,
                                std::size_t episodes, std::uint64_t seed,
                                const ReturnConfig& returns = {});
OfflineDataset generate_dataset(const PointMazeDesk& env, BehaviorKind kind,
                                std::size_t episodes, std::uint64_t seed,
                                const ReturnConfig& returns = {});

// Keeps a's episode budget: round(ratio * |a|) episodes are drawn uniformly
// without replacement from b and the rest from a, then statistics are
// recomputed over the mixture. Throws SamplingError when b is too small.
OfflineDataset mix_datasets(const OfflineDataset& a, const OfflineDataset& b,
                            double ratio, std::uint64_t seed);

// Generates base and expert data for `spec` and mixes them.
OfflineDataset generate_mixture(const PointMazeDesk& env, const MixSpec& spec,
                                std::uint64_t seed, const ReturnConfig& returns = {});

// Fraction of episodes whose final transition reaches the goal.
double success_rate(const OfflineDataset& dataset);

}  // namespace cdiff
