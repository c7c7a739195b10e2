#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdiff/env.h"
#include "cdiff/envgen.h"
#include "cdiff/models.h"
#include "cdiff/rng.h"

namespace cdiff {

struct PlannerConfig {
  double rho = 0.1;                    // guidance scale on the normalized scale
  std::size_t max_episode_steps = 0;   // 0: the environment horizon

  void validate() const;
};

struct Plan {
  std::vector<double> normalized;  // final reverse-chain sample
  std::vector<double> window;      // raw units; first state is the observation
};

// Starts from pure noise, conditions the first state on the normalized
// observation and runs the N guided reverse steps, re-applying the condition
// after each one.
Plan plan(const ModelBundle& models, std::span<const double> observation,
          const PlannerConfig& cfg, Rng& rng);

// Position-0 action of the plan in raw units, clipped to +-max_action.
struct Action {
  std::vector<double> action;
  Plan plan;
};

Action act(const ModelBundle& models, std::span<const double> observation,
           const PlannerConfig& cfg, double max_action, Rng& rng);

// Replans at every environment step.
class PlannerPolicy : public Policy {
 public:
  PlannerPolicy(const ModelBundle& models, PlannerConfig cfg, double max_action);

  std::vector<double> act(std::span<const double> state, Rng& rng) override;
  const std::vector<double>* last_plan() const override { return &last_plan_; }

 private:
  const ModelBundle& models_;
  PlannerConfig cfg_;
  double max_action_;
  std::vector<double> last_plan_;
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> states;   // T + 1 raw states
  std::vector<std::vector<double>> actions;  // T clipped actions
  std::vector<double> rewards;               // T
  std::vector<std::vector<double>> planned;  // T raw windows, empty if not planning
  bool reached_goal = false;
  double discounted_return = 0.0;

  std::size_t length() const { return rewards.size(); }
};

// Resets env with `seed`, then acts until done or max_steps transitions.
// The policy draws from an Rng seeded from `seed`.
EpisodeRecord rollout(const PointMazeDesk& env, Policy& policy, std::size_t max_steps,
                      std::uint64_t seed, double gamma);

struct RecordSet {
  std::size_t state_dim = 2;
  std::size_t action_dim = 2;
  std::size_t horizon = 0;  // planned window horizon, 0 when nothing planned
  // Normalization of the planner that produced the windows; empty otherwise.
  std::vector<double> state_mean, state_std;
  std::vector<EpisodeRecord> episodes;
};

// JSON-lines: one header object, then one object per episode.
std::string encode_records(const RecordSet& records);
RecordSet decode_records(const std::string& text);
void save_records(const std::filesystem::path& path, const RecordSet& records);
RecordSet load_records(const std::filesystem::path& path);

}  // namespace cdiff
