#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdiff/rng.h"

namespace cdiff {

// Axis-aligned wall segment: either x0 == x1 (vertical) or y0 == y1
// (horizontal).
struct Wall {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool vertical() const { return x0 == x1; }
};

struct MazeLayout {
  std::vector<Wall> walls;
  std::vector<double> goal{0.0, 1.0};
  double goal_radius = 0.05;
  std::vector<double> start_center{0.15, 0.15};
  double start_half_extent = 0.03;
  // Route followed by the scripted behavior policies; the last entry is
  // normally the goal.
  std::vector<std::vector<double>> waypoints;
  double max_action = 0.05;
  std::size_t horizon = 200;
  bool dense_reward = false;

  void validate() const;
  std::string fingerprint() const;
};

// Unit square with one wall along y = 0.5 from x = 0 to x = 0.7. The start
// box sits below the wall on the left and the goal disc is centred on the
// top-left corner, so every route passes the opening on the right.
MazeLayout default_maze();
// JSON object with optional keys: walls ([[x0,y0,x1,y1],...]), goal, goal_radius,
// start_center, start_half_extent, waypoints, max_action, horizon, dense_reward.
MazeLayout load_maze(const std::filesystem::path& path);

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool done = false;
};

// Deterministic 2-D point navigation. Actions are clipped to the box
// [-max_action, max_action]^2. Motion is applied one axis at a time; an axis
// move that would cross a wall is cancelled. Sparse reward: 1 and episode
// end on entering (or starting inside) the goal disc.
class PointMazeDesk {
 public:
  explicit PointMazeDesk(MazeLayout layout = default_maze());

  const MazeLayout& layout() const { return layout_; }
  std::size_t state_dim() const { return 2; }
  std::size_t action_dim() const { return 2; }

  std::vector<double> reset(std::uint64_t seed) const;
  StepResult step(std::span<const double> state, std::span<const double> action) const;

  std::vector<double> clip_action(std::span<const double> action) const;
  bool in_goal(std::span<const double> state) const;
  double distance_to_goal(std::span<const double> state) const;

 private:
  bool crosses_wall(double x, double y, double nx, double ny) const;

  MazeLayout layout_;
};

}  // namespace cdiff
