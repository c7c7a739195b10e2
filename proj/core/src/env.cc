#include "cdiff/env.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cdiff/dataset.h"
#include "cdiff/error.h"

namespace cdiff {

void MazeLayout::validate() const {
  if (goal.size() != 2 || start_center.size() != 2) {
    throw ConfigError("maze goal and start must be 2-D");
  }
  if (!(goal_radius > 0.0) || !(max_action > 0.0) || horizon == 0) {
    throw ConfigError("maze goal_radius, max_action and horizon must be positive");
  }
  for (const auto& w : walls) {
    if (w.x0 != w.x1 && w.y0 != w.y1) throw ConfigError("walls must be axis-aligned");
  }
  for (const auto& p : waypoints) {
    if (p.size() != 2) throw ConfigError("waypoints must be 2-D");
  }
}

std::string MazeLayout::fingerprint() const {
  std::ostringstream os;
  for (const auto& w : walls) {
    os << "w" << format_double(w.x0) << ',' << format_double(w.y0) << ','
       << format_double(w.x1) << ',' << format_double(w.y1) << ';';
  }
  os << "g" << format_double(goal[0]) << ',' << format_double(goal[1]) << ','
     << format_double(goal_radius) << ";s" << format_double(start_center[0]) << ','
     << format_double(start_center[1]) << ',' << format_double(start_half_extent)
     << ";a" << format_double(max_action) << ";h" << horizon << ";d" << dense_reward;
  for (const auto& p : waypoints) {
    os << ";p" << format_double(p[0]) << ',' << format_double(p[1]);
  }
  return os.str();
}

MazeLayout default_maze() {
  MazeLayout m;
  m.walls = {Wall{0.0, 0.5, 0.7, 0.5}};
  m.goal = {0.0, 1.0};
  m.waypoints = {{0.85, 0.25}, {0.85, 0.75}, {0.02, 0.98}};
  return m;
}

MazeLayout load_maze(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open maze file '" + path.string() + "'");
  MazeLayout m = default_maze();
  try {
    const auto j = nlohmann::json::parse(is);
    if (j.contains("walls")) {
      m.walls.clear();
      for (const auto& w : j.at("walls")) {
        const auto v = w.get<std::vector<double>>();
        if (v.size() != 4) throw ConfigError("wall entries need 4 coordinates");
        m.walls.push_back(Wall{v[0], v[1], v[2], v[3]});
      }
    }
    if (j.contains("goal")) m.goal = j.at("goal").get<std::vector<double>>();
    if (j.contains("goal_radius")) m.goal_radius = j.at("goal_radius").get<double>();
    if (j.contains("start_center")) {
      m.start_center = j.at("start_center").get<std::vector<double>>();
    }
    if (j.contains("start_half_extent")) {
      m.start_half_extent = j.at("start_half_extent").get<double>();
    }
    if (j.contains("waypoints")) {
      m.waypoints = j.at("waypoints").get<std::vector<std::vector<double>>>();
    }
    if (j.contains("max_action")) m.max_action = j.at("max_action").get<double>();
    if (j.contains("horizon")) m.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("dense_reward")) m.dense_reward = j.at("dense_reward").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("maze file '" + path.string() + "': " + e.what());
  }
  m.validate();
  return m;
}

PointMazeDesk::PointMazeDesk(MazeLayout layout) : layout_(std::move(layout)) {
  layout_.validate();
}

std::vector<double> PointMazeDesk::reset(std::uint64_t seed) const {
  Rng rng(mix_seed(seed, 0x5eed));
  const double h = layout_.start_half_extent;
  return {std::clamp(layout_.start_center[0] + (2.0 * rng.uniform() - 1.0) * h, 0.0, 1.0),
          std::clamp(layout_.start_center[1] + (2.0 * rng.uniform() - 1.0) * h, 0.0, 1.0)};
}

std::vector<double> PointMazeDesk::clip_action(std::span<const double> action) const {
  if (action.size() != 2) throw DimensionError("maze actions are 2-D");
  const double m = layout_.max_action;
  return {std::clamp(action[0], -m, m), std::clamp(action[1], -m, m)};
}

bool PointMazeDesk::in_goal(std::span<const double> state) const {
  return distance_to_goal(state) <= layout_.goal_radius;
}

double PointMazeDesk::distance_to_goal(std::span<const double> state) const {
  return std::hypot(state[0] - layout_.goal[0], state[1] - layout_.goal[1]);
}

bool PointMazeDesk::crosses_wall(double x, double y, double nx, double ny) const {
  for (const auto& w : layout_.walls) {
    if (w.vertical() && x != nx) {
      const double lo = std::min(w.y0, w.y1), hi = std::max(w.y0, w.y1);
      const bool spans = (x < w.x0 && nx >= w.x0) || (x > w.x0 && nx <= w.x0);
      if (spans && y >= lo && y <= hi) return true;
    } else if (!w.vertical() && y != ny) {
      const double lo = std::min(w.x0, w.x1), hi = std::max(w.x0, w.x1);
      const bool spans = (y < w.y0 && ny >= w.y0) || (y > w.y0 && ny <= w.y0);
      if (spans && x >= lo && x <= hi) return true;
    }
  }
  return false;
}

StepResult PointMazeDesk::step(std::span<const double> state,
                               std::span<const double> action) const {
  if (state.size() != 2) throw DimensionError("maze states are 2-D");
  for (double a : action) {
    if (!std::isfinite(a)) throw NumericError("non-finite action");
  }
  StepResult r;
  if (in_goal(state)) {
    r.next_state.assign(state.begin(), state.end());
    r.reward = 1.0;
    r.done = true;
    return r;
  }
  const auto a = clip_action(action);
  double x = state[0], y = state[1];
  const double nx = std::clamp(x + a[0], 0.0, 1.0);
  if (!crosses_wall(x, y, nx, y)) x = nx;
  const double ny = std::clamp(y + a[1], 0.0, 1.0);
  if (!crosses_wall(x, y, x, ny)) y = ny;
  r.next_state = {x, y};
  if (in_goal(r.next_state)) {
    r.reward = 1.0;
    r.done = true;
  } else if (layout_.dense_reward) {
    r.reward = -0.01 * distance_to_goal(r.next_state);
  }
  return r;
}

}  // namespace cdiff
