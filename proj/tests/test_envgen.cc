#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cdiff/envgen.h"
#include "cdiff/error.h"
#include "test_util.h"

namespace cdiff {
namespace {

double mean_trajectory_return(const OfflineDataset& ds) {
  double s = 0.0;
  for (const auto& ep : ds.episodes()) s += trajectory_return(ep, ds.return_config());
  return s / static_cast<double>(ds.episodes().size());
}

bool same_episode(const Episode& a, const Episode& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].state != b[t].state || a[t].action != b[t].action) return false;
  }
  return true;
}

std::size_t count_from(const OfflineDataset& mix, const OfflineDataset& source) {
  std::size_t n = 0;
  for (const auto& ep : mix.episodes()) {
    n += std::any_of(source.episodes().begin(), source.episodes().end(),
                     [&](const Episode& s) { return same_episode(ep, s); });
  }
  return n;
}

TEST(Maze, ZeroActionStaysPut) {
  const PointMazeDesk env;
  const std::vector<double> s{0.3, 0.2};
  const auto r = env.step(s, std::vector<double>{0.0, 0.0});
  EXPECT_EQ(r.next_state, s);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.done);
}

TEST(Maze, GoalIsTerminal) {
  const PointMazeDesk env;
  const auto& g = env.layout().goal;
  const auto r = env.step(g, std::vector<double>{0.05, -0.05});
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.next_state, g);
  // Entering the disc also ends the episode.
  const auto enter = env.step(std::vector<double>{0.05, 0.92}, std::vector<double>{-0.05, 0.05});
  EXPECT_TRUE(enter.done);
  EXPECT_EQ(enter.reward, 1.0);
}

TEST(Maze, WallBlocksOnlyTheCrossingAxis) {
  const PointMazeDesk env;  // wall along y = 0.5 for x in [0, 0.7]
  const auto r = env.step(std::vector<double>{0.3, 0.48}, std::vector<double>{0.02, 0.05});
  EXPECT_DOUBLE_EQ(r.next_state[0], 0.32);
  EXPECT_EQ(r.next_state[1], 0.48);
  const auto from_above =
      env.step(std::vector<double>{0.3, 0.52}, std::vector<double>{0.0, -0.05});
  EXPECT_EQ(from_above.next_state[1], 0.52);
  // Past the wall's end the move goes through.
  const auto open = env.step(std::vector<double>{0.8, 0.48}, std::vector<double>{0.0, 0.05});
  EXPECT_DOUBLE_EQ(open.next_state[1], 0.53);
}

TEST(Maze, VerticalWallFromLayout) {
  MazeLayout layout = default_maze();
  layout.walls = {Wall{0.5, 0.0, 0.5, 0.4}};
  const PointMazeDesk env(layout);
  const auto r = env.step(std::vector<double>{0.48, 0.2}, std::vector<double>{0.05, 0.03});
  EXPECT_EQ(r.next_state[0], 0.48);
  EXPECT_DOUBLE_EQ(r.next_state[1], 0.23);
}

TEST(Maze, BoundsAndClipping) {
  const PointMazeDesk env;
  const auto r = env.step(std::vector<double>{0.99, 0.01}, std::vector<double>{1.0, -1.0});
  EXPECT_EQ(r.next_state[0], 1.0);
  EXPECT_EQ(r.next_state[1], 0.0);
  EXPECT_EQ(env.clip_action(std::vector<double>{0.2, -0.01}),
            (std::vector<double>{0.05, -0.01}));
  EXPECT_THROW(env.step(std::vector<double>{0.5, 0.5},
                        std::vector<double>{std::nan(""), 0.0}),
               NumericError);
}

TEST(Maze, ResetIsSeededAndInsideStartBox) {
  const PointMazeDesk env;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = env.reset(seed);
    EXPECT_EQ(s, env.reset(seed));
    EXPECT_LE(std::abs(s[0] - 0.15), 0.03);
    EXPECT_LE(std::abs(s[1] - 0.15), 0.03);
  }
  EXPECT_NE(env.reset(1), env.reset(2));
}

TEST(Maze, LoadLayoutFromJson) {
  testing::TempDir dir("maze");
  {
    std::ofstream os(dir / "maze.json");
    os << R"({"walls": [[0.5, 0.0, 0.5, 0.6]], "goal": [0.9, 0.1], "horizon": 50,
              "waypoints": [[0.9, 0.1]], "dense_reward": true})";
  }
  const auto layout = load_maze(dir / "maze.json");
  ASSERT_EQ(layout.walls.size(), 1u);
  EXPECT_TRUE(layout.walls[0].vertical());
  EXPECT_EQ(layout.goal, (std::vector<double>{0.9, 0.1}));
  EXPECT_EQ(layout.horizon, 50u);
  const PointMazeDesk env(layout);
  EXPECT_LT(env.step(std::vector<double>{0.1, 0.9}, std::vector<double>{0.0, 0.0}).reward, 0.0);
  EXPECT_NE(layout.fingerprint(), default_maze().fingerprint());
  {
    std::ofstream os(dir / "bad.json");
    os << R"({"goal": [0.9]})";
  }
  EXPECT_THROW(load_maze(dir / "bad.json"), ConfigError);
}

TEST(Behavior, ActionsWithinBounds) {
  const PointMazeDesk env;
  Rng rng(3);
  for (auto kind : {BehaviorKind::kExpert, BehaviorKind::kMedium, BehaviorKind::kRandom}) {
    BehaviorPolicy policy(kind, env.layout());
    for (int k = 0; k < 200; ++k) {
      const std::vector<double> s{rng.uniform(), rng.uniform()};
      for (double a : policy.act(s, rng)) EXPECT_LE(std::abs(a), env.layout().max_action);
    }
  }
  EXPECT_EQ(parse_behavior("medium"), BehaviorKind::kMedium);
  EXPECT_THROW(parse_behavior("oracle"), UsageError);
}

TEST(Generate, SuccessRatesByPolicy) {
  const PointMazeDesk env;
  EXPECT_GE(success_rate(generate_dataset(env, BehaviorKind::kExpert, 50, 1)), 0.9);
  EXPECT_LT(success_rate(generate_dataset(env, BehaviorKind::kRandom, 50, 1)), 0.1);
}

TEST(Generate, ReturnOrderingExpertMediumRandom) {
  const PointMazeDesk env;
  const double e = mean_trajectory_return(generate_dataset(env, BehaviorKind::kExpert, 40, 2));
  const double m = mean_trajectory_return(generate_dataset(env, BehaviorKind::kMedium, 40, 2));
  const double r = mean_trajectory_return(generate_dataset(env, BehaviorKind::kRandom, 40, 2));
  EXPECT_GT(e, m);
  EXPECT_GT(m, r);
}

TEST(Generate, SameSeedSameBytes) {
  const PointMazeDesk env;
  const auto a = encode_dataset(generate_dataset(env, BehaviorKind::kMedium, 5, 77));
  const auto b = encode_dataset(generate_dataset(env, BehaviorKind::kMedium, 5, 77));
  const auto c = encode_dataset(generate_dataset(env, BehaviorKind::kMedium, 5, 78));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Generate, EpisodesRespectHorizonAndTerminals) {
  MazeLayout layout = default_maze();
  layout.horizon = 30;
  const PointMazeDesk env(layout);
  const auto ds = generate_dataset(env, BehaviorKind::kRandom, 5, 4);
  for (const auto& ep : ds.episodes()) {
    EXPECT_LE(ep.size(), 30u);
    for (std::size_t t = 0; t + 1 < ep.size(); ++t) {
      EXPECT_EQ(ep[t].next_state, ep[t + 1].state);
      EXPECT_FALSE(ep[t].done);
    }
  }
}

TEST(Mix, CountsAndExtremes) {
  const PointMazeDesk env;
  const auto base = generate_dataset(env, BehaviorKind::kRandom, 100, 5);
  const auto expert = generate_dataset(env, BehaviorKind::kExpert, 100, 6);
  const auto mix = mix_datasets(base, expert, 0.1, 7);
  EXPECT_EQ(mix.episodes().size(), 100u);
  EXPECT_EQ(count_from(mix, expert), 10u);
  EXPECT_EQ(count_from(mix, base), 90u);
  const auto none = mix_datasets(base, expert, 0.0, 7);
  EXPECT_EQ(encode_dataset(none), encode_dataset(base));
  const auto all = mix_datasets(base, expert, 1.0, 7);
  EXPECT_EQ(count_from(all, expert), 100u);
  // Norm stats are recomputed over the mixture.
  EXPECT_NE(mix.norm().state_mean, base.norm().state_mean);
}

TEST(Mix, ErrorsAndSpecMixture) {
  const PointMazeDesk env;
  const auto base = generate_dataset(env, BehaviorKind::kRandom, 20, 8);
  const auto few = generate_dataset(env, BehaviorKind::kExpert, 1, 9);
  EXPECT_THROW(mix_datasets(base, few, 0.5, 1), SamplingError);
  EXPECT_THROW(mix_datasets(base, few, 1.5, 1), ConfigError);
  const auto m = generate_mixture(env, MixSpec{BehaviorKind::kRandom, 0.2, 30}, 3);
  EXPECT_EQ(m.episodes().size(), 30u);
  EXPECT_NEAR(success_rate(m), 0.2, 0.05);
  EXPECT_EQ(encode_dataset(m),
            encode_dataset(generate_mixture(env, MixSpec{BehaviorKind::kRandom, 0.2, 30}, 3)));
}

}  // namespace
}  // namespace cdiff
