#include <gtest/gtest.h>

#include <cmath>

#include "cdiff/analysis.h"
#include "cdiff/envgen.h"
#include "cdiff/error.h"
#include "cdiff/evaluation.h"
#include "test_util.h"

namespace cdiff {
namespace {

PolicyFactory behavior(BehaviorKind kind, const PointMazeDesk& env) {
  return [kind, &env] { return std::make_unique<BehaviorPolicy>(kind, env.layout()); };
}

// Episode whose planned windows are exactly the realized future.
EpisodeRecord foresight_episode(std::size_t len, std::size_t horizon, Rng& rng) {
  EpisodeRecord e;
  for (std::size_t t = 0; t <= len; ++t) e.states.push_back({rng.uniform(), rng.uniform()});
  for (std::size_t t = 0; t < len; ++t) {
    e.actions.push_back({0.0, 0.0});
    e.rewards.push_back(0.0);
    std::vector<double> w;
    for (std::size_t k = 0; k <= horizon; ++k) {
      const auto& s = e.states[std::min(t + k, len)];
      w.insert(w.end(), {s[0], s[1], 0.0, 0.0});
    }
    e.planned.push_back(std::move(w));
  }
  return e;
}

TEST(NormalizedScore, Anchors) {
  const ScoreRefs refs{0.2, 0.7, 10, ""};
  EXPECT_EQ(normalized_score(0.2, refs), 0.0);
  EXPECT_DOUBLE_EQ(normalized_score(0.7, refs), 100.0);
  EXPECT_DOUBLE_EQ(normalized_score(0.45, refs), 50.0);
  EXPECT_THROW(normalized_score(0.3, ScoreRefs{0.5, 0.5, 1, ""}), NumericError);
}

TEST(Refs, MeasureSaveLoad) {
  const PointMazeDesk env;
  const auto refs = measure_refs(env, 20, EvalConfig{});
  EXPECT_EQ(refs.random_ref, 0.0);
  EXPECT_GT(refs.expert_ref, 0.5);
  EXPECT_EQ(refs.env_fingerprint, env_fingerprint(env));
  testing::TempDir dir("refs");
  save_refs(dir / "refs.txt", refs);
  const auto back = load_refs(dir / "refs.txt");
  EXPECT_EQ(back.random_ref, refs.random_ref);
  EXPECT_EQ(back.expert_ref, refs.expert_ref);
  EXPECT_EQ(back.episodes, 20u);
  const auto cached = load_or_measure_refs(dir / "refs.txt", env, 20, EvalConfig{});
  EXPECT_EQ(cached.expert_ref, refs.expert_ref);
  EXPECT_THROW(load_refs(dir / "none.txt"), IoError);
}

TEST(Evaluate, AggregatesAndThreadsAgree) {
  const PointMazeDesk env;
  const ScoreRefs refs{0.0, 0.7, 1, ""};
  const auto seeds = seed_range(100, 12);
  EvalConfig one;
  EvalConfig three;
  three.threads = 3;
  const auto a = evaluate(behavior(BehaviorKind::kMedium, env), env, seeds, refs, one, "fp");
  const auto b = evaluate(behavior(BehaviorKind::kMedium, env), env, seeds, refs, three, "fp");
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_EQ(a.seeds, seeds);
  ASSERT_EQ(a.returns.size(), 12u);
  double mean = 0.0;
  for (double r : a.returns) mean += r / 12.0;
  EXPECT_NEAR(a.mean, mean, 1e-12);
  EXPECT_NEAR(a.normalized_mean, normalized_score(a.mean, refs), 1e-9);
  double ss = 0.0;
  for (double r : a.returns) ss += (r - mean) * (r - mean);
  EXPECT_NEAR(a.std, std::sqrt(ss / 11.0), 1e-12);
  EXPECT_EQ(a.fingerprint, "fp");
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(a.episodes[k].states, b.episodes[k].states);
}

TEST(Evaluate, SingleSeedReportAndCsv) {
  const PointMazeDesk env;
  const auto r = evaluate(behavior(BehaviorKind::kExpert, env), env, {5}, ScoreRefs{0, 1, 1, ""},
                          EvalConfig{});
  EXPECT_EQ(r.returns.size(), 1u);
  EXPECT_EQ(r.std, 0.0);
  testing::TempDir dir("score");
  write_score_csv(dir / "report.csv", r);
  write_score_summary(dir / "summary.csv", r);
  const auto csv = testing::read_file(dir / "report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "seed,return,normalized,reached_goal");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(testing::read_file(dir / "summary.csv").substr(0, 13), "metric,value\n");
}

TEST(Welch, MatchesReferenceImplementation) {
  // Reference values from an independent Welch t-test implementation.
  const std::vector<double> a{3.1, 2.4, 5.0, 4.2, 3.9, 4.4}, b{2.0, 2.9, 1.5, 3.3, 2.2};
  const auto w = welch_one_sided(a, b);
  EXPECT_NEAR(w.t, 2.9036999555901755, 1e-12);
  EXPECT_NEAR(w.df, 8.96354703600493, 1e-10);
  EXPECT_NEAR(w.p_value, 0.008781284846894988, 1e-10);
  const auto rev = welch_one_sided(b, a);
  EXPECT_NEAR(w.p_value + rev.p_value, 1.0, 1e-12);
}

TEST(Welch, ZeroVarianceCases) {
  EXPECT_EQ(welch_one_sided({1, 1}, {0, 0}).p_value, 0.0);
  EXPECT_EQ(welch_one_sided({0, 0}, {1, 1}).p_value, 1.0);
  EXPECT_EQ(welch_one_sided({1, 1}, {1, 1}).p_value, 0.5);
}

TEST(Ablations, OneRowPerVariantAndDeterministic) {
  const PointMazeDesk env;
  const auto ds = generate_mixture(env, MixSpec{BehaviorKind::kRandom, 0.3, 10}, 2);
  AblationSetup setup;
  setup.model.horizon = 4;
  setup.model.denoiser_hidden = {16};
  setup.model.predictor_hidden = {16};
  setup.model.diffusion_steps = 4;
  setup.contrast.kappa = 2;
  setup.contrast.latent_dim = 4;
  setup.contrast.cluster_count = 4;
  setup.train.steps = 3;
  setup.train.batch_size = 4;
  setup.eval.max_steps = 5;
  const auto seeds = seed_range(0, 3);
  const ScoreRefs refs{0.0, 0.7, 1, ""};
  const auto a = compare_ablations(ds, standard_variants(), setup, env, seeds, refs);
  const auto b = compare_ablations(ds, standard_variants(), setup, env, seeds, refs);
  ASSERT_EQ(a.rows.size(), 4u);
  EXPECT_EQ(a.rows[0].variant.name, "full-SR");
  EXPECT_TRUE(a.full_vs_no_contrast.has_value());
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a.rows[k].report.returns, b.rows[k].report.returns);
    EXPECT_EQ(a.rows[k].report.episodes[0].states, b.rows[k].report.episodes[0].states);
  }
  testing::TempDir dir("abl");
  write_ablation_csv(dir / "ablation.csv", a);
  const auto csv = testing::read_file(dir / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Histogram, EmptySingleAndClamping) {
  const auto empty = histogram(std::vector<double>{}, 5, 0.0, 1.0);
  EXPECT_EQ(empty.counts, std::vector<std::size_t>(5, 0));
  const auto one = histogram(std::vector<double>{0.55}, 5, 0.0, 1.0);
  EXPECT_EQ(one.counts, (std::vector<std::size_t>{0, 0, 1, 0, 0}));
  const auto edges = histogram(std::vector<double>{-3.0, 1.0, 7.0}, 4, 0.0, 1.0);
  EXPECT_EQ(edges.counts, (std::vector<std::size_t>{1, 0, 0, 2}));
  EXPECT_EQ(edges.total(), 3u);
  EXPECT_DOUBLE_EQ(edges.top_bin_mass(), 2.0 / 3.0);
  EXPECT_THROW(histogram(std::vector<double>{0.5}, 0, 0.0, 1.0), ConfigError);
}

TEST(Histogram, UniformSamplesAreFlat) {
  Rng rng(4);
  std::vector<double> v(20000);
  for (auto& x : v) x = rng.uniform();
  const std::size_t bins = 10;
  const auto h = histogram(v, bins, 0.0, 1.0);
  EXPECT_EQ(h.total(), v.size());
  const double p = 1.0 / bins, n = static_cast<double>(v.size());
  for (auto c : h.counts) EXPECT_LE(std::abs(c - n * p), 3.0 * std::sqrt(n * p * (1 - p)));
}

TEST(Histogram, RewardsFromRecords) {
  EpisodeRecord a, b;
  a.rewards = {0.0, 0.0, 1.0};
  b.rewards = {0.0};
  const auto h = reward_histogram({a, b}, 2);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{3, 1}));
}

TEST(Consistency, HandBuiltEpisode) {
  // state_dim 2, action_dim 1, horizon 3, in a 2-step episode.
  EpisodeRecord e;
  e.states = {{1, 0}, {0, 1}, {1, 1}};
  e.actions = {{0}, {0}};
  e.rewards = {0, 0};
  e.planned = {{1, 0, 0, /*j=1*/ 1, 0, 0, /*j=2*/ 1, 1, 0, /*j=3*/ 1, 1, 0},
               {0, 1, 0, /*j=1*/ 1, 1, 0, /*j=2*/ 5, 5, 0, /*j=3*/ 1, 1, 0}};
  const auto m = consistency_matrix({e}, 2, 1, 2);
  ASSERT_EQ(m.rows.size(), 1u);
  // j=1: cos((1,0),(0,1)) = 0 and cos((1,1),(1,1)) = 1 -> 0.5.
  EXPECT_NEAR(m.rows[0][0], 0.5, 1e-15);
  // j=2: only t=0 fits, cos((1,1),(1,1)) = 1.
  EXPECT_NEAR(m.rows[0][1], 1.0, 1e-15);
  EXPECT_FALSE(m.truncated[0]);
  const auto longer = consistency_matrix({e}, 2, 1, 3);
  EXPECT_TRUE(longer.truncated[0]);
  EXPECT_TRUE(std::isnan(longer.rows[0][2]));
  EXPECT_NEAR(longer.column_mean(1), 0.5, 1e-15);
}

TEST(Consistency, OracleAndOrthogonalPlanners) {
  Rng rng(5);
  std::vector<EpisodeRecord> eps;
  for (int k = 0; k < 3; ++k) eps.push_back(foresight_episode(10, 4, rng));
  const auto m = consistency_matrix(eps, 2, 2, 4);
  for (const auto& row : m.rows) {
    for (double v : row) EXPECT_NEAR(v, 1.0, 1e-12);
  }
  auto orth = eps;
  for (auto& e : orth) {
    for (auto& w : e.planned) {
      for (std::size_t k = 1; k <= 4; ++k) {
        const std::size_t t = &w - &e.planned[0];
        const auto& s = e.states[std::min(t + k, e.length())];
        w[k * 4] = -s[1];
        w[k * 4 + 1] = s[0];
      }
    }
  }
  const auto z = consistency_matrix(orth, 2, 2, 4);
  for (const auto& row : z.rows) {
    for (double v : row) EXPECT_NEAR(v, 0.0, 1e-12);
  }
  EpisodeRecord unplanned = eps[0];
  unplanned.planned.clear();
  EXPECT_THROW(consistency_matrix({unplanned}, 2, 2, 1), UsageError);
}

TEST(Scatter, RowsAndGoalConcentration) {
  const PointMazeDesk env;
  const auto expert = generate_dataset(env, BehaviorKind::kExpert, 20, 1);
  const auto random = generate_dataset(env, BehaviorKind::kRandom, 20, 1);
  const auto pe = state_return_scatter(expert);
  EXPECT_EQ(pe.size(), expert.num_states());
  auto mean_dist = [&](const std::vector<ScatterPoint>& pts) {
    double s = 0.0;
    for (const auto& p : pts) s += env.distance_to_goal(std::vector<double>{p.x, p.y});
    return s / static_cast<double>(pts.size());
  };
  EXPECT_LT(mean_dist(pe), mean_dist(state_return_scatter(random)));
  testing::TempDir dir("scatter");
  write_scatter_csv(dir / "empty.csv", {});
  EXPECT_EQ(testing::read_file(dir / "empty.csv"), "x,y,value\n");
  write_scatter_csv(dir / "pts.csv", pe);
  const auto csv = testing::read_file(dir / "pts.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), pe.size() + 1);
}

TEST(Strategy, AdviceIsConsistent) {
  const PointMazeDesk env;
  const auto ds = generate_mixture(env, MixSpec{BehaviorKind::kRandom, 0.2, 20}, 3);
  const auto low = advise_strategy(ds, ContrastiveConfig{}, 1e-9);
  const auto high = advise_strategy(ds, ContrastiveConfig{}, 1e9);
  EXPECT_EQ(low.recommended, SamplingStrategy::kSRD);
  EXPECT_EQ(high.recommended, SamplingStrategy::kSR);
  EXPECT_GT(low.high_count, 0u);
  EXPECT_GT(low.low_count, 0u);
  EXPECT_GT(low.separation, 0.0);
  EXPECT_EQ(low.separation, high.separation);
}

TEST(Svg, WritesDocuments) {
  testing::TempDir dir("svg");
  write_histogram_svg(dir / "h.svg", histogram(std::vector<double>{0.1, 0.9}, 4, 0, 1), "h");
  write_lines_svg(dir / "l.svg", {{"a", {1, 2, 3}}, {"b", {3, 1}}}, "lines");
  for (const char* f : {"h.svg", "l.svg"}) {
    const auto text = testing::read_file(dir / f);
    EXPECT_EQ(text.rfind("<svg", 0), 0u) << f;
    EXPECT_NE(text.find("</svg>"), std::string::npos);
  }
}

}  // namespace
}  // namespace cdiff
