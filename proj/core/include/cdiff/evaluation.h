#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cdiff/contrastive.h"
#include "cdiff/dataset.h"
#include "cdiff/env.h"
#include "cdiff/envgen.h"
#include "cdiff/models.h"
#include "cdiff/planner.h"
#include "cdiff/training.h"

namespace cdiff {

// Mean discounted returns of the random and expert behavior policies on one
// environment; the anchors of the normalized score.
struct ScoreRefs {
  double random_ref = 0.0;
  double expert_ref = 1.0;
  std::size_t episodes = 0;
  std::string env_fingerprint;
};

// 100 * (score - random_ref) / (expert_ref - random_ref).
double normalized_score(double score, const ScoreRefs& refs);

struct EvalConfig {
  std::size_t max_steps = 0;  // 0: environment horizon
  double gamma = 0.99;
  std::size_t threads = 1;
};

// Rolls out seeds 0..episodes-1 with each reference policy.
ScoreRefs measure_refs(const PointMazeDesk& env, std::size_t episodes,
                       const EvalConfig& cfg);
// key=value text file.
void save_refs(const std::filesystem::path& path, const ScoreRefs& refs);
ScoreRefs load_refs(const std::filesystem::path& path);
// Reuses the cached file when it was measured on the same environment with
// the same episode count; otherwise measures and rewrites it.
ScoreRefs load_or_measure_refs(const std::filesystem::path& path,
                               const PointMazeDesk& env, std::size_t episodes,
                               const EvalConfig& cfg);

std::string env_fingerprint(const PointMazeDesk& env);

struct ScoreReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> returns;     // discounted, per seed
  std::vector<double> normalized;  // per seed
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double normalized_mean = 0.0;
  double normalized_std = 0.0;
  double success_rate = 0.0;
  std::string fingerprint;
  std::vector<EpisodeRecord> episodes;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

// One rollout per seed, spread over cfg.threads workers. Each worker owns its
// policy instance; results are ordered by seed position so the report does
// not depend on the thread count.
ScoreReport evaluate(const PolicyFactory& make_policy, const PointMazeDesk& env,
                     const std::vector<std::uint64_t>& seeds, const ScoreRefs& refs,
                     const EvalConfig& cfg, const std::string& fingerprint = "");

ScoreReport evaluate_planner(const ModelBundle& models, const PlannerConfig& planner,
                             const PointMazeDesk& env,
                             const std::vector<std::uint64_t>& seeds,
                             const ScoreRefs& refs, const EvalConfig& cfg,
                             const std::string& fingerprint = "");

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count);

// Per-seed rows "seed,return,normalized,reached_goal".
void write_score_csv(const std::filesystem::path& path, const ScoreReport& report);
// Rows "metric,value".
void write_score_summary(const std::filesystem::path& path, const ScoreReport& report);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // one-sided, H1: mean(a) > mean(b)
};

// Welch's unequal-variance t-test. Each sample needs >= 2 values.
WelchResult welch_one_sided(const std::vector<double>& a, const std::vector<double>& b);

struct AblationVariant {
  std::string name;
  Ablation ablation = Ablation::kFull;
  SamplingStrategy strategy = SamplingStrategy::kSR;
};

// full-SR, full-SRD, no-contrast, positives-only.
std::vector<AblationVariant> standard_variants();

struct AblationRow {
  AblationVariant variant;
  ScoreReport report;
  std::vector<LossReport> training_log;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  // full-SR against no-contrast on normalized per-seed scores, when both ran.
  std::optional<WelchResult> full_vs_no_contrast;
};

struct AblationSetup {
  ModelConfig model;
  ContrastiveConfig contrast;
  TrainConfig train;
  PlannerConfig planner;
  EvalConfig eval;
};

// Trains and evaluates every variant with identical seeds and configs apart
// from the ablation switch and sampling strategy.
AblationTable compare_ablations(const OfflineDataset& dataset,
                                const std::vector<AblationVariant>& variants,
                                const AblationSetup& setup, const PointMazeDesk& env,
                                const std::vector<std::uint64_t>& seeds,
                                const ScoreRefs& refs);

// Rows "variant,mean,std,normalized_mean,normalized_std,success_rate".
void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table);

}  // namespace cdiff
