// cdiff: data generation, training, evaluation and analysis entry points.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cdiff/analysis.h"
#include "cdiff/envgen.h"
#include "cdiff/error.h"
#include "cdiff/evaluation.h"
#include "cdiff/planner.h"
#include "cdiff/run_config.h"
#include "cdiff/training.h"

namespace fs = std::filesystem;
using namespace cdiff;

namespace {

constexpr std::size_t kRefEpisodes = 100;
constexpr std::uint64_t kDefaultEvalSeedBase = 1000;

// Flags shared by every subcommand.
struct Common {
  std::string config;
  std::string out;
  bool exact_out = false;
  std::vector<std::pair<std::string, std::string>> overrides;

  void add(const std::string& key, const std::string& value) { overrides.emplace_back(key, value); }
};

template <typename T>
CLI::Option* bind(CLI::App* cmd, const std::string& flag, const std::string& key, Common& common,
          const std::string& help) {
  return cmd->add_option_function<T>(
      flag,
      [&common, key](const T& v) {
        if constexpr (std::is_same_v<T, std::string>) {
          common.add(key, v);
        } else {
          std::ostringstream os;
          os.precision(17);
          os << v;
          common.add(key, os.str());
        }
      },
      help);
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "key=value config file; flags take precedence");
  cmd->add_option("--out", common.out, "output directory")->required();
  cmd->add_flag("--exact-out", common.exact_out,
                "write into --out itself instead of a timestamped run directory");
}

RunConfig resolve(const std::string& command, const Common& common) {
  RunConfig cfg;
  if (!common.config.empty()) cfg.merge_file(common.config);
  for (const auto& [k, v] : common.overrides) {
    try {
      cfg.set(k, v);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  cfg.run["command"] = command;
  return cfg;
}

fs::path make_run_dir(const Common& common, const RunConfig& cfg) {
  fs::path dir = common.out;
  if (!common.exact_out) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    dir /= std::string(stamp) + "-" + cfg.fingerprint().substr(0, 12);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
  cfg.save(dir / "run_config.txt");
  return dir;
}

PointMazeDesk make_env(const RunConfig& cfg) {
  if (!cfg.has_run("env.maze") || cfg.run.at("env.maze") == "default") return PointMazeDesk();
  return PointMazeDesk(load_maze(cfg.run.at("env.maze")));
}

std::string run_value(const RunConfig& cfg, const std::string& key, const std::string& fallback) {
  return cfg.has_run(key) ? cfg.run.at(key) : fallback;
}

std::uint64_t run_uint(const RunConfig& cfg, const std::string& key, std::uint64_t fallback) {
  if (!cfg.has_run(key)) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(cfg.run.at(key), &used);
    if (used != cfg.run.at(key).size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer");
  }
}

double run_double(const RunConfig& cfg, const std::string& key, double fallback) {
  if (!cfg.has_run(key)) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stod(cfg.run.at(key), &used);
    if (used != cfg.run.at(key).size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number");
  }
}

int cmd_gen_data(const Common& common) {
  auto cfg = resolve("gen-data", common);
  const auto env = make_env(cfg);
  const auto kind = parse_behavior(run_value(cfg, "data.policy", "random"));
  const auto episodes = run_uint(cfg, "data.episodes", 100);
  const auto seed = run_uint(cfg, "data.seed", 0);
  const double ratio = run_double(cfg, "data.mix_expert_ratio", 0.0);
  if (episodes == 0) throw UsageError("--episodes must be >= 1");

  const auto dataset =
      ratio > 0.0 ? generate_mixture(env, MixSpec{kind, ratio, episodes}, seed, cfg.returns)
                  : generate_dataset(env, kind, episodes, seed, cfg.returns);
  const auto dir = make_run_dir(common, cfg);
  save_dataset(dir / "dataset.jsonl", dataset);
  std::printf("wrote %zu episodes (%zu states, success rate %.3f) to %s\n",
              dataset.episodes().size(), dataset.num_states(), success_rate(dataset),
              (dir / "dataset.jsonl").c_str());
  return 0;
}

int cmd_train(const Common& common) {
  auto cfg = resolve("train", common);
  if (!cfg.has_run("data.path")) throw UsageError("train needs --data");
  const auto dataset = load_dataset(cfg.run.at("data.path"));
  const auto dir = make_run_dir(common, cfg);
  const TrainOutputs outputs{dir / "checkpoint.bin", dir / "metrics.csv"};

  TrainResult result;
  if (cfg.has_run("train.resume")) {
    auto state = TrainState::load(cfg.run.at("train.resume"));
    result = resume(dataset, std::move(state), cfg.contrast, cfg.train, outputs);
  } else {
    result = train(dataset, cfg.model, cfg.contrast, cfg.train, outputs);
  }

  std::vector<LineSeries> curves(3);
  curves[0].name = "loss_d";
  curves[1].name = "loss_v";
  curves[2].name = "loss_c";
  for (const auto& r : result.log) {
    curves[0].values.push_back(r.loss_d);
    curves[1].values.push_back(r.loss_v);
    curves[2].values.push_back(r.loss_c);
  }
  write_lines_svg(dir / "losses.svg", curves, "training losses");
  std::printf("trained to step %llu; checkpoint %s\n",
              static_cast<unsigned long long>(result.state.step),
              outputs.checkpoint.c_str());
  return 0;
}

int cmd_eval(const Common& common) {
  auto cfg = resolve("eval", common);
  const auto env = make_env(cfg);
  const std::string policy = run_value(cfg, "eval.policy", "planner");
  const auto count = run_uint(cfg, "eval.seeds", 10);
  if (count == 0) throw UsageError("--seeds must be >= 1");
  const auto seeds = seed_range(run_uint(cfg, "eval.seed_base", kDefaultEvalSeedBase), count);
  EvalConfig ec = cfg.eval;
  ec.gamma = cfg.returns.gamma;
  ec.max_steps = cfg.planner.max_episode_steps;

  std::optional<TrainState> state;
  if (policy == "planner") {
    if (!cfg.has_run("eval.checkpoint")) throw UsageError("planner evaluation needs --ckpt");
    state = TrainState::load(cfg.run.at("eval.checkpoint"));
  } else {
    parse_behavior(policy);
  }

  const auto dir = make_run_dir(common, cfg);
  // Anchors always use full-length episodes, whatever the evaluation cap.
  EvalConfig ref_cfg = ec;
  ref_cfg.max_steps = 0;
  const ScoreRefs refs =
      cfg.has_run("eval.refs")
          ? load_or_measure_refs(cfg.run.at("eval.refs"), env, kRefEpisodes, ref_cfg)
          : measure_refs(env, kRefEpisodes, ref_cfg);
  save_refs(dir / "refs.txt", refs);

  ScoreReport report;
  RecordSet records;
  if (state) {
    const auto& m = state->models;
    report = evaluate_planner(m, cfg.planner, env, seeds, refs, ec, cfg.fingerprint());
    records.state_dim = m.config.state_dim;
    records.action_dim = m.config.action_dim;
    records.horizon = m.config.horizon;
    records.state_mean = m.norm.state_mean;
    records.state_std = m.norm.state_std;
  } else {
    const auto kind = parse_behavior(policy);
    report = evaluate([&] { return std::make_unique<BehaviorPolicy>(kind, env.layout()); },
                      env, seeds, refs, ec, cfg.fingerprint());
  }
  records.episodes = report.episodes;
  write_score_csv(dir / "report.csv", report);
  write_score_summary(dir / "summary.csv", report);
  save_records(dir / "episodes.jsonl", records);
  std::printf("%s: %zu episodes, normalized %.2f +- %.2f, success %.3f (%s)\n", policy.c_str(),
              report.seeds.size(), report.normalized_mean, report.normalized_std,
              report.success_rate, dir.c_str());
  return 0;
}

int cmd_analyze(const Common& common) {
  auto cfg = resolve("analyze", common);
  const std::string what = run_value(cfg, "analyze.what", "");
  if (what != "rewards" && what != "consistency" && what != "scatter" && what != "strategy") {
    throw UsageError("--what must be one of rewards|consistency|scatter|strategy");
  }
  std::optional<RecordSet> records;
  if (cfg.has_run("analyze.records")) records = load_records(cfg.run.at("analyze.records"));
  std::optional<OfflineDataset> dataset;
  if (cfg.has_run("data.path")) dataset = load_dataset(cfg.run.at("data.path"));
  if (what == "strategy" && !dataset) throw UsageError("--what strategy needs --data");
  if (what != "strategy" && !records && !(what == "scatter" && dataset)) {
    throw UsageError("--what " + what + " needs --records");
  }

  const auto dir = make_run_dir(common, cfg);
  if (what == "rewards") {
    const auto bins = run_uint(cfg, "analyze.bins", 10);
    if (bins == 0) throw UsageError("--bins must be >= 1");
    const auto h = reward_histogram(records->episodes, bins);
    if (records->episodes.empty()) {
      write_histogram_csv(dir / "rewards.csv", Histogram{0.0, 1.0, {}});
    } else {
      write_histogram_csv(dir / "rewards.csv", h);
    }
    write_histogram_svg(dir / "rewards.svg", h, "per-step reward");
  } else if (what == "consistency") {
    const auto lookahead =
        run_uint(cfg, "analyze.lookahead", records->horizon ? records->horizon : 1);
    write_consistency_csv(dir / "consistency.csv", consistency_matrix(*records, lookahead));
  } else if (what == "scatter") {
    write_scatter_csv(dir / "scatter.csv", records ? state_reward_scatter(records->episodes)
                                                   : state_return_scatter(*dataset));
  } else {
    const auto advice = advise_strategy(*dataset, cfg.contrast);
    std::ofstream os(dir / "strategy.csv", std::ios::binary);
    if (!os) throw IoError("cannot write strategy report");
    os << "recommended,separation,high_count,low_count\n"
       << to_string(advice.recommended) << ',' << format_double(advice.separation) << ','
       << advice.high_count << ',' << advice.low_count << '\n';
  }
  std::printf("wrote %s analysis to %s\n", what.c_str(), dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cdiff: contrastive diffusion planning for offline RL"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  add_common(gen, common);
  bind<std::string>(gen, "--env", "env.maze", common, "maze JSON file or 'default'");
  bind<std::string>(gen, "--policy", "data.policy", common, "expert|medium|random");
  bind<std::size_t>(gen, "--episodes", "data.episodes", common, "episode count");
  bind<double>(gen, "--mix-expert-ratio", "data.mix_expert_ratio", common,
               "fraction of episodes replaced by expert episodes");
  bind<std::uint64_t>(gen, "--seed", "data.seed", common, "generation seed");

  auto* tr = app.add_subcommand("train", "train the planner models");
  add_common(tr, common);
  bind<std::string>(tr, "--data", "data.path", common, "dataset file")->required();
  bind<std::size_t>(tr, "--steps", "train.steps", common, "total optimizer steps");
  bind<std::string>(tr, "--ablation", "train.ablation", common,
                    "none|no-contrast|positives-only");
  bind<std::string>(tr, "--strategy", "contrast.strategy", common, "sr|srd");
  bind<std::uint64_t>(tr, "--seed", "train.seed", common, "training seed");
  bind<std::string>(tr, "--resume", "train.resume", common, "checkpoint to continue from");
  bind<std::size_t>(tr, "--checkpoint-every", "train.checkpoint_every", common,
                    "also checkpoint every K steps");

  auto* ev = app.add_subcommand("eval", "roll out a policy and score it");
  add_common(ev, common);
  bind<std::string>(ev, "--ckpt", "eval.checkpoint", common, "trained checkpoint");
  bind<std::string>(ev, "--env", "env.maze", common, "maze JSON file or 'default'");
  bind<std::size_t>(ev, "--seeds", "eval.seeds", common, "number of evaluation episodes");
  bind<std::uint64_t>(ev, "--seed-base", "eval.seed_base", common, "first evaluation seed");
  bind<double>(ev, "--rho", "planner.rho", common, "guidance scale");
  bind<std::string>(ev, "--policy", "eval.policy", common, "planner|expert|medium|random");
  bind<std::string>(ev, "--refs", "eval.refs", common, "score reference cache file");
  bind<std::size_t>(ev, "--threads", "eval.threads", common, "rollout worker count");
  bind<std::size_t>(ev, "--max-steps", "planner.max_episode_steps", common,
                    "episode step cap (0: environment horizon)");

  auto* an = app.add_subcommand("analyze", "histograms, consistency and scatter exports");
  add_common(an, common);
  bind<std::string>(an, "--records", "analyze.records", common, "episode records file");
  bind<std::string>(an, "--what", "analyze.what", common,
                    "rewards|consistency|scatter|strategy")
      ->required();
  bind<std::string>(an, "--data", "data.path", common, "dataset file (scatter, strategy)");
  bind<std::size_t>(an, "--bins", "analyze.bins", common, "histogram bins");
  bind<std::size_t>(an, "--lookahead", "analyze.lookahead", common, "consistency columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (tr->parsed()) return cmd_train(common);
    if (ev->parsed()) return cmd_eval(common);
    return cmd_analyze(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
