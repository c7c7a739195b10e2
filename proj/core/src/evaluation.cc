#include "cdiff/evaluation.h"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "cdiff/error.h"
#include "cdiff/hash.h"

namespace cdiff {

namespace {

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_var(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  return os;
}

}  // namespace

double normalized_score(double score, const ScoreRefs& refs) {
  const double span = refs.expert_ref - refs.random_ref;
  if (!(std::abs(span) > 0.0)) {
    throw NumericError("score anchors coincide; normalized score undefined");
  }
  return 100.0 * (score - refs.random_ref) / span;
}

std::string env_fingerprint(const PointMazeDesk& env) {
  return hex64(fnv1a64(env.layout().fingerprint()));
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), first);
  return seeds;
}

ScoreReport evaluate(const PolicyFactory& make_policy, const PointMazeDesk& env,
                     const std::vector<std::uint64_t>& seeds, const ScoreRefs& refs,
                     const EvalConfig& cfg, const std::string& fingerprint) {
  if (seeds.empty()) throw ConfigError("evaluation needs at least one seed");
  ScoreReport r;
  r.seeds = seeds;
  r.fingerprint = fingerprint;
  r.episodes.resize(seeds.size());

  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    try {
      auto policy = make_policy();
      for (std::size_t k = next++; k < seeds.size(); k = next++) {
        r.episodes[k] = rollout(env, *policy, cfg.max_steps, seeds[k], cfg.gamma);
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = seeds.size();
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::size_t hits = 0;
  for (const auto& e : r.episodes) {
    r.returns.push_back(e.discounted_return);
    r.normalized.push_back(normalized_score(e.discounted_return, refs));
    hits += e.reached_goal ? 1 : 0;
  }
  r.mean = mean_of(r.returns);
  r.std = std::sqrt(sample_var(r.returns, r.mean));
  r.normalized_mean = mean_of(r.normalized);
  r.normalized_std = std::sqrt(sample_var(r.normalized, r.normalized_mean));
  r.success_rate = static_cast<double>(hits) / static_cast<double>(seeds.size());
  return r;
}

ScoreReport evaluate_planner(const ModelBundle& models, const PlannerConfig& planner,
                             const PointMazeDesk& env,
                             const std::vector<std::uint64_t>& seeds,
                             const ScoreRefs& refs, const EvalConfig& cfg,
                             const std::string& fingerprint) {
  const double bound = env.layout().max_action;
  return evaluate(
      [&] { return std::make_unique<PlannerPolicy>(models, planner, bound); }, env, seeds,
      refs, cfg, fingerprint);
}

ScoreRefs measure_refs(const PointMazeDesk& env, std::size_t episodes,
                       const EvalConfig& cfg) {
  if (episodes == 0) throw ConfigError("reference measurement needs episodes >= 1");
  const auto seeds = seed_range(0, episodes);
  ScoreRefs unit{0.0, 1.0, episodes, env_fingerprint(env)};
  auto run = [&](BehaviorKind kind) {
    return evaluate([&] { return std::make_unique<BehaviorPolicy>(kind, env.layout()); },
                    env, seeds, unit, cfg)
        .mean;
  };
  ScoreRefs refs;
  refs.random_ref = run(BehaviorKind::kRandom);
  refs.expert_ref = run(BehaviorKind::kExpert);
  refs.episodes = episodes;
  refs.env_fingerprint = env_fingerprint(env);
  return refs;
}

void save_refs(const std::filesystem::path& path, const ScoreRefs& refs) {
  auto os = open_out(path);
  os << "random_ref=" << format_double(refs.random_ref) << '\n'
     << "expert_ref=" << format_double(refs.expert_ref) << '\n'
     << "episodes=" << refs.episodes << '\n'
     << "env=" << refs.env_fingerprint << '\n';
}

ScoreRefs load_refs(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open reference file '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ScoreRefs refs;
  try {
    refs.random_ref = std::stod(kv.at("random_ref"));
    refs.expert_ref = std::stod(kv.at("expert_ref"));
    refs.episodes = std::stoull(kv.at("episodes"));
    refs.env_fingerprint = kv.at("env");
  } catch (const std::exception&) {
    throw ParseError("malformed reference file '" + path.string() + "'");
  }
  return refs;
}

ScoreRefs load_or_measure_refs(const std::filesystem::path& path,
                               const PointMazeDesk& env, std::size_t episodes,
                               const EvalConfig& cfg) {
  if (std::filesystem::exists(path)) {
    try {
      auto refs = load_refs(path);
      if (refs.env_fingerprint == env_fingerprint(env) && refs.episodes == episodes) {
        return refs;
      }
    } catch (const ParseError&) {
    }
  }
  auto refs = measure_refs(env, episodes, cfg);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_refs(path, refs);
  return refs;
}

void write_score_csv(const std::filesystem::path& path, const ScoreReport& report) {
  auto os = open_out(path);
  os << "seed,return,normalized,reached_goal\n";
  for (std::size_t k = 0; k < report.seeds.size(); ++k) {
    os << report.seeds[k] << ',' << format_double(report.returns[k]) << ','
       << format_double(report.normalized[k]) << ','
       << (report.episodes[k].reached_goal ? 1 : 0) << '\n';
  }
}

void write_score_summary(const std::filesystem::path& path, const ScoreReport& report) {
  auto os = open_out(path);
  os << "metric,value\n"
     << "episodes," << report.seeds.size() << '\n'
     << "mean," << format_double(report.mean) << '\n'
     << "std," << format_double(report.std) << '\n'
     << "normalized_mean," << format_double(report.normalized_mean) << '\n'
     << "normalized_std," << format_double(report.normalized_std) << '\n'
     << "success_rate," << format_double(report.success_rate) << '\n'
     << "fingerprint," << report.fingerprint << '\n';
}

WelchResult welch_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ConfigError("Welch test needs at least two values per sample");
  }
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_var(a, ma) / static_cast<double>(a.size());
  const double vb = sample_var(b, mb) / static_cast<double>(b.size());
  WelchResult r;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    // Both samples constant: the ordering of the means is certain.
    r.t = ma > mb ? std::numeric_limits<double>::infinity()
                  : (ma < mb ? -std::numeric_limits<double>::infinity() : 0.0);
    r.df = static_cast<double>(a.size() + b.size() - 2);
    r.p_value = ma > mb ? 0.0 : (ma < mb ? 1.0 : 0.5);
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  const double den = va * va / static_cast<double>(a.size() - 1) +
                     vb * vb / static_cast<double>(b.size() - 1);
  r.df = se2 * se2 / den;
  boost::math::students_t dist(r.df);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

std::vector<AblationVariant> standard_variants() {
  return {{"full-SR", Ablation::kFull, SamplingStrategy::kSR},
          {"full-SRD", Ablation::kFull, SamplingStrategy::kSRD},
          {"no-contrast", Ablation::kNoContrast, SamplingStrategy::kSR},
          {"positives-only", Ablation::kPositivesOnly, SamplingStrategy::kSR}};
}

AblationTable compare_ablations(const OfflineDataset& dataset,
                                const std::vector<AblationVariant>& variants,
                                const AblationSetup& setup, const PointMazeDesk& env,
                                const std::vector<std::uint64_t>& seeds,
                                const ScoreRefs& refs) {
  AblationTable table;
  for (const auto& v : variants) {
    auto contrast = setup.contrast;
    contrast.strategy = v.strategy;
    auto train_cfg = setup.train;
    train_cfg.ablation = v.ablation;
    auto result = train(dataset, setup.model, contrast, train_cfg, std::nullopt);
    AblationRow row;
    row.variant = v;
    row.report = evaluate_planner(result.state.models, setup.planner, env, seeds, refs,
                                  setup.eval, v.name);
    row.training_log = std::move(result.log);
    table.rows.push_back(std::move(row));
  }
  const AblationRow* full = nullptr;
  const AblationRow* plain = nullptr;
  for (const auto& row : table.rows) {
    if (row.variant.ablation == Ablation::kFull &&
        row.variant.strategy == SamplingStrategy::kSR && !full) {
      full = &row;
    }
    if (row.variant.ablation == Ablation::kNoContrast && !plain) plain = &row;
  }
  if (full && plain && seeds.size() >= 2) {
    table.full_vs_no_contrast = welch_one_sided(full->report.normalized, plain->report.normalized);
  }
  return table;
}

void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table) {
  auto os = open_out(path);
  os << "variant,mean,std,normalized_mean,normalized_std,success_rate\n";
  for (const auto& row : table.rows) {
    const auto& r = row.report;
    os << row.variant.name << ',' << format_double(r.mean) << ',' << format_double(r.std)
       << ',' << format_double(r.normalized_mean) << ',' << format_double(r.normalized_std)
       << ',' << format_double(r.success_rate) << '\n';
  }
}

}  // namespace cdiff
