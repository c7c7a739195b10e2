#include "cdiff/planner.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "cdiff/dataset.h"
#include "cdiff/error.h"

namespace cdiff {

void PlannerConfig::validate() const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("rho must be finite and >= 0");
}

Plan plan(const ModelBundle& models, std::span<const double> observation,
          const PlannerConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto& mc = models.config;
  if (observation.size() != mc.state_dim) {
    throw DimensionError("observation has dimension " + std::to_string(observation.size()) +
                         ", expected " + std::to_string(mc.state_dim));
  }
  const auto obs = models.norm.normalize_state(observation);
  const std::size_t n = models.schedule.steps();

  NoisyTrajectory x{rng.normal_vector(mc.window_size()), n};
  apply_condition(x, obs, mc.state_dim);
  std::optional<Guide> guide;
  if (cfg.rho > 0.0) guide = Guide{&models.predictor, cfg.rho};
  for (std::size_t i = n; i >= 1; --i) {
    x = denoise_step(x, i, models.denoiser, mc.embed_dim, guide, models.schedule, rng);
    apply_condition(x, obs, mc.state_dim);
  }

  Plan p;
  p.window = models.norm.denormalize_window(x.values);
  std::copy(observation.begin(), observation.end(), p.window.begin());
  p.normalized = std::move(x.values);
  return p;
}

Action act(const ModelBundle& models, std::span<const double> observation,
           const PlannerConfig& cfg, double max_action, Rng& rng) {
  Action out;
  out.plan = plan(models, observation, cfg, rng);
  const auto sd = models.config.state_dim;
  const auto ad = models.config.action_dim;
  out.action.assign(out.plan.window.begin() + static_cast<std::ptrdiff_t>(sd),
                    out.plan.window.begin() + static_cast<std::ptrdiff_t>(sd + ad));
  for (double& a : out.action) a = std::clamp(a, -max_action, max_action);
  return out;
}

PlannerPolicy::PlannerPolicy(const ModelBundle& models, PlannerConfig cfg,
                             double max_action)
    : models_(models), cfg_(cfg), max_action_(max_action) {
  cfg_.validate();
}

std::vector<double> PlannerPolicy::act(std::span<const double> state, Rng& rng) {
  auto a = cdiff::act(models_, state, cfg_, max_action_, rng);
  last_plan_ = std::move(a.plan.window);
  return std::move(a.action);
}

EpisodeRecord rollout(const PointMazeDesk& env, Policy& policy, std::size_t max_steps,
                      std::uint64_t seed, double gamma) {
  if (max_steps == 0) max_steps = env.layout().horizon;
  EpisodeRecord rec;
  rec.seed = seed;
  Rng rng(mix_seed(seed, 1));
  policy.reset();
  auto state = env.reset(seed);
  rec.states.push_back(state);
  double discount = 1.0;
  for (std::size_t t = 0; t < max_steps; ++t) {
    const auto action = env.clip_action(policy.act(state, rng));
    if (const auto* p = policy.last_plan()) rec.planned.push_back(*p);
    auto step = env.step(state, action);
    rec.actions.push_back(action);
    rec.rewards.push_back(step.reward);
    rec.discounted_return += discount * step.reward;
    discount *= gamma;
    state = std::move(step.next_state);
    rec.states.push_back(state);
    if (step.done) {
      rec.reached_goal = step.reward > 0.0;
      break;
    }
  }
  return rec;
}

namespace {

constexpr const char* kRecordsFormat = "cdiff-records";

void append_array(std::string& out, std::span<const double> xs) {
  out += '[';
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ',';
    out += format_double(xs[k]);
  }
  out += ']';
}

void append_rows(std::string& out, const std::vector<std::vector<double>>& rows) {
  out += '[';
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k) out += ',';
    append_array(out, rows[k]);
  }
  out += ']';
}

}  // namespace

std::string encode_records(const RecordSet& records) {
  std::string out = "{\"format\":\"" + std::string(kRecordsFormat) +
                    "\",\"version\":1,\"state_dim\":" + std::to_string(records.state_dim) +
                    ",\"action_dim\":" + std::to_string(records.action_dim) +
                    ",\"horizon\":" + std::to_string(records.horizon) +
                    ",\"episodes\":" + std::to_string(records.episodes.size());
  if (!records.state_mean.empty()) {
    out += ",\"state_mean\":";
    append_array(out, records.state_mean);
    out += ",\"state_std\":";
    append_array(out, records.state_std);
  }
  out += "}\n";
  for (const auto& e : records.episodes) {
    out += "{\"seed\":" + std::to_string(e.seed) + ",\"states\":";
    append_rows(out, e.states);
    out += ",\"actions\":";
    append_rows(out, e.actions);
    out += ",\"rewards\":";
    append_array(out, e.rewards);
    out += ",\"planned\":";
    append_rows(out, e.planned);
    out += ",\"reached_goal\":";
    out += e.reached_goal ? "true" : "false";
    out += ",\"return\":" + format_double(e.discounted_return) + "}\n";
  }
  return out;
}

RecordSet decode_records(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  RecordSet rs;
  bool have_header = false;
  std::size_t expected = 0;
  try {
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        if (j.value("format", "") != kRecordsFormat || j.value("version", 0) != 1) {
          throw ParseError("line 1: not a cdiff-records v1 file");
        }
        rs.state_dim = j.at("state_dim").get<std::size_t>();
        rs.action_dim = j.at("action_dim").get<std::size_t>();
        rs.horizon = j.at("horizon").get<std::size_t>();
        expected = j.at("episodes").get<std::size_t>();
        if (j.contains("state_mean")) {
          rs.state_mean = j.at("state_mean").get<std::vector<double>>();
          rs.state_std = j.at("state_std").get<std::vector<double>>();
        }
        have_header = true;
        continue;
      }
      EpisodeRecord e;
      e.seed = j.at("seed").get<std::uint64_t>();
      e.states = j.at("states").get<std::vector<std::vector<double>>>();
      e.actions = j.at("actions").get<std::vector<std::vector<double>>>();
      e.rewards = j.at("rewards").get<std::vector<double>>();
      e.planned = j.at("planned").get<std::vector<std::vector<double>>>();
      e.reached_goal = j.at("reached_goal").get<bool>();
      e.discounted_return = j.at("return").get<double>();
      if (e.states.size() != e.rewards.size() + 1 || e.actions.size() != e.rewards.size() ||
          (!e.planned.empty() && e.planned.size() != e.rewards.size())) {
        throw ParseError("line " + std::to_string(line_no) + ": inconsistent episode lengths");
      }
      rs.episodes.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
  }
  if (!have_header) throw ParseError("records file has no header");
  if (rs.episodes.size() != expected) {
    throw ParseError("records header announces " + std::to_string(expected) +
                     " episodes, found " + std::to_string(rs.episodes.size()));
  }
  return rs;
}

void save_records(const std::filesystem::path& path, const RecordSet& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write records '" + path.string() + "'");
  os << encode_records(records);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

RecordSet load_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open records '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_records(ss.str());
}

}  // namespace cdiff
