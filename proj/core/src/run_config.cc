#include "cdiff/run_config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cdiff/error.h"
#include "cdiff/hash.h"

namespace cdiff {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" +
                      v + "'");
  }
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item)));
  return out;
}

std::string from_sizes(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(xs[k]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CDIFF_DOUBLE(member)                                                      \
  Field {                                                                        \
    [](RunConfig& c, const std::string& k, const std::string& v) {               \
      c.member = to_double(k, v);                                                \
    },                                                                           \
        [](const RunConfig& c) { return format_double(c.member); }               \
  }
#define CDIFF_UINT(member)                                                        \
  Field {                                                                        \
    [](RunConfig& c, const std::string& k, const std::string& v) {               \
      c.member = static_cast<decltype(c.member)>(to_uint(k, v));                 \
    },                                                                           \
        [](const RunConfig& c) { return std::to_string(c.member); }              \
  }

const std::map<std::string, Field>& typed_fields() {
  static const std::map<std::string, Field> fields = {
      {"model.state_dim", CDIFF_UINT(model.state_dim)},
      {"model.action_dim", CDIFF_UINT(model.action_dim)},
      {"model.horizon", CDIFF_UINT(model.horizon)},
      {"model.embed_dim", CDIFF_UINT(model.embed_dim)},
      {"model.denoiser_hidden",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               c.model.denoiser_hidden = to_sizes(k, v);
             },
             [](const RunConfig& c) { return from_sizes(c.model.denoiser_hidden); }}},
      {"model.predictor_hidden",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               c.model.predictor_hidden = to_sizes(k, v);
             },
             [](const RunConfig& c) { return from_sizes(c.model.predictor_hidden); }}},
      {"model.schedule",
       Field{[](RunConfig& c, const std::string&, const std::string& v) {
               c.model.schedule = parse_schedule_kind(v);
             },
             [](const RunConfig& c) { return to_string(c.model.schedule); }}},
      {"model.diffusion_steps", CDIFF_UINT(model.diffusion_steps)},
      {"contrast.xi", CDIFF_DOUBLE(contrast.xi)},
      {"contrast.zeta", CDIFF_DOUBLE(contrast.zeta)},
      {"contrast.slope", CDIFF_DOUBLE(contrast.slope)},
      {"contrast.kappa", CDIFF_UINT(contrast.kappa)},
      {"contrast.temperature", CDIFF_DOUBLE(contrast.temperature)},
      {"contrast.strategy",
       Field{[](RunConfig& c, const std::string&, const std::string& v) {
               c.contrast.strategy = parse_strategy(v);
             },
             [](const RunConfig& c) { return to_string(c.contrast.strategy); }}},
      {"contrast.clusters", CDIFF_UINT(contrast.cluster_count)},
      {"contrast.top_m", CDIFF_UINT(contrast.transition_top_m)},
      {"contrast.latent_dim", CDIFF_UINT(contrast.latent_dim)},
      {"contrast.kmeans_batch", CDIFF_UINT(contrast.kmeans_batch)},
      {"contrast.kmeans_epochs", CDIFF_UINT(contrast.kmeans_epochs)},
      {"train.lambda_d", CDIFF_DOUBLE(train.lambda_d)},
      {"train.lambda_v", CDIFF_DOUBLE(train.lambda_v)},
      {"train.lambda_c", CDIFF_DOUBLE(train.lambda_c)},
      {"train.steps", CDIFF_UINT(train.steps)},
      {"train.batch_size", CDIFF_UINT(train.batch_size)},
      {"train.learning_rate", CDIFF_DOUBLE(train.learning_rate)},
      {"train.seed", CDIFF_UINT(train.seed)},
      {"train.ablation",
       Field{[](RunConfig& c, const std::string&, const std::string& v) {
               c.train.ablation = parse_ablation(v);
             },
             [](const RunConfig& c) { return to_string(c.train.ablation); }}},
      {"train.checkpoint_every", CDIFF_UINT(train.checkpoint_every)},
      {"planner.rho", CDIFF_DOUBLE(planner.rho)},
      {"planner.max_episode_steps", CDIFF_UINT(planner.max_episode_steps)},
      {"returns.eta", CDIFF_DOUBLE(returns.eta)},
      {"returns.gamma", CDIFF_DOUBLE(returns.gamma)},
      {"eval.threads", CDIFF_UINT(eval.threads)},
  };
  return fields;
}

#undef CDIFF_DOUBLE
#undef CDIFF_UINT

// Run-level keys stored verbatim.
const std::vector<std::string>& run_keys() {
  static const std::vector<std::string> keys = {
      "analyze.bins",      "analyze.lookahead", "analyze.records", "analyze.what",
      "command",           "data.episodes",     "data.mix_expert_ratio",
      "data.path",         "data.policy",       "data.seed",       "env.maze",
      "eval.checkpoint",   "eval.policy",       "eval.refs",       "eval.seed_base",
      "eval.seeds",        "train.resume"};
  return keys;
}

bool is_run_key(const std::string& key) {
  const auto& keys = run_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& fields = typed_fields();
  if (const auto it = fields.find(key); it != fields.end()) {
    try {
      it->second.set(*this, key, value);
    } catch (const UsageError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
    return;
  }
  if (is_run_key(key)) {
    run[key] = value;
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  const auto& fields = typed_fields();
  if (const auto it = fields.find(key); it != fields.end()) return it->second.get(*this);
  if (const auto it = run.find(key); it != run.end()) return it->second;
  throw ConfigError("config key '" + key + "' is not set");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : typed_fields()) out.push_back(k);
  for (const auto& k : run_keys()) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

std::string RunConfig::serialize() const {
  std::map<std::string, std::string> all = run;
  for (const auto& [k, f] : typed_fields()) all[k] = f.get(*this);
  std::string out;
  for (const auto& [k, v] : all) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::fingerprint() const { return hex64(fnv1a64(serialize())); }

namespace {

void apply_lines(RunConfig& c, std::istream& is, const std::string& origin) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  apply_lines(c, is, "config");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig c;
  c.merge_file(path);
  return c;
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path.string() + "'");
  apply_lines(*this, is, path.string());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write config '" + path.string() + "'");
  os << serialize();
}

}  // namespace cdiff
