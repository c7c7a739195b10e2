#include "cdiff/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cdiff/error.h"

namespace cdiff {

using nlohmann::json;

void ReturnConfig::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0) || !(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("return discounts eta and gamma must lie in [0, 1]");
  }
}

std::vector<double> compute_state_returns(std::span<const double> rewards,
                                          double eta) {
  std::vector<double> v(rewards.size());
  double next = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    v[t] = t + 1 == rewards.size() ? rewards[t] : rewards[t] + eta * next;
    next = v[t];
  }
  return v;
}

namespace {

std::vector<double> rewards_of(const Episode& episode) {
  std::vector<double> r;
  r.reserve(episode.size());
  for (const auto& tr : episode) r.push_back(tr.reward);
  return r;
}

}  // namespace

std::vector<double> compute_state_returns(const Episode& episode,
                                          const ReturnConfig& cfg) {
  if (episode.empty()) throw UsageError("episode must be non-empty");
  return compute_state_returns(rewards_of(episode), cfg.eta);
}

double trajectory_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

double trajectory_return(const Episode& episode, const ReturnConfig& cfg) {
  if (episode.empty()) throw UsageError("episode must be non-empty");
  return trajectory_return(rewards_of(episode), cfg.gamma);
}

// ---------------------------------------------------------------------------
// Normalization

std::vector<double> NormStats::normalize_state(std::span<const double> s) const {
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    out[k] = (s[k] - state_mean[k]) / state_std[k];
  }
  return out;
}

std::vector<double> NormStats::denormalize_state(std::span<const double> s) const {
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    out[k] = s[k] * state_std[k] + state_mean[k];
  }
  return out;
}

std::vector<double> NormStats::normalize_action(std::span<const double> a) const {
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    out[k] = (a[k] - action_mean[k]) / action_std[k];
  }
  return out;
}

std::vector<double> NormStats::denormalize_action(std::span<const double> a) const {
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    out[k] = a[k] * action_std[k] + action_mean[k];
  }
  return out;
}

namespace {

template <typename StateFn, typename ActionFn>
std::vector<double> map_window(std::span<const double> w, std::size_t sd,
                               std::size_t ad, StateFn sf, ActionFn af) {
  const std::size_t pair = sd + ad;
  if (pair == 0 || w.size() % pair != 0) {
    throw DimensionError("window size is not a multiple of state + action dims");
  }
  std::vector<double> out;
  out.reserve(w.size());
  for (std::size_t p = 0; p < w.size(); p += pair) {
    const auto s = sf(w.subspan(p, sd));
    const auto a = af(w.subspan(p + sd, ad));
    out.insert(out.end(), s.begin(), s.end());
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

}  // namespace

std::vector<double> NormStats::normalize_window(std::span<const double> w) const {
  return map_window(
      w, state_mean.size(), action_mean.size(),
      [this](auto s) { return normalize_state(s); },
      [this](auto a) { return normalize_action(a); });
}

std::vector<double> NormStats::denormalize_window(std::span<const double> w) const {
  return map_window(
      w, state_mean.size(), action_mean.size(),
      [this](auto s) { return denormalize_state(s); },
      [this](auto a) { return denormalize_action(a); });
}

double NormStats::scale_return(double v) const {
  return (v - return_min) / (return_max - return_min);
}

double NormStats::unscale_return(double scaled) const {
  return scaled * (return_max - return_min) + return_min;
}

namespace {

void column_stats(const std::vector<const std::vector<double>*>& rows,
                  std::size_t dim, std::vector<double>& mean,
                  std::vector<double>& std_dev, std::vector<bool>& degenerate) {
  mean.assign(dim, 0.0);
  std_dev.assign(dim, 0.0);
  degenerate.assign(dim, false);
  const double n = static_cast<double>(rows.size());
  for (const auto* r : rows) {
    for (std::size_t k = 0; k < dim; ++k) mean[k] += (*r)[k];
  }
  for (auto& m : mean) m /= n;
  for (const auto* r : rows) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = (*r)[k] - mean[k];
      std_dev[k] += d * d;
    }
  }
  for (std::size_t k = 0; k < dim; ++k) {
    std_dev[k] = std::sqrt(std_dev[k] / n);
    if (std_dev[k] < kStdFloor) {
      std_dev[k] = kStdFloor;
      degenerate[k] = true;
    }
  }
}

}  // namespace

NormStats compute_norm_stats(const std::vector<Episode>& episodes,
                             const std::vector<std::vector<double>>& returns) {
  std::vector<const std::vector<double>*> states;
  std::vector<const std::vector<double>*> actions;
  for (const auto& ep : episodes) {
    for (const auto& tr : ep) {
      states.push_back(&tr.state);
      actions.push_back(&tr.action);
    }
  }
  if (states.empty()) throw UsageError("cannot normalize an empty dataset");
  NormStats stats;
  column_stats(states, states.front()->size(), stats.state_mean, stats.state_std,
               stats.state_degenerate);
  column_stats(actions, actions.front()->size(), stats.action_mean,
               stats.action_std, stats.action_degenerate);
  stats.return_min = std::numeric_limits<double>::infinity();
  stats.return_max = -std::numeric_limits<double>::infinity();
  for (const auto& ep : returns) {
    for (double v : ep) {
      stats.return_min = std::min(stats.return_min, v);
      stats.return_max = std::max(stats.return_max, v);
    }
  }
  if (!(stats.return_max > stats.return_min)) {
    stats.return_degenerate = true;
    stats.return_max = stats.return_min + 1.0;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Dataset

OfflineDataset OfflineDataset::build(std::vector<Episode> episodes,
                                     ReturnConfig cfg) {
  cfg.validate();
  if (episodes.empty()) throw UsageError("dataset must contain at least one episode");
  const std::size_t sd = episodes.front().empty() ? 0 : episodes.front()[0].state.size();
  const std::size_t ad = episodes.front().empty() ? 0 : episodes.front()[0].action.size();
  std::vector<std::vector<double>> returns;
  returns.reserve(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    if (episodes[e].empty()) {
      throw UsageError("episode " + std::to_string(e) + " is empty");
    }
    for (const auto& tr : episodes[e]) {
      if (tr.state.size() != sd || tr.next_state.size() != sd ||
          tr.action.size() != ad) {
        throw DimensionError("inconsistent transition dimensions in episode " +
                             std::to_string(e));
      }
    }
    returns.push_back(compute_state_returns(episodes[e], cfg));
  }
  NormStats norm = compute_norm_stats(episodes, returns);
  return from_parts(sd, ad, cfg, std::move(episodes), std::move(returns),
                    std::move(norm));
}

OfflineDataset OfflineDataset::from_parts(std::size_t state_dim,
                                          std::size_t action_dim, ReturnConfig cfg,
                                          std::vector<Episode> episodes,
                                          std::vector<std::vector<double>> returns,
                                          NormStats norm) {
  if (episodes.empty()) throw UsageError("dataset must contain at least one episode");
  if (state_dim == 0 || action_dim == 0) {
    throw DimensionError("state and action dimensions must be positive");
  }
  OfflineDataset ds;
  ds.state_dim_ = state_dim;
  ds.action_dim_ = action_dim;
  ds.returns_cfg_ = cfg;
  ds.episodes_ = std::move(episodes);
  ds.returns_ = std::move(returns);
  ds.norm_ = std::move(norm);
  return ds;
}

std::size_t OfflineDataset::num_states() const {
  std::size_t n = 0;
  for (const auto& ep : episodes_) n += ep.size();
  return n;
}

std::vector<TrajWindow> slice_windows(const OfflineDataset& dataset,
                                      std::size_t horizon) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  std::vector<TrajWindow> windows;
  windows.reserve(dataset.num_states());
  for (std::size_t e = 0; e < dataset.episodes().size(); ++e) {
    const Episode& ep = dataset.episodes()[e];
    for (std::size_t t = 0; t < ep.size(); ++t) {
      TrajWindow w;
      w.episode = e;
      w.start = t;
      w.start_return = dataset.state_returns()[e][t];
      w.values.reserve((horizon + 1) * (dataset.state_dim() + dataset.action_dim()));
      for (std::size_t k = 0; k <= horizon; ++k) {
        std::size_t idx = t + k;
        if (idx >= ep.size()) {
          idx = ep.size() - 1;
          ++w.padded;
        }
        w.values.insert(w.values.end(), ep[idx].state.begin(), ep[idx].state.end());
        w.values.insert(w.values.end(), ep[idx].action.begin(), ep[idx].action.end());
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

// ---------------------------------------------------------------------------
// File format

std::string format_double(double v) {
  if (!std::isfinite(v)) throw NumericError("cannot serialize non-finite value");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

constexpr int kFormatVersion = 1;

void write_array(std::ostringstream& os, std::span<const double> values) {
  os << '[';
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) os << ',';
    os << format_double(values[k]);
  }
  os << ']';
}

void write_bools(std::ostringstream& os, const std::vector<bool>& values) {
  os << '[';
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) os << ',';
    os << (values[k] ? "true" : "false");
  }
  os << ']';
}

template <typename Get>
void write_nested(std::ostringstream& os, const Episode& ep, Get get) {
  os << '[';
  for (std::size_t t = 0; t < ep.size(); ++t) {
    if (t) os << ',';
    write_array(os, get(ep[t]));
  }
  os << ']';
}

std::vector<double> as_doubles(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string("field '") + what + "' is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) {
      throw ParseError(std::string("field '") + what + "' holds a non-number");
    }
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<bool> as_bools(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string("field '") + what + "' is not an array");
  std::vector<bool> out;
  for (const auto& x : j) out.push_back(x.get<bool>());
  return out;
}

}  // namespace

std::string encode_dataset(const OfflineDataset& ds) {
  if (ds.episodes().empty()) throw UsageError("refusing to write an empty dataset");
  const NormStats& n = ds.norm();
  std::ostringstream os;
  os << "{\"format\":\"cdiff-dataset\",\"version\":" << kFormatVersion
     << ",\"state_dim\":" << ds.state_dim() << ",\"action_dim\":" << ds.action_dim()
     << ",\"episodes\":" << ds.episodes().size()
     << ",\"transitions\":" << ds.num_states()
     << ",\"returns\":{\"eta\":" << format_double(ds.return_config().eta)
     << ",\"gamma\":" << format_double(ds.return_config().gamma) << "}"
     << ",\"norm\":{\"state_mean\":";
  write_array(os, n.state_mean);
  os << ",\"state_std\":";
  write_array(os, n.state_std);
  os << ",\"action_mean\":";
  write_array(os, n.action_mean);
  os << ",\"action_std\":";
  write_array(os, n.action_std);
  os << ",\"state_degenerate\":";
  write_bools(os, n.state_degenerate);
  os << ",\"action_degenerate\":";
  write_bools(os, n.action_degenerate);
  os << ",\"return_min\":" << format_double(n.return_min)
     << ",\"return_max\":" << format_double(n.return_max)
     << ",\"return_degenerate\":" << (n.return_degenerate ? "true" : "false")
     << "}}\n";
  for (std::size_t e = 0; e < ds.episodes().size(); ++e) {
    const Episode& ep = ds.episodes()[e];
    os << "{\"states\":";
    write_nested(os, ep, [](const Transition& t) -> std::span<const double> { return t.state; });
    os << ",\"actions\":";
    write_nested(os, ep, [](const Transition& t) -> std::span<const double> { return t.action; });
    os << ",\"next_states\":";
    write_nested(os, ep, [](const Transition& t) -> std::span<const double> { return t.next_state; });
    std::vector<double> rewards;
    std::vector<bool> dones;
    for (const auto& tr : ep) {
      rewards.push_back(tr.reward);
      dones.push_back(tr.done);
    }
    os << ",\"rewards\":";
    write_array(os, rewards);
    os << ",\"dones\":";
    write_bools(os, dones);
    os << ",\"returns\":";
    write_array(os, ds.state_returns()[e]);
    os << "}\n";
  }
  return os.str();
}

OfflineDataset decode_dataset(const std::string& text) {
  std::size_t line_no = 0;
  std::size_t offset = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("dataset line " + std::to_string(line_no) + " (byte offset " +
                      std::to_string(offset) + "): " + msg);
  };

  std::vector<std::string> lines;
  std::vector<std::size_t> line_offsets;
  {
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      if (end > pos) {
        lines.push_back(text.substr(pos, end - pos));
        line_offsets.push_back(pos);
      }
      pos = end + 1;
    }
  }
  if (lines.empty()) throw ParseError("dataset file is empty");

  json header;
  line_no = 1;
  offset = 0;
  try {
    header = json::parse(lines[0]);
  } catch (const json::parse_error& e) {
    offset = e.byte;
    throw fail(e.what());
  }
  std::size_t sd = 0, ad = 0, n_episodes = 0;
  ReturnConfig cfg;
  NormStats norm;
  try {
    if (header.value("format", "") != "cdiff-dataset") throw fail("not a cdiff dataset");
    if (header.at("version").get<int>() != kFormatVersion) {
      throw fail("unsupported format version");
    }
    sd = header.at("state_dim").get<std::size_t>();
    ad = header.at("action_dim").get<std::size_t>();
    n_episodes = header.at("episodes").get<std::size_t>();
    cfg.eta = header.at("returns").at("eta").get<double>();
    cfg.gamma = header.at("returns").at("gamma").get<double>();
    const json& nj = header.at("norm");
    norm.state_mean = as_doubles(nj.at("state_mean"), "state_mean");
    norm.state_std = as_doubles(nj.at("state_std"), "state_std");
    norm.action_mean = as_doubles(nj.at("action_mean"), "action_mean");
    norm.action_std = as_doubles(nj.at("action_std"), "action_std");
    norm.state_degenerate = as_bools(nj.at("state_degenerate"), "state_degenerate");
    norm.action_degenerate = as_bools(nj.at("action_degenerate"), "action_degenerate");
    norm.return_min = nj.at("return_min").get<double>();
    norm.return_max = nj.at("return_max").get<double>();
    norm.return_degenerate = nj.at("return_degenerate").get<bool>();
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  if (n_episodes == 0) throw fail("dataset declares zero episodes");
  std::vector<Episode> episodes;
  std::vector<std::vector<double>> returns;
  for (std::size_t e = 0; e + 1 < lines.size(); ++e) {
    line_no = e + 2;
    offset = line_offsets[e + 1];
    json j;
    try {
      j = json::parse(lines[e + 1]);
    } catch (const json::parse_error& err) {
      offset += err.byte;
      throw fail(err.what());
    }
    try {
      const json& states = j.at("states");
      const json& actions = j.at("actions");
      const json& next_states = j.at("next_states");
      auto rewards = as_doubles(j.at("rewards"), "rewards");
      auto dones = as_bools(j.at("dones"), "dones");
      auto rets = as_doubles(j.at("returns"), "returns");
      const std::size_t len = rewards.size();
      if (len == 0 || states.size() != len || actions.size() != len ||
          next_states.size() != len || dones.size() != len || rets.size() != len) {
        throw fail("episode arrays have inconsistent lengths");
      }
      Episode ep(len);
      for (std::size_t t = 0; t < len; ++t) {
        ep[t].state = as_doubles(states[t], "states");
        ep[t].action = as_doubles(actions[t], "actions");
        ep[t].next_state = as_doubles(next_states[t], "next_states");
        ep[t].reward = rewards[t];
        ep[t].done = dones[t];
        if (ep[t].state.size() != sd || ep[t].next_state.size() != sd ||
            ep[t].action.size() != ad) {
          throw fail("transition dimension mismatch at step " + std::to_string(t));
        }
      }
      episodes.push_back(std::move(ep));
      returns.push_back(std::move(rets));
    } catch (const json::exception& err) {
      throw fail(err.what());
    }
  }
  if (episodes.size() != n_episodes) {
    line_no = 1;
    offset = 0;
    throw fail("header declares " + std::to_string(n_episodes) + " episodes, file has " +
               std::to_string(episodes.size()));
  }
  return OfflineDataset::from_parts(sd, ad, cfg, std::move(episodes),
                                    std::move(returns), std::move(norm));
}

void save_dataset(const std::filesystem::path& path, const OfflineDataset& dataset) {
  const std::string text = encode_dataset(dataset);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_dataset(ss.str());
}

}  // namespace cdiff
