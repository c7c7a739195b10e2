#include "cdiff/analysis.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "cdiff/error.h"

namespace cdiff {

namespace {

constexpr double kNormFloor = 1e-12;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  return os;
}

// Evenly strided subset of at most `cap` indices.
std::vector<std::size_t> thin(const std::vector<std::size_t>& ids, std::size_t cap) {
  if (ids.size() <= cap) return ids;
  std::vector<std::size_t> out;
  out.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) out.push_back(ids[k * ids.size() / cap]);
  return out;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::size_t Histogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

double Histogram::bin_lo(std::size_t b) const {
  return lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(counts.size());
}

double Histogram::bin_hi(std::size_t b) const { return bin_lo(b + 1); }

double Histogram::top_bin_mass() const {
  const auto n = total();
  if (n == 0 || counts.empty()) return 0.0;
  return static_cast<double>(counts.back()) / static_cast<double>(n);
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!(hi > lo)) throw ConfigError("histogram range must satisfy lo < hi");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double v : values) {
    if (std::isnan(v)) throw NumericError("NaN value in histogram input");
    const double pos = (v - lo) / (hi - lo) * static_cast<double>(bins);
    const auto b = pos <= 0.0 ? std::size_t{0}
                              : std::min(bins - 1, static_cast<std::size_t>(pos));
    ++h.counts[b];
  }
  return h;
}

Histogram reward_histogram(const std::vector<EpisodeRecord>& episodes, std::size_t bins,
                           double lo, double hi) {
  std::vector<double> rewards;
  for (const auto& e : episodes) rewards.insert(rewards.end(), e.rewards.begin(), e.rewards.end());
  return histogram(rewards, bins, lo, hi);
}

double ConsistencyMatrix::column_mean(std::size_t j) const {
  if (j == 0 || j > lookahead) throw IndexError("lookahead column out of range");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : rows) {
    if (std::isnan(row[j - 1])) continue;
    sum += row[j - 1];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

ConsistencyMatrix consistency_matrix(const std::vector<EpisodeRecord>& episodes,
                                     std::size_t state_dim, std::size_t action_dim,
                                     std::size_t lookahead, std::span<const double> center,
                                     std::span<const double> scale) {
  if (lookahead == 0) throw ConfigError("lookahead must be >= 1");
  if (!center.empty() && (center.size() != state_dim || scale.size() != state_dim)) {
    throw DimensionError("consistency centering does not match the state dimension");
  }
  const std::size_t pair = state_dim + action_dim;
  auto transform = [&](std::span<const double> s) {
    std::vector<double> out(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(state_dim));
    if (!center.empty()) {
      for (std::size_t d = 0; d < state_dim; ++d) out[d] = (out[d] - center[d]) / scale[d];
    }
    return out;
  };
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };

  ConsistencyMatrix m;
  m.lookahead = lookahead;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : episodes) {
    const std::size_t len = e.length();
    if (e.planned.size() != len) {
      throw UsageError("consistency analysis needs planned windows for every step");
    }
    std::vector<double> row(lookahead, nan);
    bool truncated = false;
    for (std::size_t j = 1; j <= lookahead; ++j) {
      if (j > len) {
        truncated = true;
        continue;
      }
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t t = 0; t + j <= len; ++t) {
        const auto& w = e.planned[t];
        if (w.size() < (j + 1) * pair) {
          throw DimensionError("planned window shorter than the requested lookahead");
        }
        const auto planned =
            transform(std::span<const double>(w).subspan(j * pair, state_dim));
        const auto real = transform(e.states[t + j]);
        if (norm(planned) < kNormFloor || norm(real) < kNormFloor) continue;
        sum += cosine_sim(planned, real);
        ++n;
      }
      if (n) row[j - 1] = sum / static_cast<double>(n);
    }
    m.rows.push_back(std::move(row));
    m.truncated.push_back(truncated);
  }
  return m;
}

ConsistencyMatrix consistency_matrix(const RecordSet& records, std::size_t lookahead) {
  if (records.horizon != 0 && lookahead > records.horizon) {
    throw ConfigError("lookahead exceeds the planning horizon");
  }
  return consistency_matrix(records.episodes, records.state_dim, records.action_dim,
                            lookahead, records.state_mean, records.state_std);
}

std::vector<ScatterPoint> state_return_scatter(const OfflineDataset& dataset) {
  std::vector<ScatterPoint> out;
  if (dataset.state_dim() < 2) throw DimensionError("scatter export needs 2-D states");
  const auto& eps = dataset.episodes();
  for (std::size_t e = 0; e < eps.size(); ++e) {
    for (std::size_t t = 0; t < eps[e].size(); ++t) {
      const auto& s = eps[e][t].state;
      out.push_back({s[0], s[1], dataset.state_returns()[e][t]});
    }
  }
  return out;
}

std::vector<ScatterPoint> state_reward_scatter(const std::vector<EpisodeRecord>& episodes) {
  std::vector<ScatterPoint> out;
  for (const auto& e : episodes) {
    for (std::size_t t = 0; t < e.length(); ++t) {
      const auto& s = e.states[t];
      if (s.size() < 2) throw DimensionError("scatter export needs 2-D states");
      out.push_back({s[0], s[1], e.rewards[t]});
    }
  }
  return out;
}

StrategyAdvice advise_strategy(const OfflineDataset& dataset, const ContrastiveConfig& cfg,
                               double threshold) {
  cfg.validate();
  std::vector<const std::vector<double>*> states;
  std::vector<std::size_t> high, low;
  std::vector<double> steps;
  const auto& eps = dataset.episodes();
  for (std::size_t e = 0; e < eps.size(); ++e) {
    for (std::size_t t = 0; t < eps[e].size(); ++t) {
      const auto& tr = eps[e][t];
      const double v = dataset.norm().scale_return(dataset.state_returns()[e][t]);
      if (v >= cfg.xi) high.push_back(states.size());
      if (v <= cfg.zeta) low.push_back(states.size());
      states.push_back(&tr.state);
      double d2 = 0.0;
      for (std::size_t d = 0; d < tr.state.size(); ++d) {
        d2 += (tr.next_state[d] - tr.state[d]) * (tr.next_state[d] - tr.state[d]);
      }
      steps.push_back(std::sqrt(d2));
    }
  }
  StrategyAdvice advice;
  advice.high_count = high.size();
  advice.low_count = low.size();
  if (high.empty() || low.empty() || steps.empty()) return advice;

  auto mid = steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2);
  std::nth_element(steps.begin(), mid, steps.end());
  const double step = std::max(*mid, kNormFloor);

  const auto hs = thin(high, 1000);
  const auto ls = thin(low, 1000);
  double total = 0.0;
  for (auto h : hs) {
    double best = std::numeric_limits<double>::infinity();
    for (auto l : ls) {
      double d2 = 0.0;
      const auto& a = *states[h];
      const auto& b = *states[l];
      for (std::size_t d = 0; d < a.size(); ++d) d2 += (a[d] - b[d]) * (a[d] - b[d]);
      best = std::min(best, d2);
    }
    total += std::sqrt(best);
  }
  advice.separation = total / static_cast<double>(hs.size()) / step;
  advice.recommended =
      advice.separation > threshold ? SamplingStrategy::kSRD : SamplingStrategy::kSR;
  return advice;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  auto os = open_out(path);
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    os << format_double(h.bin_lo(b)) << ',' << format_double(h.bin_hi(b)) << ','
       << h.counts[b] << '\n';
  }
}

void write_consistency_csv(const std::filesystem::path& path, const ConsistencyMatrix& m) {
  auto os = open_out(path);
  os << "episode,truncated";
  for (std::size_t j = 1; j <= m.lookahead; ++j) os << ",j" << j;
  os << '\n';
  for (std::size_t e = 0; e < m.rows.size(); ++e) {
    os << e << ',' << (m.truncated[e] ? 1 : 0);
    for (double v : m.rows[e]) os << ',' << (std::isnan(v) ? std::string("nan") : format_double(v));
    os << '\n';
  }
}

void write_scatter_csv(const std::filesystem::path& path,
                       const std::vector<ScatterPoint>& points) {
  auto os = open_out(path);
  os << "x,y,value\n";
  for (const auto& p : points) {
    os << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.value)
       << '\n';
  }
}

namespace {

constexpr double kWidth = 640.0, kHeight = 360.0, kMargin = 40.0;

void svg_open(std::ofstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\">"
     << escape_xml(title) << "</text>\n"
     << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
     << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
     << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
}

}  // namespace

void write_histogram_svg(const std::filesystem::path& path, const Histogram& h,
                         const std::string& title) {
  auto os = open_out(path);
  svg_open(os, title);
  const std::size_t peak =
      h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
  const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin;
  const double bar_w = h.counts.empty() ? 0.0 : plot_w / static_cast<double>(h.counts.size());
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double bh = peak ? plot_h * static_cast<double>(h.counts[b]) / static_cast<double>(peak) : 0.0;
    os << "<rect x=\"" << kMargin + bar_w * static_cast<double>(b) << "\" y=\""
       << kHeight - kMargin - bh << "\" width=\"" << bar_w * 0.9 << "\" height=\"" << bh
       << "\" fill=\"steelblue\"/>\n";
  }
  os << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 16 << "\">"
     << format_double(h.lo) << "</text>\n"
     << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 16
     << "\" text-anchor=\"end\">" << format_double(h.hi) << "</text>\n"
     << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin << "\" text-anchor=\"end\">"
     << peak << "</text>\n</svg>\n";
}

void write_lines_svg(const std::filesystem::path& path, const std::vector<LineSeries>& series,
                     const std::string& title) {
  static const char* kColors[] = {"steelblue", "darkorange", "seagreen", "crimson",
                                  "slateblue", "goldenrod"};
  auto os = open_out(path);
  svg_open(os, title);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (longest < 2 || !(hi >= lo)) {
    os << "</svg>\n";
    return;
  }
  if (hi == lo) hi = lo + 1.0;
  const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t t = 0; t < s.values.size(); ++t) {
      if (!std::isfinite(s.values[t])) continue;
      const double x = kMargin + plot_w * static_cast<double>(t) / static_cast<double>(longest - 1);
      const double y = kHeight - kMargin - plot_h * (s.values[t] - lo) / (hi - lo);
      os << x << ',' << y << ' ';
    }
    os << "\"/>\n<text x=\"" << kWidth - kMargin << "\" y=\"" << kMargin + 14.0 * static_cast<double>(k)
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape_xml(s.name)
       << "</text>\n";
  }
  os << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin << "\" text-anchor=\"end\">"
     << format_double(hi) << "</text>\n<text x=\"" << kMargin - 4 << "\" y=\""
     << kHeight - kMargin << "\" text-anchor=\"end\">" << format_double(lo)
     << "</text>\n</svg>\n";
}

}  // namespace cdiff
