#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cdiff {

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

using Episode = std::vector<Transition>;

// eta discounts per-state returns v_t, gamma discounts whole-episode returns.
struct ReturnConfig {
  double eta = 0.99;
  double gamma = 0.99;

  void validate() const;
};

// v_t = r_t + eta * v_{t+1}, v_T = r_T.
std::vector<double> compute_state_returns(std::span<const double> rewards,
                                          double eta);
std::vector<double> compute_state_returns(const Episode& episode,
                                          const ReturnConfig& cfg);

// R = sum_t gamma^t r_t.
double trajectory_return(std::span<const double> rewards, double gamma);
double trajectory_return(const Episode& episode, const ReturnConfig& cfg);

inline constexpr double kStdFloor = 1e-6;

// Per-dimension z-score statistics for states and actions plus the min/max of
// per-state returns. Dimensions whose std falls below kStdFloor are floored
// and flagged.
struct NormStats {
  std::vector<double> state_mean, state_std;
  std::vector<double> action_mean, action_std;
  std::vector<bool> state_degenerate, action_degenerate;
  double return_min = 0.0;
  double return_max = 1.0;
  bool return_degenerate = false;

  std::vector<double> normalize_state(std::span<const double> s) const;
  std::vector<double> denormalize_state(std::span<const double> s) const;
  std::vector<double> normalize_action(std::span<const double> a) const;
  std::vector<double> denormalize_action(std::span<const double> a) const;
  // Windows are position-major (state, action) pairs.
  std::vector<double> normalize_window(std::span<const double> w) const;
  std::vector<double> denormalize_window(std::span<const double> w) const;
  // Min-max onto [0, 1].
  double scale_return(double v) const;
  double unscale_return(double scaled) const;
};

class OfflineDataset {
 public:
  OfflineDataset() = default;
  // Computes per-state returns and normalization statistics. Rejects empty
  // input and inconsistent dimensions.
  static OfflineDataset build(std::vector<Episode> episodes, ReturnConfig cfg);
  // Assembles a dataset from already computed parts (used by the loader).
  static OfflineDataset from_parts(std::size_t state_dim, std::size_t action_dim,
                                   ReturnConfig cfg, std::vector<Episode> episodes,
                                   std::vector<std::vector<double>> returns,
                                   NormStats norm);

  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  const ReturnConfig& return_config() const { return returns_cfg_; }
  const std::vector<Episode>& episodes() const { return episodes_; }
  const std::vector<std::vector<double>>& state_returns() const { return returns_; }
  const NormStats& norm() const { return norm_; }
  std::size_t num_states() const;

 private:
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  ReturnConfig returns_cfg_;
  std::vector<Episode> episodes_;
  std::vector<std::vector<double>> returns_;
  NormStats norm_;
};

NormStats compute_norm_stats(const std::vector<Episode>& episodes,
                             const std::vector<std::vector<double>>& returns);

// H + 1 consecutive (state, action) pairs from one episode, raw units.
// Positions past the episode end repeat the terminal pair.
struct TrajWindow {
  std::size_t episode = 0;
  std::size_t start = 0;
  std::vector<double> values;  // (H + 1) * (state_dim + action_dim)
  double start_return = 0.0;   // raw v_t of the first state
  std::size_t padded = 0;      // number of repeated terminal positions
};

// One window per dataset state, in episode order.
std::vector<TrajWindow> slice_windows(const OfflineDataset& dataset,
                                      std::size_t horizon);

// JSON-lines: header object, then one object per episode. Floats use 17
// significant digits.
std::string encode_dataset(const OfflineDataset& dataset);
OfflineDataset decode_dataset(const std::string& text);
void save_dataset(const std::filesystem::path& path, const OfflineDataset& dataset);
OfflineDataset load_dataset(const std::filesystem::path& path);

// Shared number formatting for the text formats in this library.
std::string format_double(double v);

}  // namespace cdiff
