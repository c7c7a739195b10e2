#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cdiff {

// Seeded random stream. Draws are built directly on the engine output so the
// sequence is fully determined by the engine state, which can be serialized
// and restored for bit-identical resumption.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Unit Gaussian via Box-Muller; no cached second value.
  double normal();
  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  std::uint64_t next_u64() { return engine_(); }

  std::vector<double> normal_vector(std::size_t n);

  // Independent child stream keyed by `stream`.
  Rng fork(std::uint64_t stream);

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive well-mixed seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace cdiff
