#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdiff {

// One named float64 array.
struct NamedBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

// Binary layout (all integers and floats little-endian):
//   "CDIFF1"
//   u64 block count
//   per block: u32 name length, name bytes, u32 rank, u64 dims[rank],
//              f64 payload[product(dims)]
// Payload bytes are copied verbatim, so round trips are bit-exact.
class BlockFile {
 public:
  void add(std::string name, std::vector<std::size_t> shape,
           std::vector<double> data);
  void add(std::string name, std::span<const double> data);
  void add_scalar(std::string name, double value);
  // Stores text one byte per float64 entry.
  void add_text(std::string name, std::string_view text);

  const NamedBlock* find(std::string_view name) const;
  const NamedBlock& get(std::string_view name) const;
  double scalar(std::string_view name) const;
  std::string text(std::string_view name) const;
  // Copies a block into dst; throws DimensionError on a size mismatch.
  void copy_to(std::string_view name, std::span<double> dst) const;

  const std::vector<NamedBlock>& blocks() const { return blocks_; }

  std::vector<unsigned char> encode() const;
  static BlockFile decode(std::span<const unsigned char> bytes);

  void save(const std::filesystem::path& path) const;
  static BlockFile load(const std::filesystem::path& path);

 private:
  std::vector<NamedBlock> blocks_;
};

}  // namespace cdiff
