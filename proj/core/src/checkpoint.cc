#include "cdiff/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "cdiff/error.h"
#include "cdiff/tensor.h"

namespace cdiff {
namespace {

constexpr std::string_view kMagic = "CDIFF1";

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xffu));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      bits |= static_cast<U>(bytes_[pos_ + b]) << (8 * b);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError("block file truncated at byte offset " +
                       std::to_string(pos_));
    }
  }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void BlockFile::add(std::string name, std::vector<std::size_t> shape,
                    std::vector<double> data) {
  if (shape_product(shape) != data.size()) {
    throw DimensionError("block '" + name + "' shape does not match data");
  }
  if (find(name) != nullptr) {
    throw UsageError("duplicate block name '" + name + "'");
  }
  blocks_.push_back({std::move(name), std::move(shape), std::move(data)});
}

void BlockFile::add(std::string name, std::span<const double> data) {
  add(std::move(name), {data.size()}, std::vector<double>(data.begin(), data.end()));
}

void BlockFile::add_scalar(std::string name, double value) {
  add(std::move(name), {1}, {value});
}

void BlockFile::add_text(std::string name, std::string_view text) {
  std::vector<double> codes;
  codes.reserve(text.size());
  for (unsigned char c : text) codes.push_back(static_cast<double>(c));
  const std::size_t n = codes.size();
  add(std::move(name), {n}, std::move(codes));
}

const NamedBlock* BlockFile::find(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const NamedBlock& BlockFile::get(std::string_view name) const {
  const NamedBlock* b = find(name);
  if (b == nullptr) throw ParseError("missing block '" + std::string(name) + "'");
  return *b;
}

double BlockFile::scalar(std::string_view name) const {
  const NamedBlock& b = get(name);
  if (b.data.size() != 1) {
    throw DimensionError("block '" + std::string(name) + "' is not a scalar");
  }
  return b.data[0];
}

std::string BlockFile::text(std::string_view name) const {
  const NamedBlock& b = get(name);
  std::string s;
  s.reserve(b.data.size());
  for (double c : b.data) s.push_back(static_cast<char>(static_cast<unsigned char>(c)));
  return s;
}

void BlockFile::copy_to(std::string_view name, std::span<double> dst) const {
  const NamedBlock& b = get(name);
  if (b.data.size() != dst.size()) {
    throw DimensionError("block '" + std::string(name) + "' has " +
                         std::to_string(b.data.size()) + " values, expected " +
                         std::to_string(dst.size()));
  }
  std::copy(b.data.begin(), b.data.end(), dst.begin());
}

std::vector<unsigned char> BlockFile::encode() const {
  std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
  put_le<std::uint64_t>(out, blocks_.size());
  for (const auto& b : blocks_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.insert(out.end(), b.name.begin(), b.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
    for (auto d : b.shape) put_le<std::uint64_t>(out, d);
    for (double v : b.data) put_le<double>(out, v);
  }
  return out;
}

BlockFile BlockFile::decode(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (r.get_string(kMagic.size()) != kMagic) {
    throw ParseError("bad magic: not a CDIFF1 block file");
  }
  BlockFile file;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.get_string(name_len);
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> data(shape_product(shape));
    for (auto& v : data) v = r.get<double>();
    file.add(std::move(name), std::move(shape), std::move(data));
  }
  if (!r.done()) {
    throw ParseError("trailing bytes after last block at offset " +
                     std::to_string(r.offset()));
  }
  return file;
}

void BlockFile::save(const std::filesystem::path& path) const {
  const auto bytes = encode();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

BlockFile BlockFile::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace cdiff
