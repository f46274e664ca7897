#pragma once

// Self-describing binary model container.
//
// Layout (all integers little-endian):
//   bytes  "CAVECKPT"
//   u32    format version (kCheckpointVersion)
//   str    model kind tag
//   u32    metadata entry count, then (str key, str value) pairs sorted by key
//   u32    block count, then per block:
//            str name, u32 rank, u64 extent * rank, f32 payload (row-major)
// where `str` is a u32 byte length followed by the bytes.
//
// Integer-valued tables (tree node indices, labels) are stored as f32, which
// is exact for magnitudes below 2^24.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cavenet/tensor.hpp"

namespace cavenet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamBlock {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

class Checkpoint {
 public:
  Checkpoint() = default;
  explicit Checkpoint(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  // Throws StateError unless kind() == expected.
  void expect_kind(const std::string& expected) const;

  void set_meta(const std::string& key, std::string value) { meta_[key] = std::move(value); }
  const std::string& meta(const std::string& key) const;
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }
  const std::map<std::string, std::string>& metadata() const { return meta_; }

  void add(std::string name, Shape shape, std::vector<float> values);
  void add(std::string name, const Tensor& t) { add(std::move(name), t.shape(), {t.data().begin(), t.data().end()}); }
  bool has(const std::string& name) const;
  const ParamBlock& block(const std::string& name) const;
  // Copies a block into an existing tensor of identical shape.
  void load_into(const std::string& name, Tensor& t) const;
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::string kind_;
  std::map<std::string, std::string> meta_;
  std::vector<ParamBlock> blocks_;
};

// 64-bit FNV-1a, used to fingerprint configuration text.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace cavenet
