#include "cavenet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cavenet/error.hpp"

namespace cavenet {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'V', 'E', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint: truncated data");
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::expect_kind(const std::string& expected) const {
  if (kind_ != expected) {
    throw StateError("checkpoint holds a '" + kind_ + "' model, expected '" + expected + "'");
  }
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw StateError("checkpoint metadata missing key '" + key + "'");
  return it->second;
}

void Checkpoint::add(std::string name, Shape shape, std::vector<float> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("checkpoint block '" + name + "' shape " + shape_str(shape) +
                     " does not match " + std::to_string(values.size()) + " values");
  }
  if (has(name)) throw StateError("checkpoint block '" + name + "' added twice");
  blocks_.push_back({std::move(name), std::move(shape), std::move(values)});
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

const ParamBlock& Checkpoint::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw StateError("checkpoint has no block '" + name + "'");
}

void Checkpoint::load_into(const std::string& name, Tensor& t) const {
  const auto& b = block(name);
  if (b.shape != t.shape()) {
    throw ShapeError("checkpoint block '" + name + "' has shape " + shape_str(b.shape) +
                     ", model expects " + shape_str(t.shape()));
  }
  std::copy(b.values.begin(), b.values.end(), t.mutable_data().begin());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kCheckpointVersion);
  w.str(kind_);
  w.u32(static_cast<std::uint32_t>(meta_.size()));
  for (const auto& [k, v] : meta_) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(blocks_.size()));
  for (const auto& b : blocks_) {
    w.str(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (auto e : b.shape) w.u64(e);
    for (float v : b.values) w.f32(v);
  }
  return std::move(w.bytes);
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: format version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck(r.str());
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ck.meta_[k] = r.str();
  }
  const std::uint32_t n_blocks = r.u32();
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    ParamBlock b;
    b.name = r.str();
    const std::uint32_t rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) b.shape.push_back(r.u64());
    b.values.resize(shape_numel(b.shape));
    for (auto& v : b.values) v = r.f32();
    ck.blocks_.push_back(std::move(b));
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace cavenet
