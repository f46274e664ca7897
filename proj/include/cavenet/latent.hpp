#pragma once

// Row-major matrix of latent vectors with one label and id per row. This is
// the interchange type between the autoencoder and the latent-space
// classifiers.
//
// Binary layout (little-endian): "CAVELAT1", u64 rows, u64 dim, i32 label *
// rows, f32 value * rows * dim. Ids are not stored in the binary form.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cavenet {

struct LatentSet {
  std::size_t dim = 0;
  std::vector<float> values;  // rows * dim
  std::vector<int> labels;
  std::vector<std::string> ids;

  LatentSet() = default;
  LatentSet(std::size_t rows, std::size_t dim);

  std::size_t rows() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }
  // Rows at `indices`, in that order.
  LatentSet subset(const std::vector<std::size_t>& indices) const;
  // Largest label + 1, or 0 when empty.
  std::size_t label_span() const;
};

// CSV with header `label,z0..z{d-1}`.
void write_latents_csv(const std::filesystem::path& path, const LatentSet& set);
LatentSet read_latents_csv(const std::filesystem::path& path);
void write_latents_bin(const std::filesystem::path& path, const LatentSet& set);
LatentSet read_latents_bin(const std::filesystem::path& path);
// Dispatches on the extension: `.csv` or anything else as binary.
LatentSet read_latents(const std::filesystem::path& path);

}  // namespace cavenet
