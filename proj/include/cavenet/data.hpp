#pragma once

// Labelled image datasets over the fixed ten-class capsule endoscopy
// taxonomy, raster I/O, directory ingestion and the synthetic corpus.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cavenet/rng.hpp"
#include "cavenet/tensor.hpp"

namespace cavenet::data {

inline constexpr std::size_t kNumClasses = 10;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Angioectasia", "Bleeding", "Erosion", "Erythema", "Foreign Body",
    "Lymphangiectasia", "Normal", "Polyp", "Ulcer", "Worms"};

// Accepts the canonical names, with '_' standing in for a space
// ("Foreign_Body"). Throws DataError for anything else.
int class_index(std::string_view name);
std::string_view class_name(int index);
// Directory-safe name: spaces replaced by '_'.
std::string class_dir_name(int index);

enum class Provenance { original, augmented, reconstructed };
std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view s);

struct ImageRecord {
  Tensor pixels;  // [3, H, W], values in [0, 1]
  int label = 0;
  Provenance provenance = Provenance::original;
  std::string source_id;
};

// Records plus a class-count table that is kept equal to a recount of the
// records. All records share one pixel shape. `num_classes` is the label
// range [0, num_classes) the dataset is defined over.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::size_t num_classes);

  void add(ImageRecord record);
  const std::vector<ImageRecord>& records() const { return records_; }
  const ImageRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::size_t num_classes() const { return num_classes_; }
  const std::vector<std::size_t>& class_counts() const { return counts_; }
  // Shape shared by every record ([3,H,W]); empty when the dataset is empty.
  const Shape& image_shape() const { return image_shape_; }
  std::vector<int> labels() const;

 private:
  std::size_t num_classes_ = kNumClasses;
  std::vector<ImageRecord> records_;
  std::vector<std::size_t> counts_ = std::vector<std::size_t>(kNumClasses, 0);
  Shape image_shape_;
};

// Clamps every element into [0, 1].
void clamp_unit(Tensor& pixels);

// --- Raster I/O ------------------------------------------------------------
// Reads binary (P5/P6) and ASCII (P2/P3) netpbm files; grayscale is
// replicated to three channels. Values are scaled by 1/maxval.
Tensor read_pnm(const std::filesystem::path& path);
// Writes an 8-bit binary PPM (P6). Values are clamped and rounded.
void write_ppm(const std::filesystem::path& path, const Tensor& pixels);

// Center-crops to a square, then nearest-neighbour resizes to side x side.
// Destination pixel d samples source index floor((d + 0.5) * in / out).
Tensor center_crop_resize(const Tensor& pixels, std::size_t side);

// Reads `<root>/<ClassName>/*.ppm|*.pgm|*.pnm`. Class directories are visited
// in class-index order and files in lexicographic filename order.
// num_classes of the result is the largest label present + 1.
LabeledDataset ingest_directory(const std::filesystem::path& root, std::size_t side);

// Deterministic synthetic corpus: each class has its own colour, blob count
// and stripe orientation/frequency; positions, phases and pixel noise are
// random per image. `per_class[c]` images are generated for class c.
LabeledDataset generate_synthetic(std::size_t classes, const std::vector<std::size_t>& per_class,
                                  std::size_t side, std::uint64_t seed);
LabeledDataset generate_synthetic(std::size_t classes, std::size_t per_class, std::size_t side,
                                  std::uint64_t seed);

// Stratified split: within every class the first round((1 - fraction) * n)
// records of a seeded shuffle go to train, the rest to validation.
std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& ds,
                                                           double val_fraction,
                                                           std::uint64_t seed);

// --- Manifests -------------------------------------------------------------
// CSV with header `path,label,provenance`; `label` is the class name and
// `path` is relative to the manifest's directory.
struct ManifestRow {
  std::string path;
  int label = 0;
  Provenance provenance = Provenance::original;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// Writes every record as `<image_dir>/<ClassDir>/<stem>.ppm` and the manifest
// at `manifest_path`. Records whose source_id already names an existing file
// relative to the manifest directory are referenced rather than rewritten.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& image_dir);
// Loads a manifest written by save_dataset; each record's source_id is its
// manifest path.
LabeledDataset load_dataset(const std::filesystem::path& manifest_path, std::size_t num_classes);

}  // namespace cavenet::data
