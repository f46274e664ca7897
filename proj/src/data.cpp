#include "cavenet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cavenet/csv.hpp"
#include "cavenet/error.hpp"

namespace cavenet::data {
namespace fs = std::filesystem;

int class_index(std::string_view name) {
  std::string normalized(name);
  std::replace(normalized.begin(), normalized.end(), '_', ' ');
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == normalized) return static_cast<int>(i);
  }
  throw DataError("unknown class '" + std::string(name) + "'");
}

std::string_view class_name(int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= kNumClasses) {
    throw DataError("class index " + std::to_string(index) + " outside taxonomy");
  }
  return kClassNames[static_cast<std::size_t>(index)];
}

std::string class_dir_name(int index) {
  std::string s(class_name(index));
  std::replace(s.begin(), s.end(), ' ', '_');
  return s;
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::original: return "original";
    case Provenance::augmented: return "augmented";
    case Provenance::reconstructed: return "reconstructed";
  }
  return "original";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "original") return Provenance::original;
  if (s == "augmented") return Provenance::augmented;
  if (s == "reconstructed") return Provenance::reconstructed;
  throw DataError("unknown provenance '" + std::string(s) + "'");
}

LabeledDataset::LabeledDataset(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes, 0) {
  if (num_classes == 0 || num_classes > kNumClasses) {
    throw ConfigError("dataset class count must be in [1," + std::to_string(kNumClasses) +
                      "], got " + std::to_string(num_classes));
  }
}

void LabeledDataset::add(ImageRecord record) {
  if (record.label < 0 || static_cast<std::size_t>(record.label) >= num_classes_) {
    throw DataError("label " + std::to_string(record.label) + " outside [0," +
                    std::to_string(num_classes_) + ")");
  }
  const Shape& s = record.pixels.shape();
  if (s.size() != 3 || s[0] != 3) {
    throw ShapeError("image records must be [3,H,W], got " + shape_str(s));
  }
  if (image_shape_.empty()) {
    image_shape_ = s;
  } else if (s != image_shape_) {
    throw ShapeError("image shape " + shape_str(s) + " differs from dataset shape " +
                     shape_str(image_shape_));
  }
  ++counts_[static_cast<std::size_t>(record.label)];
  records_.push_back(std::move(record));
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.label);
  return out;
}

void clamp_unit(Tensor& pixels) {
  for (auto& v : pixels.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
}

// --- Raster I/O ------------------------------------------------------------

namespace {

// Next whitespace-separated header token, skipping '#' comments.
std::string pnm_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError("truncated image header: " + path.string());
  return tok;
}

std::size_t pnm_number(std::istream& in, const fs::path& path) {
  const std::string tok = pnm_token(in, path);
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed image header in " + path.string());
  }
}

}  // namespace

Tensor read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image " + path.string());
  const std::string magic = pnm_token(in, path);
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
    throw IoError("unsupported image format '" + magic + "' in " + path.string());
  }
  const bool color = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  const std::size_t w = pnm_number(in, path);
  const std::size_t h = pnm_number(in, path);
  const std::size_t maxval = pnm_number(in, path);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw IoError("invalid image dimensions in " + path.string());
  }
  const std::size_t channels = color ? 3 : 1;
  const std::size_t count = w * h * channels;
  std::vector<std::uint32_t> raw(count);
  if (binary) {
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> buf(count * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
      throw IoError("truncated image data in " + path.string());
    }
    for (std::size_t i = 0; i < count; ++i) {
      raw[i] = bytes == 1 ? buf[i] : (static_cast<std::uint32_t>(buf[2 * i]) << 8) | buf[2 * i + 1];
    }
  } else {
    for (auto& v : raw) v = static_cast<std::uint32_t>(pnm_number(in, path));
  }
  Tensor out = Tensor::zeros({3, h, w});
  auto o = out.mutable_data();
  const float inv = 1.0f / static_cast<float>(maxval);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::uint32_t v = raw[(y * w + x) * channels + (color ? c : 0)];
        o[(c * h + y) * w + x] = std::min(1.0f, static_cast<float>(v) * inv);
      }
    }
  }
  return out;
}

void write_ppm(const fs::path& path, const Tensor& pixels) {
  if (pixels.rank() != 3 || (pixels.dim(0) != 3 && pixels.dim(0) != 1)) {
    throw ShapeError("write_ppm expects [3,H,W] or [1,H,W], got " + shape_str(pixels.shape()));
  }
  const std::size_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> buf(w * h * 3);
  auto px = pixels.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const float v = px[((c == 3 ? ch : 0) * h + y) * w + x];
        buf[(y * w + x) * 3 + ch] =
            static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

Tensor center_crop_resize(const Tensor& pixels, std::size_t side) {
  if (side == 0) throw ConfigError("resize side must be positive");
  const std::size_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  const std::size_t sq = std::min(h, w);
  const std::size_t y0 = (h - sq) / 2, x0 = (w - sq) / 2;
  Tensor out = Tensor::zeros({c, side, side});
  auto o = out.mutable_data();
  auto in = pixels.data();
  for (std::size_t y = 0; y < side; ++y) {
    const std::size_t sy = y0 + std::min(sq - 1, (2 * y + 1) * sq / (2 * side));
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t sx = x0 + std::min(sq - 1, (2 * x + 1) * sq / (2 * side));
      for (std::size_t ch = 0; ch < c; ++ch) o[(ch * side + y) * side + x] = in[(ch * h + sy) * w + sx];
    }
  }
  return out;
}

LabeledDataset ingest_directory(const fs::path& root, std::size_t side) {
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
  std::vector<std::pair<int, fs::path>> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    classes.emplace_back(class_index(entry.path().filename().string()), entry.path());
  }
  std::sort(classes.begin(), classes.end());
  for (std::size_t i = 1; i < classes.size(); ++i) {
    if (classes[i].first == classes[i - 1].first) {
      throw DataError("two directories map to class '" +
                      std::string(class_name(classes[i].first)) + "'");
    }
  }
  int max_label = -1;
  std::vector<std::pair<int, fs::path>> files;
  for (const auto& [label, dir] : classes) {
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = entry.path().extension().string();
      if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") images.push_back(entry.path());
    }
    std::sort(images.begin(), images.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    for (auto& p : images) files.emplace_back(label, std::move(p));
    if (!images.empty()) max_label = std::max(max_label, label);
  }
  if (files.empty()) throw DataError("no images found under " + root.string());
  LabeledDataset ds(static_cast<std::size_t>(max_label + 1));
  for (const auto& [label, path] : files) {
    Tensor px = center_crop_resize(read_pnm(path), side);
    ds.add({std::move(px), label, Provenance::original, fs::relative(path, root).generic_string()});
  }
  return ds;
}

// --- Synthetic corpus ------------------------------------------------------

namespace {

struct ClassStyle {
  std::array<float, 3> color;
  int blobs;
  double stripe_angle;  // radians
  double stripe_cycles; // across the image
};

ClassStyle class_style(std::size_t c) {
  static constexpr std::array<std::array<float, 3>, kNumClasses> kPalette = {{
      {0.90f, 0.20f, 0.20f}, {0.20f, 0.75f, 0.25f}, {0.25f, 0.35f, 0.95f}, {0.95f, 0.85f, 0.20f},
      {0.80f, 0.30f, 0.85f}, {0.20f, 0.85f, 0.85f}, {0.95f, 0.55f, 0.15f}, {0.55f, 0.35f, 0.20f},
      {0.95f, 0.95f, 0.95f}, {0.45f, 0.60f, 0.30f},
  }};
  return ClassStyle{kPalette[c], 1 + static_cast<int>(c % 4),
                    std::numbers::pi * static_cast<double>(c) / kNumClasses,
                    2.0 + static_cast<double>(c % 5)};
}

Tensor synth_image(std::size_t cls, std::size_t side, Rng& rng) {
  const ClassStyle style = class_style(cls);
  const double n = static_cast<double>(side);
  Tensor img = Tensor::zeros({3, side, side});
  auto px = img.mutable_data();

  const double base = rng.uniform(0.15, 0.35);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double angle = style.stripe_angle + rng.uniform(-0.15, 0.15);
  const double freq = 2.0 * std::numbers::pi * style.stripe_cycles / n;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double stripe = 0.12 * std::sin(freq * (ca * x + sa * y) + phase);
      for (std::size_t c = 0; c < 3; ++c) {
        px[(c * side + y) * side + x] = static_cast<float>(base + stripe * (0.5 + 0.5 * style.color[c]));
      }
    }
  }
  for (int b = 0; b < style.blobs; ++b) {
    const double cx = rng.uniform(0.2, 0.8) * n;
    const double cy = rng.uniform(0.2, 0.8) * n;
    const double radius = n * rng.uniform(0.08, 0.13);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double wgt = std::exp(-d2 / (2.0 * radius * radius));
        for (std::size_t c = 0; c < 3; ++c) {
          float& v = px[(c * side + y) * side + x];
          v = static_cast<float>(v * (1.0 - wgt) + style.color[c] * wgt);
        }
      }
    }
  }
  for (auto& v : px) v += static_cast<float>(rng.normal(0.0, 0.03));
  clamp_unit(img);
  return img;
}

}  // namespace

LabeledDataset generate_synthetic(std::size_t classes, const std::vector<std::size_t>& per_class,
                                  std::size_t side, std::uint64_t seed) {
  if (classes == 0 || classes > kNumClasses) {
    throw ConfigError("synthetic class count must be in [1,10], got " + std::to_string(classes));
  }
  if (per_class.size() != classes) {
    throw ConfigError("synthetic per-class list has " + std::to_string(per_class.size()) +
                      " entries for " + std::to_string(classes) + " classes");
  }
  if (side < 16) throw ConfigError("synthetic image side must be >= 16, got " + std::to_string(side));
  Rng root(seed);
  LabeledDataset ds(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class[c]; ++i) {
      Rng rng = root.fork((c << 32) | i);
      std::ostringstream id;
      id << "syn_c" << c << '_' << i;
      ds.add({synth_image(c, side, rng), static_cast<int>(c), Provenance::original, id.str()});
    }
  }
  return ds;
}

LabeledDataset generate_synthetic(std::size_t classes, std::size_t per_class, std::size_t side,
                                  std::uint64_t seed) {
  return generate_synthetic(classes, std::vector<std::size_t>(classes, per_class), side, seed);
}

std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& ds,
                                                           double val_fraction,
                                                           std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0,1)");
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds[i].label)].push_back(i);
  std::vector<bool> is_val(ds.size(), false);
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(idx.size())));
    for (std::size_t j = idx.size() - n_val; j < idx.size(); ++j) is_val[idx[j]] = true;
  }
  LabeledDataset train(ds.num_classes()), val(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) (is_val[i] ? val : train).add(ds[i]);
  return {std::move(train), std::move(val)};
}

// --- Manifests -------------------------------------------------------------

void write_manifest(const fs::path& path, const std::vector<ManifestRow>& rows) {
  CsvTable table({"path", "label", "provenance"});
  for (const auto& r : rows) {
    table.add_row({r.path, std::string(class_name(r.label)), std::string(provenance_name(r.provenance))});
  }
  table.save(path);
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  const CsvTable table = CsvTable::load(path);
  table.require_columns({"path", "label", "provenance"});
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    rows.push_back({table.at(i, "path"), class_index(table.at(i, "label")),
                    parse_provenance(table.at(i, "provenance"))});
  }
  return rows;
}

namespace {
std::string sanitize(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-') ch = '_';
  }
  return s;
}
}  // namespace

void save_dataset(const LabeledDataset& ds, const fs::path& manifest_path, const fs::path& image_dir) {
  const fs::path base = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  std::vector<ManifestRow> rows;
  rows.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    std::string rel;
    if (!r.source_id.empty() && fs::is_regular_file(base / r.source_id)) {
      rel = r.source_id;
    } else {
      const fs::path dir = image_dir / class_dir_name(r.label);
      fs::create_directories(dir);
      char prefix[16];
      std::snprintf(prefix, sizeof prefix, "%06zu_", i);
      const fs::path file = dir / (prefix + sanitize(fs::path(r.source_id).filename().string()) + ".ppm");
      write_ppm(file, r.pixels);
      rel = fs::relative(file, base).generic_string();
    }
    rows.push_back({rel, r.label, r.provenance});
  }
  write_manifest(manifest_path, rows);
}

LabeledDataset load_dataset(const fs::path& manifest_path, std::size_t num_classes) {
  const fs::path base = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  LabeledDataset ds(num_classes);
  for (const auto& row : read_manifest(manifest_path)) {
    ds.add({read_pnm(base / row.path), row.label, row.provenance, row.path});
  }
  return ds;
}

}  // namespace cavenet::data
