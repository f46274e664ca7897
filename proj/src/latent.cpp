#include "cavenet/latent.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cavenet/csv.hpp"
#include "cavenet/error.hpp"

namespace cavenet {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {
constexpr char kMagic[8] = {'C', 'A', 'V', 'E', 'L', 'A', 'T', '1'};
}

LatentSet::LatentSet(std::size_t rows, std::size_t d)
    : dim(d), values(rows * d, 0.0f), labels(rows, 0), ids(rows) {}

LatentSet LatentSet::subset(const std::vector<std::size_t>& indices) const {
  LatentSet out(indices.size(), dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= rows()) throw DataError("latent row index out of range");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(src * dim), dim,
                out.values.begin() + static_cast<std::ptrdiff_t>(i * dim));
    out.labels[i] = labels[src];
    out.ids[i] = ids[src];
  }
  return out;
}

std::size_t LatentSet::label_span() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

void write_latents_csv(const std::filesystem::path& path, const LatentSet& set) {
  std::vector<std::string> header{"label"};
  for (std::size_t j = 0; j < set.dim; ++j) header.push_back("z" + std::to_string(j));
  CsvTable table(std::move(header));
  for (std::size_t i = 0; i < set.rows(); ++i) {
    std::vector<std::string> row{std::to_string(set.labels[i])};
    for (float v : set.row(i)) row.push_back(format_number(v));
    table.add_row(std::move(row));
  }
  table.save(path);
}

LatentSet read_latents_csv(const std::filesystem::path& path) {
  const CsvTable table = CsvTable::load(path);
  if (table.cols() < 2 || table.header()[0] != "label") {
    throw DataError("latent CSV must have header label,z0,...: " + path.string());
  }
  LatentSet set(table.rows(), table.cols() - 1);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    set.labels[i] = static_cast<int>(table.number(i, 0));
    for (std::size_t j = 0; j < set.dim; ++j) set.row(i)[j] = static_cast<float>(table.number(i, j + 1));
    set.ids[i] = std::to_string(i);
  }
  return set;
}

void write_latents_bin(const std::filesystem::path& path, const LatentSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint64_t rows = set.rows(), dim = set.dim;
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  for (int label : set.labels) {
    const std::int32_t l = label;
    out.write(reinterpret_cast<const char*>(&l), sizeof l);
  }
  out.write(reinterpret_cast<const char*>(set.values.data()),
            static_cast<std::streamsize>(set.values.size() * sizeof(float)));
  if (!out) throw IoError("failed writing " + path.string());
}

LatentSet read_latents_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[8];
  std::uint64_t rows = 0, dim = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not a latent file: " + path.string());
  }
  if (rows > (1ull << 32) || dim > (1ull << 24)) throw DataError("implausible latent dimensions in " + path.string());
  LatentSet set(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    std::int32_t l = 0;
    in.read(reinterpret_cast<char*>(&l), sizeof l);
    set.labels[i] = l;
    set.ids[i] = std::to_string(i);
  }
  in.read(reinterpret_cast<char*>(set.values.data()), static_cast<std::streamsize>(set.values.size() * sizeof(float)));
  if (!in) throw DataError("truncated latent file: " + path.string());
  return set;
}

LatentSet read_latents(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_latents_csv(path) : read_latents_bin(path);
}

}  // namespace cavenet
