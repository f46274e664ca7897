#include "cavenet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>

#include "cavenet/error.hpp"

namespace cavenet::data {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Reflect-101 mirror of a continuous coordinate into [0, n - 1].
double reflect(double x, std::size_t n) {
  if (n == 1) return 0.0;
  const double last = static_cast<double>(n - 1);
  const double period = 2.0 * last;
  x = std::fmod(std::abs(x), period);
  return x > last ? period - x : x;
}

// Bilinear sample of channel plane `p` at (x, y) with reflected borders.
float bilinear(const float* p, std::size_t h, std::size_t w, double x, double y) {
  x = reflect(x, w);
  y = reflect(y, h);
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
  const double bottom = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

// Resamples every channel: output pixel (x, y) reads source map(x, y).
template <class Map>
Tensor warp(const Tensor& in, Map&& map) {
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  Tensor out = Tensor::zeros(in.shape());
  auto o = out.mutable_data();
  auto src = in.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto [sx, sy] = map(static_cast<double>(x), static_cast<double>(y));
      for (std::size_t ch = 0; ch < c; ++ch) {
        o[(ch * h + y) * w + x] = bilinear(src.data() + ch * h * w, h, w, sx, sy);
      }
    }
  }
  return out;
}

Tensor flip(const Tensor& in, bool horizontal, bool vertical) {
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  Tensor out = Tensor::zeros(in.shape());
  auto o = out.mutable_data();
  auto src = in.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t sy = vertical ? h - 1 - y : y;
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sx = horizontal ? w - 1 - x : x;
        o[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
      }
    }
  }
  return out;
}

Tensor gaussian_blur(const Tensor& in, double sigma) {
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  constexpr int radius = static_cast<int>(kBlurKernel / 2);
  std::array<double, kBlurKernel> k{};
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= total;
  auto idx = [](int i, std::size_t n) {
    return static_cast<std::size_t>(reflect(static_cast<double>(i), n));
  };
  std::vector<float> tmp(in.numel());
  Tensor out = Tensor::zeros(in.shape());
  auto src = in.data();
  auto o = out.mutable_data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* p = src.data() + ch * h * w;
    float* t = tmp.data() + ch * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * p[y * w + idx(static_cast<int>(x) + i, w)];
        }
        t[y * w + x] = static_cast<float>(acc);
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * t[idx(static_cast<int>(y) + i, h) * w + x];
        }
        o[(ch * h + y) * w + x] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

}  // namespace

std::string_view augment_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::flip: return "flip";
    case AugmentKind::rotate: return "rotate";
    case AugmentKind::zoom: return "zoom";
    case AugmentKind::shear: return "shear";
    case AugmentKind::blur: return "blur";
    case AugmentKind::noise: return "noise";
    case AugmentKind::crop: return "crop";
  }
  return "?";
}

bool AugmentOp::valid() const {
  switch (kind) {
    case AugmentKind::flip: return flip_horizontal || flip_vertical;
    case AugmentKind::rotate: return std::abs(angle_deg) <= kMaxRotateDeg;
    case AugmentKind::zoom: return zoom >= kMinZoom && zoom <= kMaxZoom;
    case AugmentKind::shear: return std::abs(shear_deg) <= kMaxShearDeg;
    case AugmentKind::blur: return blur_sigma >= kMinBlurSigma && blur_sigma <= kMaxBlurSigma;
    case AugmentKind::noise: return noise_sigma >= 0.0;
    case AugmentKind::crop:
      return crop_fraction >= kMinCropFraction && crop_fraction <= kMaxCropFraction &&
             crop_offset_x >= 0.0 && crop_offset_x <= 1.0 && crop_offset_y >= 0.0 &&
             crop_offset_y <= 1.0;
  }
  return false;
}

AugmentOp sample_op(AugmentKind kind, Rng& rng) {
  AugmentOp op;
  op.kind = kind;
  switch (kind) {
    case AugmentKind::flip: {
      // Uniform over {h}, {v}, {h and v}.
      const auto pick = rng.below(3);
      op.flip_horizontal = pick != 1;
      op.flip_vertical = pick != 0;
      break;
    }
    case AugmentKind::rotate: op.angle_deg = rng.uniform(-kMaxRotateDeg, kMaxRotateDeg); break;
    case AugmentKind::zoom: op.zoom = rng.uniform(kMinZoom, kMaxZoom); break;
    case AugmentKind::shear: op.shear_deg = rng.uniform(-kMaxShearDeg, kMaxShearDeg); break;
    case AugmentKind::blur: op.blur_sigma = rng.uniform(kMinBlurSigma, kMaxBlurSigma); break;
    case AugmentKind::noise: op.noise_sigma = kNoiseSigma; break;
    case AugmentKind::crop:
      op.crop_fraction = rng.uniform(kMinCropFraction, kMaxCropFraction);
      op.crop_offset_x = rng.uniform();
      op.crop_offset_y = rng.uniform();
      break;
  }
  return op;
}

std::vector<AugmentOp> sample_pipeline(Rng& rng) {
  const std::size_t count = 2 + rng.below(3);
  std::vector<AugmentKind> pool(kAllAugmentKinds.begin(), kAllAugmentKinds.end());
  std::vector<AugmentOp> ops;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = rng.below(pool.size());
    const AugmentKind kind = pool[j];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    ops.push_back(sample_op(kind, rng));
  }
  return ops;
}

Tensor apply_op(const Tensor& pixels, const AugmentOp& op, Rng& rng) {
  if (pixels.rank() != 3) throw ShapeError("augmentation expects [C,H,W], got " + shape_str(pixels.shape()));
  const double h = static_cast<double>(pixels.dim(1)), w = static_cast<double>(pixels.dim(2));
  const double cx = (w - 1.0) / 2.0, cy = (h - 1.0) / 2.0;
  Tensor out;
  switch (op.kind) {
    case AugmentKind::flip: out = flip(pixels, op.flip_horizontal, op.flip_vertical); break;
    case AugmentKind::rotate: {
      const double t = op.angle_deg * kDegToRad;
      const double c = std::cos(t), s = std::sin(t);
      out = warp(pixels, [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        return std::pair{cx + c * dx + s * dy, cy - s * dx + c * dy};
      });
      break;
    }
    case AugmentKind::zoom:
      out = warp(pixels, [&](double x, double y) {
        return std::pair{cx + (x - cx) / op.zoom, cy + (y - cy) / op.zoom};
      });
      break;
    case AugmentKind::shear: {
      const double k = std::tan(op.shear_deg * kDegToRad);
      out = warp(pixels, [&](double x, double y) { return std::pair{x - k * (y - cy), y}; });
      break;
    }
    case AugmentKind::blur: out = gaussian_blur(pixels, op.blur_sigma); break;
    case AugmentKind::noise: {
      out = pixels.detach();
      for (auto& v : out.mutable_data()) v += static_cast<float>(rng.normal(0.0, op.noise_sigma));
      break;
    }
    case AugmentKind::crop: {
      // Square-root of the area fraction gives the side fraction of the window;
      // the window is then stretched back over the full image.
      const double side = std::sqrt(op.crop_fraction);
      const double cw = w * side, ch = h * side;
      const double x0 = (w - cw) * op.crop_offset_x, y0 = (h - ch) * op.crop_offset_y;
      out = warp(pixels, [&](double x, double y) {
        return std::pair{x0 + (x + 0.5) * cw / w - 0.5, y0 + (y + 0.5) * ch / h - 0.5};
      });
      break;
    }
  }
  clamp_unit(out);
  return out;
}

ImageRecord apply_op(const ImageRecord& img, const AugmentOp& op, Rng& rng) {
  return ImageRecord{apply_op(img.pixels, op, rng), img.label, Provenance::augmented, img.source_id};
}

std::vector<std::size_t> balanced_counts(const std::vector<std::size_t>& counts, std::size_t floor) {
  std::vector<std::size_t> out(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = std::max(counts[i], floor);
  return out;
}

LabeledDataset balance_dataset(const LabeledDataset& ds, std::size_t floor, std::uint64_t seed,
                               std::size_t threads) {
  const std::size_t classes = ds.num_classes();
  std::vector<std::vector<std::size_t>> sources(classes);
  for (std::size_t i = 0; i < ds.size(); ++i) sources[static_cast<std::size_t>(ds[i].label)].push_back(i);
  for (std::size_t c = 0; c < classes; ++c) {
    if (sources[c].empty()) {
      throw DataError("cannot balance: class '" + std::string(class_name(static_cast<int>(c))) +
                      "' has no records");
    }
  }

  struct Job {
    std::size_t label, copy, source;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t have = sources[c].size();
    for (std::size_t j = 0; have + j < floor; ++j) jobs.push_back({c, j, sources[c][j % have]});
  }

  const Rng root(seed);
  std::vector<ImageRecord> made(jobs.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Job& job = jobs[i];
      Rng rng = root.fork((static_cast<std::uint64_t>(job.label) << 40) | job.copy);
      const ImageRecord& src = ds[job.source];
      Tensor px = src.pixels;
      for (const auto& op : sample_pipeline(rng)) px = apply_op(px, op, rng);
      made[i] = ImageRecord{std::move(px), src.label, Provenance::augmented,
                            src.source_id + "#aug" + std::to_string(job.copy)};
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  if (workers == 1) {
    run(0, jobs.size());
  } else {
    std::vector<std::future<void>> futures;
    const std::size_t chunk = (jobs.size() + workers - 1) / workers;
    for (std::size_t b = 0; b < jobs.size(); b += chunk) {
      futures.push_back(std::async(std::launch::async, run, b, std::min(jobs.size(), b + chunk)));
    }
    for (auto& f : futures) f.get();
  }

  LabeledDataset out(classes);
  for (const auto& r : ds.records()) out.add(r);
  for (auto& r : made) out.add(std::move(r));
  return out;
}

}  // namespace cavenet::data
