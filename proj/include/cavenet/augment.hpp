#pragma once

// The seven augmentation operators and class rebalancing.
//
// Geometric operators (rotate, zoom, shear, crop) resample by inverse mapping
// with bilinear interpolation; coordinates falling outside the image are
// mirrored back in (reflect-101, the edge pixel is not repeated). Every
// operator returns an image of the input's shape clamped to [0, 1].

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "cavenet/data.hpp"
#include "cavenet/rng.hpp"

namespace cavenet::data {

enum class AugmentKind { flip, rotate, zoom, shear, blur, noise, crop };
inline constexpr std::array<AugmentKind, 7> kAllAugmentKinds = {
    AugmentKind::flip, AugmentKind::rotate, AugmentKind::zoom, AugmentKind::shear,
    AugmentKind::blur, AugmentKind::noise,  AugmentKind::crop};
std::string_view augment_name(AugmentKind kind);

// Parameter ranges.
inline constexpr double kMaxRotateDeg = 20.0;
inline constexpr double kMinZoom = 0.85, kMaxZoom = 1.15;
inline constexpr double kMaxShearDeg = 10.0;
inline constexpr std::size_t kBlurKernel = 5;
inline constexpr double kMinBlurSigma = 0.1, kMaxBlurSigma = 1.0;
inline constexpr double kNoiseSigma = 0.05;
inline constexpr double kMinCropFraction = 0.85, kMaxCropFraction = 1.0;

struct AugmentOp {
  AugmentKind kind = AugmentKind::flip;
  bool flip_horizontal = false;
  bool flip_vertical = false;
  double angle_deg = 0.0;      // rotate
  double zoom = 1.0;           // zoom: >1 zooms in
  double shear_deg = 0.0;      // shear (horizontal)
  double blur_sigma = 0.0;     // blur
  double noise_sigma = kNoiseSigma;
  double crop_fraction = 1.0;  // crop: kept area fraction
  double crop_offset_x = 0.0;  // crop: window offset as a fraction of the free margin
  double crop_offset_y = 0.0;

  // True when every parameter lies inside its declared range.
  bool valid() const;
};

// Fresh parameters for one operator. A flip always flips at least one axis.
AugmentOp sample_op(AugmentKind kind, Rng& rng);

// 2 to 4 distinct operators (count uniform over {2,3,4}), in sampling order.
std::vector<AugmentOp> sample_pipeline(Rng& rng);

// `rng` is only consumed by the noise operator.
ImageRecord apply_op(const ImageRecord& img, const AugmentOp& op, Rng& rng);
Tensor apply_op(const Tensor& pixels, const AugmentOp& op, Rng& rng);

// Tops every class below `floor` up to exactly `floor` records with augmented
// copies. Sources are cycled round-robin in dataset order; copy j of a class
// draws its pipeline from a generator forked from `seed` and (label, j), so the
// result does not depend on `threads`. Originals are kept verbatim and first.
LabeledDataset balance_dataset(const LabeledDataset& ds, std::size_t floor, std::uint64_t seed,
                               std::size_t threads = 1);

// Target per-class counts: max(count, floor).
std::vector<std::size_t> balanced_counts(const std::vector<std::size_t>& counts, std::size_t floor);

}  // namespace cavenet::data
