#pragma once

#include "cavenet/latent.hpp"
#include "cavenet/rng.hpp"

namespace cavenet::testing {

// Gaussian clusters: row i has class i % classes, mean `separation` along
// axis (class % dim) and unit noise elsewhere.
inline LatentSet cluster_latents(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed,
                                 double separation = 1.5) {
  Rng rng(seed);
  LatentSet set(classes * per_class, dim);
  for (std::size_t i = 0; i < set.rows(); ++i) {
    const std::size_t c = i % classes;
    set.labels[i] = static_cast<int>(c);
    set.ids[i] = std::to_string(i);
    for (std::size_t j = 0; j < dim; ++j) {
      set.row(i)[j] = static_cast<float>(rng.normal() + (j == c % dim ? separation : 0.0));
    }
  }
  return set;
}

}  // namespace cavenet::testing
