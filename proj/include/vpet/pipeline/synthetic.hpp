#pragma once

#include "vpet/data/embedding_set.hpp"

#include <cstdint>
#include <vector>

namespace vpet::pipeline {

/// One latent Gaussian mixture observed through several noisy linear views.
/// Latent class means are N(0, class_separation^2 I); samples add N(0, I).
/// View v maps latent -> view_dim with its own seeded Gaussian projection
/// (entries N(0, 1/latent_dim)) and adds N(0, noise^2) per coordinate.
/// All views share ids and labels; row i has class i % classes.
struct SyntheticSpec {
  int classes = 8;
  int latent_dim = 16;
  int view_dim = 64;
  int views = 4;
  std::size_t samples_per_class = 628;
  double noise = 0.5;
  double class_separation = 1.0;
  std::uint64_t seed = 0;
};

std::vector<EmbeddingSet> make_diverse_views(const SyntheticSpec& spec);

}  // namespace vpet::pipeline
