#pragma once

#include "vpet/data/embedding_set.hpp"

#include <cstdint>

namespace vpet::validators {

struct ClusterAssignment {
  Labels assignments;
  Matrix centroids;  // k x d
  double inertia = 0.0;
  int iterations = 0;
};

inline constexpr int kMaxLloydIterations = 300;

/// Single seeded run: k-means++ seeding, then Lloyd iterations until the
/// assignment stops changing or kMaxLloydIterations. An empty cluster is
/// re-seeded at the point farthest from its current centroid.
/// Distance ties go to the lowest cluster index. Throws TooFewPoints if k > n.
ClusterAssignment kmeans(const Matrix& features, int k, std::uint64_t seed);

}  // namespace vpet::validators
