#include "vpet/validators/kmeans.hpp"

#include "vpet/error.hpp"
#include "vpet/random.hpp"

#include <limits>

namespace vpet::validators {

namespace {

double squared_distance(const Matrix& x, Eigen::Index i, const Matrix& c, Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

Matrix plus_plus_seeding(const Matrix& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Matrix centroids(k, x.cols());
  centroids.row(0) = x.row(static_cast<Eigen::Index>(uniform_below(rng, static_cast<std::uint64_t>(n))));
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = nearest[static_cast<std::size_t>(i)];
      d = std::min(d, squared_distance(x, i, centroids, c - 1));
      total += d;
    }
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      double target = uniform_unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest[static_cast<std::size_t>(i)];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_below(rng, static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = x.row(pick);
  }
  return centroids;
}

bool assign(const Matrix& x, const Matrix& centroids, Labels& assignments) {
  bool changed = false;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = squared_distance(x, i, centroids, 0);
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
      const double d = squared_distance(x, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    auto& slot = assignments[static_cast<std::size_t>(i)];
    if (slot != best) {
      slot = best;
      changed = true;
    }
  }
  return changed;
}

void update_centroids(const Matrix& x, const Labels& assignments, Matrix& centroids) {
  const Eigen::Index k = centroids.rows();
  Matrix sums = Matrix::Zero(k, x.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    sums.row(assignments[static_cast<std::size_t>(i)]) += x.row(i);
    ++counts[static_cast<std::size_t>(assignments[static_cast<std::size_t>(i)])];
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    Eigen::Index far = 0;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double d = squared_distance(x, i, centroids, assignments[static_cast<std::size_t>(i)]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    centroids.row(c) = x.row(far);
  }
}

}  // namespace

ClusterAssignment kmeans(const Matrix& features, int k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorKind::Config, "k must be positive");
  if (features.rows() < k) {
    throw Error(ErrorKind::TooFewPoints,
                std::to_string(features.rows()) + " points for k=" + std::to_string(k));
  }
  Rng rng(seed);
  ClusterAssignment result;
  result.centroids = plus_plus_seeding(features, k, rng);
  result.assignments.assign(static_cast<std::size_t>(features.rows()), -1);
  assign(features, result.centroids, result.assignments);
  for (int it = 1; it <= kMaxLloydIterations; ++it) {
    result.iterations = it;
    update_centroids(features, result.assignments, result.centroids);
    // A cluster re-seeded onto a point that stays with its old cluster
    // (zero distance tie) also leaves the assignment unchanged.
    if (!assign(features, result.centroids, result.assignments)) break;
  }
  result.inertia = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    result.inertia += squared_distance(features, i, result.centroids, result.assignments[static_cast<std::size_t>(i)]);
  }
  return result;
}

}  // namespace vpet::validators
