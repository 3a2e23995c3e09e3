#include "vpet/pipeline/synthetic.hpp"

#include "vpet/error.hpp"
#include "vpet/random.hpp"

#include <cmath>

namespace vpet::pipeline {

std::vector<EmbeddingSet> make_diverse_views(const SyntheticSpec& spec) {
  if (spec.classes < 1 || spec.latent_dim < 1 || spec.view_dim < 1 || spec.views < 1 || spec.samples_per_class < 1) {
    throw Error(ErrorKind::Config, "synthetic benchmark dimensions must be positive");
  }
  const auto n = static_cast<Eigen::Index>(spec.samples_per_class * static_cast<std::size_t>(spec.classes));
  Rng latent_rng(derive_seed(spec.seed, 0x1a7e));

  Matrix means(spec.classes, spec.latent_dim);
  for (Eigen::Index c = 0; c < means.rows(); ++c)
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = spec.class_separation * standard_normal(latent_rng);

  Labels labels(static_cast<std::size_t>(n));
  Matrix latent(n, spec.latent_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % spec.classes);
    labels[static_cast<std::size_t>(i)] = y;
    for (Eigen::Index j = 0; j < latent.cols(); ++j) latent(i, j) = means(y, j) + standard_normal(latent_rng);
  }

  std::vector<EmbeddingSet> views;
  views.reserve(static_cast<std::size_t>(spec.views));
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  for (int v = 0; v < spec.views; ++v) {
    Rng view_rng(derive_seed(spec.seed, 0x7e3, static_cast<std::uint64_t>(v) + 1));
    Matrix projection(spec.view_dim, spec.latent_dim);
    for (Eigen::Index i = 0; i < projection.rows(); ++i)
      for (Eigen::Index j = 0; j < projection.cols(); ++j) projection(i, j) = scale * standard_normal(view_rng);
    Matrix features = latent * projection.transpose();
    for (Eigen::Index i = 0; i < features.rows(); ++i)
      for (Eigen::Index j = 0; j < features.cols(); ++j) features(i, j) += spec.noise * standard_normal(view_rng);
    views.emplace_back(std::move(features), labels, spec.classes);
  }
  return views;
}

}  // namespace vpet::pipeline
