#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace vpet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SampleId = std::uint64_t;
using Labels = std::vector<int>;

/// Dense n x d feature matrix with optional labels and stable sample ids.
///
/// class_count may be 0 only when labels are absent (class count unknown).
/// The constructor enforces every invariant; instances are immutable.
class EmbeddingSet {
 public:
  EmbeddingSet(Matrix features, std::optional<Labels> labels, int class_count,
               std::vector<SampleId> ids);

  /// Ids default to 0..n-1.
  EmbeddingSet(Matrix features, std::optional<Labels> labels, int class_count);

  std::size_t size() const noexcept { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  int class_count() const noexcept { return class_count_; }

  const Matrix& features() const noexcept { return features_; }
  bool has_labels() const noexcept { return labels_.has_value(); }
  /// Throws Shape if labels are absent.
  const Labels& labels() const;
  const std::vector<SampleId>& ids() const noexcept { return ids_; }

  /// Rows in the given order.
  EmbeddingSet select(std::span<const std::size_t> rows) const;
  EmbeddingSet without_labels() const;

  /// Rows whose id appears in `ids`, in the order of `ids`. Throws MisalignedSources on a missing id.
  EmbeddingSet select_ids(std::span<const SampleId> ids) const;

 private:
  Matrix features_;
  std::optional<Labels> labels_;
  int class_count_;
  std::vector<SampleId> ids_;
};

/// Concatenate two sets with equal dim and class count. Labels are kept only if both carry them.
EmbeddingSet concatenate(const EmbeddingSet& a, const EmbeddingSet& b);

}  // namespace vpet
