#pragma once

#include "vpet/data/embedding_set.hpp"

#include <cstdint>
#include <span>
#include <unordered_map>

namespace vpet {

/// Labels withheld from a split. Reading them is only legal outside a
/// TrainingGuard; training code paths run under a guard, so any leak
/// through them throws LeakedLabels.
class LabelVault {
 public:
  LabelVault() = default;
  LabelVault(std::vector<SampleId> ids, Labels labels);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<SampleId>& ids() const noexcept { return ids_; }

  /// Diagnostic access to the withheld labels, aligned with ids().
  const Labels& reveal() const;
  /// Withheld label for one id.
  int reveal(SampleId id) const;

 private:
  std::vector<SampleId> ids_;
  Labels labels_;
  std::unordered_map<SampleId, std::size_t> index_;
};

/// While any guard is alive, LabelVault::reveal throws.
class TrainingGuard {
 public:
  TrainingGuard();
  ~TrainingGuard();
  TrainingGuard(const TrainingGuard&) = delete;
  TrainingGuard& operator=(const TrainingGuard&) = delete;

  static bool active() noexcept;
};

struct SplitSpec {
  int shots_per_class = 1;
  std::uint64_t seed = 0;
  double validation_fraction = 0.0;
  /// Fraction of the non-labeled remainder held out as a labelled test set.
  double test_fraction = 0.0;
};

struct DatasetSplit {
  // Parts other than `labeled` are absent when they would hold no rows.
  EmbeddingSet labeled;
  std::optional<EmbeddingSet> unlabeled;   // labels stripped
  std::optional<EmbeddingSet> validation;  // labels stripped
  std::optional<EmbeddingSet> test;
  LabelVault unlabeled_truth;
  LabelVault validation_truth;
};

/// Stratified N-shot split. Per class, members are shuffled with
/// Fisher-Yates seeded by (seed XOR class); the first N go to `labeled`,
/// then the class's test quota, then its validation quota, the rest to
/// `unlabeled`. Quotas are floor(fraction * remainder) overall, spread by
/// per-class floors with leftover slots to the lowest class indices.
/// Rows inside each part keep source order.
DatasetSplit make_split(const EmbeddingSet& source, const SplitSpec& spec);

/// Per-class allocation of `total` slots proportional to `available`
/// (floor per class, leftovers to lowest indices with spare capacity).
std::size_t part_size(const std::optional<EmbeddingSet>& part) noexcept;

std::vector<std::size_t> stratified_quota(std::span<const std::size_t> available, double fraction);

}  // namespace vpet
