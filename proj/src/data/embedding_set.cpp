#include "vpet/data/embedding_set.hpp"

#include "vpet/error.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace vpet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyDataset: return "empty dataset";
    case ErrorKind::InsufficientShots: return "insufficient shots";
    case ErrorKind::BadMagic: return "bad magic";
    case ErrorKind::UnsupportedVersion: return "unsupported version";
    case ErrorKind::Truncated: return "truncated payload";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::LabelOutOfRange: return "label out of range";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::TooFewPoints: return "too few points";
    case ErrorKind::LengthMismatch: return "length mismatch";
    case ErrorKind::NonStochastic: return "non-stochastic rows";
    case ErrorKind::MisalignedSources: return "misaligned sources";
    case ErrorKind::InsufficientSources: return "insufficient sources";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::LeakedLabels: return "leaked labels";
  }
  return "unknown";
}

namespace {

std::vector<SampleId> iota_ids(Eigen::Index n) {
  std::vector<SampleId> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), SampleId{0});
  return ids;
}

}  // namespace

EmbeddingSet::EmbeddingSet(Matrix features, std::optional<Labels> labels, int class_count)
    : EmbeddingSet(std::move(features), std::move(labels), class_count, {}) {}

EmbeddingSet::EmbeddingSet(Matrix features, std::optional<Labels> labels, int class_count,
                           std::vector<SampleId> ids)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_count_(class_count),
      ids_(std::move(ids)) {
  const auto n = features_.rows();
  if (ids_.empty() && n > 0) ids_ = iota_ids(n);
  if (n < 1 || features_.cols() < 1) {
    throw Error(ErrorKind::EmptyDataset, "embedding set needs n >= 1 and d >= 1");
  }
  if (!features_.allFinite()) throw Error(ErrorKind::NonFinite, "feature matrix has non-finite entries");
  if (ids_.size() != static_cast<std::size_t>(n)) {
    throw Error(ErrorKind::Shape, "ids length " + std::to_string(ids_.size()) + " != n " + std::to_string(n));
  }
  if (class_count_ < 0 || (labels_ && class_count_ == 0)) {
    throw Error(ErrorKind::Shape, "labelled set needs a positive class count");
  }
  if (labels_) {
    if (labels_->size() != ids_.size()) throw Error(ErrorKind::Shape, "labels length != n");
    for (std::size_t i = 0; i < labels_->size(); ++i) {
      const int y = (*labels_)[i];
      if (y < 0 || y >= class_count_) {
        throw Error(ErrorKind::LabelOutOfRange,
                    "label " + std::to_string(y) + " at row " + std::to_string(i) + " outside [0, " +
                        std::to_string(class_count_) + ")");
      }
    }
  }
  std::unordered_set<SampleId> seen;
  seen.reserve(ids_.size());
  for (SampleId id : ids_) {
    if (!seen.insert(id).second) throw Error(ErrorKind::Shape, "duplicate sample id " + std::to_string(id));
  }
}

const Labels& EmbeddingSet::labels() const {
  if (!labels_) throw Error(ErrorKind::Shape, "embedding set has no labels");
  return *labels_;
}

EmbeddingSet EmbeddingSet::select(std::span<const std::size_t> rows) const {
  Matrix features(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<SampleId> ids;
  ids.reserve(rows.size());
  std::optional<Labels> labels;
  if (labels_) labels.emplace().reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw Error(ErrorKind::Shape, "row index out of range");
    features.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(rows[i]));
    ids.push_back(ids_[rows[i]]);
    if (labels_) labels->push_back((*labels_)[rows[i]]);
  }
  return EmbeddingSet(std::move(features), std::move(labels), class_count_, std::move(ids));
}

EmbeddingSet EmbeddingSet::without_labels() const {
  return EmbeddingSet(features_, std::nullopt, class_count_, ids_);
}

EmbeddingSet EmbeddingSet::select_ids(std::span<const SampleId> ids) const {
  std::unordered_map<SampleId, std::size_t> index;
  index.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) index.emplace(ids_[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (SampleId id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorKind::MisalignedSources, "sample id " + std::to_string(id) + " not found");
    rows.push_back(it->second);
  }
  return select(rows);
}

EmbeddingSet concatenate(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim() != b.dim()) throw Error(ErrorKind::Shape, "cannot concatenate sets of different dim");
  if (a.class_count() != b.class_count()) throw Error(ErrorKind::Shape, "class counts differ");
  Matrix features(static_cast<Eigen::Index>(a.size() + b.size()), static_cast<Eigen::Index>(a.dim()));
  features << a.features(), b.features();
  std::vector<SampleId> ids = a.ids();
  ids.insert(ids.end(), b.ids().begin(), b.ids().end());
  std::optional<Labels> labels;
  if (a.has_labels() && b.has_labels()) {
    labels = a.labels();
    labels->insert(labels->end(), b.labels().begin(), b.labels().end());
  }
  return EmbeddingSet(std::move(features), std::move(labels), a.class_count(), std::move(ids));
}

}  // namespace vpet
