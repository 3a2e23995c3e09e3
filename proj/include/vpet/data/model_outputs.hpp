#pragma once

#include "vpet/data/embedding_set.hpp"

namespace vpet {

/// Features, logits and predictions of one model over one dataset.
struct ModelOutputs {
  Matrix features;
  Matrix logits;
  Labels predictions;
  std::vector<SampleId> ids;

  std::size_t size() const noexcept { return predictions.size(); }
  int class_count() const noexcept { return static_cast<int>(logits.cols()); }
};

/// Row-wise argmax; ties go to the lowest column index.
Labels argmax_rows(const Matrix& m);

}  // namespace vpet
