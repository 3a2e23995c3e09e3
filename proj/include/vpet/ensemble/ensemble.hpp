#pragma once

#include "vpet/data/model_outputs.hpp"
#include "vpet/data/split.hpp"

#include <string>
#include <vector>

namespace vpet::ensemble {

enum class Strategy { MeanLabels, MeanLogits, MeanProbabilities };

const char* to_string(Strategy strategy);
Strategy parse_strategy(const std::string& name);

/// Soft pseudo-labels over the unlabeled samples.
struct PseudoLabelSet {
  std::vector<SampleId> ids;
  Matrix soft;  // |U| x C, row-stochastic
  std::size_t source_count = 0;
  Strategy strategy = Strategy::MeanLabels;

  std::size_t size() const noexcept { return ids.size(); }
};

struct ThresholdPolicy {
  double tau = 0.0;
};

/// Accepted ids with one-hot rows of argmax softmax(logits).
struct HardPseudoLabels {
  std::vector<SampleId> ids;
  Matrix one_hot;
  Labels classes;
};

/// A sample is accepted iff its max softmax probability is >= tau.
HardPseudoLabels pseudo_label(const ModelOutputs& outputs, ThresholdPolicy policy = {});

/// Logits of one source together with the ids its rows belong to.
struct LogitSource {
  std::vector<SampleId> ids;
  Matrix logits;
};

PseudoLabelSet ensemble_mean_labels(const std::vector<HardPseudoLabels>& sources);
PseudoLabelSet ensemble_mean_logits(const std::vector<LogitSource>& sources);
PseudoLabelSet ensemble_mean_probs(const std::vector<LogitSource>& sources);

/// Dispatches on `strategy`; MeanLabels pseudo-labels every source with `policy` first.
PseudoLabelSet ensemble(Strategy strategy, const std::vector<ModelOutputs>& sources, ThresholdPolicy policy = {});

struct EntropyProfile {
  Vector per_row;
  double mean = 0.0;
};

/// Natural-log Shannon entropy per row, 0 log 0 = 0.
EntropyProfile entropy_profile(const Matrix& probabilities);

/// Fraction of samples whose argmax soft label equals the withheld label.
double pseudo_label_accuracy(const PseudoLabelSet& pseudo, const LabelVault& truth);

/// Accuracy over the `fraction` most confident rows (max softmax), ties by row order.
double top_confidence_accuracy(const ModelOutputs& outputs, const LabelVault& truth, double fraction = 0.2);

}  // namespace vpet::ensemble
