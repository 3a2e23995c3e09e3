#include "vpet/ensemble/ensemble.hpp"

#include "vpet/error.hpp"
#include "vpet/heads/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vpet::ensemble {

namespace {

template <typename Source, typename Rows>
void check_aligned(const std::vector<Source>& sources, Rows rows_of) {
  if (sources.empty()) throw Error(ErrorKind::InsufficientSources, "ensemble needs at least one source");
  const auto& first = sources.front();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const Matrix& m = rows_of(sources[s]);
    if (static_cast<std::size_t>(m.rows()) != sources[s].ids.size()) {
      throw Error(ErrorKind::Shape, "source " + std::to_string(s) + " ids do not match its rows");
    }
    if (m.rows() != rows_of(first).rows() || m.cols() != rows_of(first).cols() || sources[s].ids != first.ids) {
      throw Error(ErrorKind::MisalignedSources, "source " + std::to_string(s) + " differs in shape or id order");
    }
  }
}

}  // namespace

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::MeanLabels: return "mean_labels";
    case Strategy::MeanLogits: return "mean_logits";
    case Strategy::MeanProbabilities: return "mean_probs";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "mean_labels") return Strategy::MeanLabels;
  if (name == "mean_logits") return Strategy::MeanLogits;
  if (name == "mean_probs" || name == "mean_probabilities") return Strategy::MeanProbabilities;
  throw Error(ErrorKind::Config, "unknown ensemble strategy \"" + name + "\"");
}

HardPseudoLabels pseudo_label(const ModelOutputs& outputs, ThresholdPolicy policy) {
  if (policy.tau < 0.0 || policy.tau > 1.0) throw Error(ErrorKind::Config, "tau must lie in [0,1]");
  const Matrix probs = heads::softmax_rows(outputs.logits);
  const Labels top = argmax_rows(outputs.logits);
  HardPseudoLabels out;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if (probs(i, top[static_cast<std::size_t>(i)]) >= policy.tau) kept.push_back(i);
  }
  out.one_hot = Matrix::Zero(static_cast<Eigen::Index>(kept.size()), outputs.logits.cols());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const int c = top[static_cast<std::size_t>(kept[r])];
    out.one_hot(static_cast<Eigen::Index>(r), c) = 1.0;
    out.ids.push_back(outputs.ids[static_cast<std::size_t>(kept[r])]);
    out.classes.push_back(c);
  }
  return out;
}

PseudoLabelSet ensemble_mean_labels(const std::vector<HardPseudoLabels>& sources) {
  check_aligned(sources, [](const HardPseudoLabels& s) -> const Matrix& { return s.one_hot; });
  const auto& first = sources.front();
  // Integer vote counts keep every entry an exact multiple of 1/k.
  Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(first.one_hot.rows(), first.one_hot.cols());
  for (const auto& s : sources) votes += s.one_hot.cast<int>();
  PseudoLabelSet out;
  out.ids = first.ids;
  out.soft = votes.cast<double>() / static_cast<double>(sources.size());
  out.source_count = sources.size();
  out.strategy = Strategy::MeanLabels;
  return out;
}

PseudoLabelSet ensemble_mean_logits(const std::vector<LogitSource>& sources) {
  check_aligned(sources, [](const LogitSource& s) -> const Matrix& { return s.logits; });
  Matrix sum = Matrix::Zero(sources.front().logits.rows(), sources.front().logits.cols());
  for (const auto& s : sources) sum += s.logits;
  PseudoLabelSet out;
  out.ids = sources.front().ids;
  out.soft = heads::softmax_rows(sum / static_cast<double>(sources.size()));
  out.source_count = sources.size();
  out.strategy = Strategy::MeanLogits;
  return out;
}

PseudoLabelSet ensemble_mean_probs(const std::vector<LogitSource>& sources) {
  check_aligned(sources, [](const LogitSource& s) -> const Matrix& { return s.logits; });
  Matrix sum = Matrix::Zero(sources.front().logits.rows(), sources.front().logits.cols());
  for (const auto& s : sources) sum += heads::softmax_rows(s.logits);
  PseudoLabelSet out;
  out.ids = sources.front().ids;
  out.soft = sum / static_cast<double>(sources.size());
  out.source_count = sources.size();
  out.strategy = Strategy::MeanProbabilities;
  return out;
}

PseudoLabelSet ensemble(Strategy strategy, const std::vector<ModelOutputs>& sources, ThresholdPolicy policy) {
  if (strategy == Strategy::MeanLabels) {
    std::vector<HardPseudoLabels> hard;
    hard.reserve(sources.size());
    for (const auto& s : sources) hard.push_back(pseudo_label(s, policy));
    return ensemble_mean_labels(hard);
  }
  std::vector<LogitSource> logits;
  logits.reserve(sources.size());
  for (const auto& s : sources) logits.push_back({s.ids, s.logits});
  return strategy == Strategy::MeanLogits ? ensemble_mean_logits(logits) : ensemble_mean_probs(logits);
}

EntropyProfile entropy_profile(const Matrix& probabilities) {
  EntropyProfile out;
  out.per_row = Vector::Zero(probabilities.rows());
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < probabilities.cols(); ++j) {
      const double p = probabilities(i, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    out.per_row(i) = h;
  }
  out.mean = probabilities.rows() > 0 ? out.per_row.mean() : 0.0;
  return out;
}

double pseudo_label_accuracy(const PseudoLabelSet& pseudo, const LabelVault& truth) {
  if (pseudo.size() == 0) return 0.0;
  const Labels predicted = argmax_rows(pseudo.soft);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pseudo.size(); ++i) hits += predicted[i] == truth.reveal(pseudo.ids[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pseudo.size());
}

double top_confidence_accuracy(const ModelOutputs& outputs, const LabelVault& truth, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0) throw Error(ErrorKind::Config, "fraction must lie in (0,1]");
  const Matrix probs = heads::softmax_rows(outputs.logits);
  std::vector<std::size_t> order(outputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Vector confidence = probs.rowwise().maxCoeff();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidence(static_cast<Eigen::Index>(a)) > confidence(static_cast<Eigen::Index>(b));
  });
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size()))));
  if (order.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < keep; ++r) {
    const std::size_t i = order[r];
    hits += outputs.predictions[i] == truth.reveal(outputs.ids[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(keep);
}

}  // namespace vpet::ensemble
