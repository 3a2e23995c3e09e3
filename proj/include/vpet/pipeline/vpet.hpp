#pragma once

#include "vpet/data/split.hpp"
#include "vpet/ensemble/ensemble.hpp"
#include "vpet/heads/head.hpp"
#include "vpet/pipeline/config.hpp"
#include "vpet/validators/panel.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vpet::pipeline {

struct NamedSource {
  std::string name;
  EmbeddingSet set;
};

/// Reads every configured file, or generates the synthetic views.
std::vector<NamedSource> load_sources(const ExperimentConfig& config);

/// The split parts of one source, aligned by id with the reference split.
struct SourceParts {
  EmbeddingSet labeled;
  std::optional<EmbeddingSet> unlabeled;
  std::optional<EmbeddingSet> validation;
  std::optional<EmbeddingSet> test;
};

/// The split is drawn from the first source; every other source is cut
/// along the same ids. Throws MisalignedSources if id sets or labels differ.
struct AlignedSplits {
  DatasetSplit reference;
  std::vector<SourceParts> parts;
};

AlignedSplits split_sources(std::span<const NamedSource> sources, const SplitSpec& spec);

/// Phase (a) and (b) products for one (head variant, source) pair.
struct PairRun {
  PairIndex pair;
  heads::HeadModel model;
  std::optional<ModelOutputs> unlabeled;
  std::optional<ModelOutputs> validation;
  ensemble::HardPseudoLabels pseudo;
};

struct PhaseTimings {
  double supervised = 0.0;        // (a)
  double pseudo_labeling = 0.0;   // (b)
  double trainee_selection = 0.0;
  double ensembling = 0.0;        // (c)
  double self_training = 0.0;     // (d)

  double total() const noexcept { return supervised + pseudo_labeling + trainee_selection + ensembling + self_training; }
};

/// Phases (a) and (b) for every pair, pairs ordered source-major then head.
struct PairPool {
  AlignedSplits splits;
  std::vector<PairRun> runs;
  int class_count = 0;
  PhaseTimings timings;

  const PairRun& at(PairIndex pair) const;
};

PairPool build_pair_pool(const ExperimentConfig& config, std::span<const NamedSource> sources);

/// Chooses (n*, m*): the configured pair, else the lowest average rank of the
/// seven validators over every pair's validation outputs, else (0, 0) when
/// there is no validation split.
PairIndex choose_trainee(const ExperimentConfig& config, const PairPool& pool,
                         std::optional<validators::ScorePanel>* panel_out = nullptr);

/// Phase (c) over the given pool members. With tau > 0, only ids accepted by every member are kept.
ensemble::PseudoLabelSet ensemble_pool(const ExperimentConfig& config, const PairPool& pool,
                                       std::span<const std::size_t> members);

/// Phase (d): re-initialise the trainee's head from its seed and train it on
/// the pseudo-labels (plus the labelled split when mix_labeled).
heads::HeadModel self_train(const ExperimentConfig& config, const PairPool& pool, PairIndex trainee,
                            const ensemble::PseudoLabelSet& pseudo);

struct PairDiagnostics {
  PairIndex pair;
  std::string name;
  double test_top1 = 0.0;
  double mean_entropy = 0.0;
  double top_confidence_accuracy = 0.0;
};

struct VpetResult {
  heads::HeadModel final_model;
  PairIndex trainee;
  double final_top1 = 0.0;
  double pseudo_label_accuracy = 0.0;
  std::size_t pseudo_label_count = 0;
  std::vector<PairDiagnostics> pairs;
  std::optional<validators::ScorePanel> trainee_panel;
  ensemble::PseudoLabelSet pseudo;
  PhaseTimings timings;
};

VpetResult run_vpet(const ExperimentConfig& config, std::span<const NamedSource> sources);
VpetResult run_vpet(const ExperimentConfig& config);

/// Runs phases (a)-(d) for an already built pool.
VpetResult run_vpet(const ExperimentConfig& config, const PairPool& pool);

/// Accuracy of a head trained on the labelled split of one source only.
double labeled_only_top1(const PairPool& pool, PairIndex pair);

/// Writes run/<pair>/{model.head,outputs.emb,features.emb,validation/...},
/// run/pseudo.emb, run/panel.csv, run/result.json and run/timings.json.
void write_run(const VpetResult& result, const PairPool& pool, const ExperimentConfig& config,
               const std::filesystem::path& out_dir);

nlohmann::json result_to_json(const VpetResult& result, const ExperimentConfig& config);

/// outputs.emb holds logits (feature block) and predictions (label block);
/// features.emb holds the head's features.
void write_model_outputs(const ModelOutputs& outputs, const std::filesystem::path& dir);
ModelOutputs read_model_outputs(const std::filesystem::path& dir);

}  // namespace vpet::pipeline
