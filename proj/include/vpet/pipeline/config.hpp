#pragma once

#include "vpet/data/split.hpp"
#include "vpet/ensemble/ensemble.hpp"
#include "vpet/heads/head.hpp"
#include "vpet/pipeline/synthetic.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vpet::pipeline {

inline constexpr int kConfigSchema = 1;

struct SourceSpec {
  std::string name;
  std::filesystem::path path;
};

/// (head variant n, embedding source m)
struct PairIndex {
  std::size_t head = 0;
  std::size_t source = 0;

  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

/// Every source plays the role of one backbone, every head variant one adaptation method.
struct ExperimentConfig {
  std::vector<SourceSpec> sources;
  /// Used instead of `sources` when set: one source per generated view.
  std::optional<SyntheticSpec> synthetic;
  std::vector<heads::HeadConfig> heads;
  SplitSpec split;
  ensemble::Strategy strategy = ensemble::Strategy::MeanLabels;
  double tau = 0.0;
  /// Unset: chosen by the unsupervised validator panel on the validation split.
  std::optional<PairIndex> final_trainee;
  /// Train the final head on pseudo-labels plus the labelled split (true) or pseudo-labels only.
  bool mix_labeled = true;
  std::uint64_t seed = 0;

  std::size_t source_count() const noexcept;
  /// Throws Config.
  void validate() const;
};

heads::HeadConfig head_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const heads::HeadConfig& config);

/// Relative source paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

/// Seed of the head for pair (n, m); also used to re-initialise the final trainee.
std::uint64_t pair_seed(const ExperimentConfig& config, PairIndex pair);
std::string pair_name(PairIndex pair);

}  // namespace vpet::pipeline
