#pragma once

#include "vpet/data/split.hpp"
#include "vpet/heads/head.hpp"
#include "vpet/pipeline/vpet.hpp"
#include "vpet/validators/panel.hpp"

#include <filesystem>
#include <vector>

namespace vpet::pipeline {

struct HyperparameterSweep {
  validators::ScorePanel panel;
  std::size_t selected = 0;
  std::vector<heads::HeadModel> models;
};

/// One head per grid point on the labelled split, scored with the seven
/// validators on the validation split; selects the lowest average rank.
HyperparameterSweep run_hyperparameter_sweep(std::span<const heads::HeadConfig> grid, const DatasetSplit& split,
                                             const validators::ScoreOptions& options = {});

struct ScalingRow {
  std::size_t ensemble_size = 0;
  double mean_top1 = 0.0;
  double min_top1 = 0.0;
  double max_top1 = 0.0;
  std::size_t subsets = 0;
};

inline constexpr std::size_t kScalingSubsets = 5;

/// For every size s in 1..max_sources, the final accuracy averaged over
/// kScalingSubsets seeded random subsets of the pair pool (every subset
/// when fewer distinct ones exist). The trainee stays fixed across sizes.
std::vector<ScalingRow> run_scaling_sweep(const ExperimentConfig& config, const PairPool& pool,
                                          std::size_t max_sources);

void write_scaling_csv(const std::vector<ScalingRow>& rows, const std::filesystem::path& path);

/// Rank-frequency summary across settings: counts(i, j) = settings where method i ranked j+1.
struct RankingReport {
  std::vector<std::string> methods;
  Eigen::MatrixXi counts;
  Vector mean_rank;
};

/// `accuracy` is settings x methods; competition ranking, rank 1 = highest accuracy.
RankingReport build_ranking_report(std::vector<std::string> methods, const Matrix& accuracy);

/// Reads `setting,<method>,<method>,...` rows.
std::pair<std::vector<std::string>, Matrix> read_accuracy_table(const std::filesystem::path& path);
void write_ranking_report(const RankingReport& report, const std::filesystem::path& csv_path);

}  // namespace vpet::pipeline
