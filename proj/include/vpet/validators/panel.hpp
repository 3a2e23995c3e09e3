#pragma once

#include "vpet/data/model_outputs.hpp"
#include "vpet/validators/metrics.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vpet::validators {

enum class Criterion { RankMe, AMI, ARI, VMeasure, FMI, CHI, BNM };

inline constexpr std::array<Criterion, 7> kAllCriteria{Criterion::RankMe, Criterion::AMI, Criterion::ARI,
                                                       Criterion::VMeasure, Criterion::FMI, Criterion::CHI,
                                                       Criterion::BNM};

const char* to_string(Criterion criterion);
std::optional<Criterion> parse_criterion(const std::string& name);

struct ValidatorScore {
  Criterion criterion = Criterion::RankMe;
  double value = 0.0;
  ScoreStatus status = ScoreStatus::Defined;
  bool higher_is_better = true;
};

struct ScoreOptions {
  std::uint64_t seed = 0;
  /// k for the k-means cluster labels; class count when unset.
  std::optional<int> clusters;
  double rankme_epsilon = 1e-7;
};

/// All seven criteria in kAllCriteria order. Cluster labels come from
/// kmeans(features, k); AMI/ARI/V-Measure/FMI compare them with the
/// predictions; CHI groups features by prediction; RankMe uses features;
/// BNM uses softmax(logits).
std::vector<ValidatorScore> score_model(const ModelOutputs& outputs, int class_count, const ScoreOptions& options = {});

/// Validator scores M (h x n), competition ranks R and average ranks A.
struct ScorePanel {
  std::vector<std::string> configs;
  std::vector<Criterion> criteria;
  Matrix scores;
  std::vector<std::vector<ScoreStatus>> status;
  Eigen::MatrixXi ranks;
  Vector average_rank;

  std::size_t config_count() const noexcept { return configs.size(); }
};

/// Per column: rank 1 = best, tied scores share the minimum rank,
/// undefined entries get rank h, infinite entries outrank every finite one.
ScorePanel build_panel(std::vector<std::string> configs, const std::vector<std::vector<ValidatorScore>>& all_scores);

/// Convenience form for a plain h x n score matrix with every entry defined.
ScorePanel build_panel(const Matrix& scores);

/// Competition ranks of one column, higher is better.
std::vector<int> competition_ranks(std::span<const double> values, std::span<const ScoreStatus> status);

/// argmin of the average rank, ties to the lowest index.
std::size_t select_config(const ScorePanel& panel);

/// `config,criterion,score,rank`
void write_panel_csv(const ScorePanel& panel, const std::filesystem::path& path);
/// `config,average_rank,selected`
void write_summary_csv(const ScorePanel& panel, const std::filesystem::path& path);

/// Seven-row `criterion,score,status` table as produced by `vpet validate`.
std::string scores_to_csv(const std::vector<ValidatorScore>& scores);
std::vector<ValidatorScore> scores_from_csv(const std::string& text);

}  // namespace vpet::validators
