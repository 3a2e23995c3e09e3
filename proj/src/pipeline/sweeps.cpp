#include "vpet/pipeline/sweeps.hpp"

#include "vpet/error.hpp"
#include "vpet/random.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace vpet::pipeline {

namespace {

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > 1'000'000) return r;
  }
  return r;
}

void all_subsets(std::size_t n, std::size_t k, std::size_t start, std::vector<std::size_t>& current,
                 std::vector<std::vector<std::size_t>>& out) {
  if (current.size() == k) {
    out.push_back(current);
    return;
  }
  for (std::size_t i = start; i < n; ++i) {
    current.push_back(i);
    all_subsets(n, k, i + 1, current, out);
    current.pop_back();
  }
}

std::vector<std::vector<std::size_t>> choose_subsets(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out;
  if (binomial(n, k) <= kScalingSubsets) {
    std::vector<std::size_t> current;
    all_subsets(n, k, 0, current, out);
    return out;
  }
  Rng rng(seed);
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::size_t> indices(n);
  while (out.size() < kScalingSubsets) {
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    fisher_yates(std::span<std::size_t>(indices), rng);
    std::vector<std::size_t> subset(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(subset.begin(), subset.end());
    if (seen.insert(subset).second) out.push_back(std::move(subset));
  }
  return out;
}

}  // namespace

HyperparameterSweep run_hyperparameter_sweep(std::span<const heads::HeadConfig> grid, const DatasetSplit& split,
                                             const validators::ScoreOptions& options) {
  if (grid.empty()) throw Error(ErrorKind::Config, "hyperparameter grid is empty");
  if (!split.validation) throw Error(ErrorKind::EmptyDataset, "hyperparameter sweep needs a validation split");
  const TrainingGuard guard;
  HyperparameterSweep out;
  std::vector<std::string> names;
  std::vector<std::vector<validators::ValidatorScore>> scores;
  const int classes = split.labeled.class_count();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.models.push_back(
        heads::train_head(split.labeled, heads::TrainTargets::hard(split.labeled.labels(), classes), grid[i]));
    scores.push_back(validators::score_model(heads::forward(out.models.back(), *split.validation), classes, options));
    names.push_back(std::to_string(i));
  }
  out.panel = validators::build_panel(std::move(names), scores);
  out.selected = validators::select_config(out.panel);
  return out;
}

std::vector<ScalingRow> run_scaling_sweep(const ExperimentConfig& config, const PairPool& pool,
                                          std::size_t max_sources) {
  if (max_sources < 1 || max_sources > pool.runs.size()) {
    throw Error(ErrorKind::InsufficientSources, "scaling sweep to " + std::to_string(max_sources) +
                                                    " sources needs that many pool members, have " +
                                                    std::to_string(pool.runs.size()));
  }
  const auto& trainee_test = pool.splits.parts.at(0).test;
  if (!trainee_test) throw Error(ErrorKind::Config, "split produced no test set");
  PairIndex trainee;
  {
    const TrainingGuard guard;
    trainee = choose_trainee(config, pool);
  }
  const auto& test = *pool.splits.parts.at(trainee.source).test;

  std::vector<ScalingRow> rows;
  for (std::size_t s = 1; s <= max_sources; ++s) {
    const auto subsets = choose_subsets(pool.runs.size(), s, derive_seed(config.seed, 0x5ca1e, s));
    ScalingRow row;
    row.ensemble_size = s;
    row.subsets = subsets.size();
    row.min_top1 = 1.0;
    double sum = 0.0;
    for (const auto& subset : subsets) {
      const auto pseudo = ensemble_pool(config, pool, subset);
      const auto model = self_train(config, pool, trainee, pseudo);
      const double acc = heads::top1_accuracy(heads::forward(model, test), test.labels());
      sum += acc;
      row.min_top1 = std::min(row.min_top1, acc);
      row.max_top1 = std::max(row.max_top1, acc);
    }
    row.mean_top1 = sum / static_cast<double>(subsets.size());
    rows.push_back(row);
  }
  return rows;
}

void write_scaling_csv(const std::vector<ScalingRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "ensemble_size,mean_top1,min_top1,max_top1,subsets\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.ensemble_size << ',' << r.mean_top1 << ',' << r.min_top1 << ',' << r.max_top1 << ',' << r.subsets << '\n';
  }
}

RankingReport build_ranking_report(std::vector<std::string> methods, const Matrix& accuracy) {
  const auto k = static_cast<std::size_t>(accuracy.cols());
  if (k == 0 || accuracy.rows() == 0) throw Error(ErrorKind::Shape, "ranking report needs settings and methods");
  if (methods.size() != k) throw Error(ErrorKind::Shape, "method names do not match table columns");
  if (!accuracy.allFinite()) throw Error(ErrorKind::NonFinite, "accuracy table");
  RankingReport report;
  report.methods = std::move(methods);
  report.counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  report.mean_rank = Vector::Zero(static_cast<Eigen::Index>(k));
  const std::vector<validators::ScoreStatus> defined(k, validators::ScoreStatus::Defined);
  std::vector<double> row(k);
  for (Eigen::Index s = 0; s < accuracy.rows(); ++s) {
    for (std::size_t i = 0; i < k; ++i) row[i] = accuracy(s, static_cast<Eigen::Index>(i));
    const auto ranks = validators::competition_ranks(row, defined);
    for (std::size_t i = 0; i < k; ++i) {
      ++report.counts(static_cast<Eigen::Index>(i), ranks[i] - 1);
      report.mean_rank(static_cast<Eigen::Index>(i)) += ranks[i];
    }
  }
  report.mean_rank /= static_cast<double>(accuracy.rows());
  return report;
}

std::pair<std::vector<std::string>, Matrix> read_accuracy_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyDataset, path.string() + " is empty");
  auto header = split_line(line);
  if (header.size() < 2) throw Error(ErrorKind::Shape, "table needs a setting column and at least one method");
  std::vector<std::string> methods(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) throw Error(ErrorKind::Shape, "ragged table row: " + line);
    std::vector<double> values;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      try {
        values.push_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, "bad accuracy \"" + cells[i] + "\"");
      }
    }
    rows.push_back(std::move(values));
  }
  Matrix table(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(methods.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < methods.size(); ++c) table(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return {std::move(methods), std::move(table)};
}

void write_ranking_report(const RankingReport& report, const std::filesystem::path& csv_path) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + csv_path.string());
  out << "method";
  for (Eigen::Index j = 0; j < report.counts.cols(); ++j) out << ",rank" << (j + 1);
  out << ",mean_rank\n";
  for (std::size_t i = 0; i < report.methods.size(); ++i) {
    out << report.methods[i];
    for (Eigen::Index j = 0; j < report.counts.cols(); ++j) out << ',' << report.counts(static_cast<Eigen::Index>(i), j);
    out << ',' << report.mean_rank(static_cast<Eigen::Index>(i)) << '\n';
  }
}

}  // namespace vpet::pipeline
