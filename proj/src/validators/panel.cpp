#include "vpet/validators/panel.hpp"

#include "vpet/error.hpp"
#include "vpet/heads/head.hpp"
#include "vpet/validators/kmeans.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace vpet::validators {

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

const char* status_name(ScoreStatus s) {
  switch (s) {
    case ScoreStatus::Defined: return "ok";
    case ScoreStatus::Undefined: return "undefined";
    case ScoreStatus::Infinite: return "infinite";
  }
  return "undefined";
}

ValidatorScore from_metric(Criterion c, MetricValue m) { return {c, m.value, m.status, true}; }
ValidatorScore from_value(Criterion c, double v) { return {c, v, ScoreStatus::Defined, true}; }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

}  // namespace

const char* to_string(Criterion criterion) {
  switch (criterion) {
    case Criterion::RankMe: return "RankMe";
    case Criterion::AMI: return "AMI";
    case Criterion::ARI: return "ARI";
    case Criterion::VMeasure: return "VMeasure";
    case Criterion::FMI: return "FMI";
    case Criterion::CHI: return "CHI";
    case Criterion::BNM: return "BNM";
  }
  return "?";
}

std::optional<Criterion> parse_criterion(const std::string& name) {
  for (Criterion c : kAllCriteria)
    if (name == to_string(c)) return c;
  return std::nullopt;
}

std::vector<ValidatorScore> score_model(const ModelOutputs& outputs, int class_count, const ScoreOptions& options) {
  if (outputs.size() == 0 || static_cast<std::size_t>(outputs.features.rows()) != outputs.size() ||
      static_cast<std::size_t>(outputs.logits.rows()) != outputs.size()) {
    throw Error(ErrorKind::Shape, "model outputs are incomplete or ragged");
  }
  const int k = options.clusters.value_or(class_count);
  const Labels clusters = kmeans(outputs.features, k, options.seed).assignments;
  const Labels& predictions = outputs.predictions;
  return {
      from_metric(Criterion::RankMe, rankme(outputs.features, options.rankme_epsilon)),
      from_value(Criterion::AMI, ami(predictions, clusters)),
      from_metric(Criterion::ARI, ari(predictions, clusters)),
      from_value(Criterion::VMeasure, v_measure(predictions, clusters)),
      from_value(Criterion::FMI, fmi(predictions, clusters)),
      from_metric(Criterion::CHI, chi(outputs.features, predictions)),
      from_value(Criterion::BNM, bnm(heads::softmax_rows(outputs.logits))),
  };
}

std::vector<int> competition_ranks(std::span<const double> values, std::span<const ScoreStatus> status) {
  const std::size_t h = values.size();
  auto effective = [&](std::size_t i) {
    return status[i] == ScoreStatus::Infinite ? std::numeric_limits<double>::infinity() : values[i];
  };
  std::vector<int> ranks(h);
  for (std::size_t i = 0; i < h; ++i) {
    if (status[i] == ScoreStatus::Undefined) {
      ranks[i] = static_cast<int>(h);
      continue;
    }
    int better = 0;
    for (std::size_t j = 0; j < h; ++j)
      if (status[j] != ScoreStatus::Undefined && effective(j) > effective(i)) ++better;
    ranks[i] = better + 1;
  }
  return ranks;
}

ScorePanel build_panel(std::vector<std::string> configs, const std::vector<std::vector<ValidatorScore>>& all_scores) {
  if (all_scores.empty() || all_scores.front().empty()) throw Error(ErrorKind::Shape, "panel needs h >= 1 and n >= 1");
  if (configs.size() != all_scores.size()) throw Error(ErrorKind::Shape, "config names do not match score rows");
  const std::size_t h = all_scores.size();
  const std::size_t n = all_scores.front().size();
  ScorePanel panel;
  panel.configs = std::move(configs);
  for (const auto& s : all_scores.front()) panel.criteria.push_back(s.criterion);
  panel.scores.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(n));
  panel.status.assign(h, std::vector<ScoreStatus>(n));
  for (std::size_t i = 0; i < h; ++i) {
    if (all_scores[i].size() != n) throw Error(ErrorKind::Shape, "ragged score rows");
    for (std::size_t j = 0; j < n; ++j) {
      const auto& s = all_scores[i][j];
      if (s.criterion != panel.criteria[j]) throw Error(ErrorKind::Shape, "criterion order differs between rows");
      if (s.status == ScoreStatus::Defined && !std::isfinite(s.value)) {
        throw Error(ErrorKind::NonFinite, "score for config " + panel.configs[i]);
      }
      // Every criterion in scope is higher-is-better; negate the rest.
      panel.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.higher_is_better ? s.value : -s.value;
      panel.status[i][j] = s.status;
    }
  }
  panel.ranks.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(n));
  std::vector<double> column(h);
  std::vector<ScoreStatus> column_status(h);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < h; ++i) {
      column[i] = panel.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      column_status[i] = panel.status[i][j];
    }
    const auto r = competition_ranks(column, column_status);
    for (std::size_t i = 0; i < h; ++i) panel.ranks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i];
  }
  panel.average_rank = panel.ranks.cast<double>().rowwise().mean();
  return panel;
}

ScorePanel build_panel(const Matrix& scores) {
  std::vector<std::vector<ValidatorScore>> rows(static_cast<std::size_t>(scores.rows()));
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    names.push_back(std::to_string(i));
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      // Column identity only; the tag cycles through the seven criteria.
      rows[static_cast<std::size_t>(i)].push_back(
          {kAllCriteria[static_cast<std::size_t>(j) % kAllCriteria.size()], scores(i, j), ScoreStatus::Defined, true});
    }
  }
  return build_panel(std::move(names), rows);
}

std::size_t select_config(const ScorePanel& panel) {
  if (panel.average_rank.size() == 0) throw Error(ErrorKind::Shape, "empty panel");
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < panel.average_rank.size(); ++i)
    if (panel.average_rank(i) < panel.average_rank(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

void write_panel_csv(const ScorePanel& panel, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "config,criterion,score,rank\n";
  for (std::size_t i = 0; i < panel.config_count(); ++i) {
    for (std::size_t j = 0; j < panel.criteria.size(); ++j) {
      const auto s = panel.status[i][j];
      const auto e = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
      out << panel.configs[i] << ',' << to_string(panel.criteria[j]) << ','
          << (s == ScoreStatus::Undefined ? std::string("undefined")
              : s == ScoreStatus::Infinite ? std::string("inf")
                                           : format_double(panel.scores(e(i), e(j))))
          << ',' << panel.ranks(e(i), e(j)) << '\n';
    }
  }
}

void write_summary_csv(const ScorePanel& panel, const std::filesystem::path& path) {
  auto out = open_out(path);
  const std::size_t selected = select_config(panel);
  out << "config,average_rank,selected\n";
  for (std::size_t i = 0; i < panel.config_count(); ++i) {
    out << panel.configs[i] << ',' << format_double(panel.average_rank(static_cast<Eigen::Index>(i))) << ','
        << (i == selected ? 1 : 0) << '\n';
  }
}

std::string scores_to_csv(const std::vector<ValidatorScore>& scores) {
  std::ostringstream os;
  os << "criterion,score,status\n";
  for (const auto& s : scores) os << to_string(s.criterion) << ',' << format_double(s.value) << ',' << status_name(s.status) << '\n';
  return os.str();
}

std::vector<ValidatorScore> scores_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("criterion,score,status", 0) != 0) {
    throw Error(ErrorKind::Config, "score CSV must start with header criterion,score,status");
  }
  std::vector<ValidatorScore> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, value, status;
    std::getline(row, name, ',');
    std::getline(row, value, ',');
    std::getline(row, status, ',');
    const auto criterion = parse_criterion(name);
    if (!criterion) throw Error(ErrorKind::Config, "unknown criterion \"" + name + "\"");
    ValidatorScore s;
    s.criterion = *criterion;
    if (status == "undefined") {
      s.status = ScoreStatus::Undefined;
    } else if (status == "infinite") {
      s.status = ScoreStatus::Infinite;
      s.value = std::numeric_limits<double>::infinity();
    } else {
      try {
        s.value = std::stod(value);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, "bad score \"" + value + "\"");
      }
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace vpet::validators
