#include "vpet/validators/metrics.hpp"

#include "vpet/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>

namespace vpet::validators {

namespace {

void check_lengths(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "labelings have lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

std::vector<std::size_t> compact(std::span<const int> labels, std::size_t& distinct) {
  std::map<int, std::size_t> index;
  for (int v : labels) index.emplace(v, 0);
  std::size_t next = 0;
  for (auto& [value, slot] : index) slot = next++;
  distinct = next;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = index[labels[i]];
  return out;
}

// Sorted summation keeps results independent of argument order.
double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

double entropy(const std::vector<std::size_t>& sizes, std::size_t n) {
  std::vector<double> terms;
  const auto total = static_cast<double>(n);
  for (std::size_t s : sizes)
    if (s > 0) terms.push_back(-(static_cast<double>(s) / total) * std::log(static_cast<double>(s) / total));
  return sorted_sum(std::move(terms));
}

// H(a | b) = -sum_ij (n_ij / n) log(n_ij / b_j)
double conditional_entropy(const Contingency& t, bool a_given_b) {
  std::vector<double> terms;
  const auto total = static_cast<double>(t.n);
  for (std::size_t i = 0; i < t.a_sizes.size(); ++i) {
    for (std::size_t j = 0; j < t.b_sizes.size(); ++j) {
      const auto nij = static_cast<double>(t.at(i, j));
      if (nij == 0.0) continue;
      const auto cond = static_cast<double>(a_given_b ? t.b_sizes[j] : t.a_sizes[i]);
      terms.push_back(-(nij / total) * std::log(nij / cond));
    }
  }
  return sorted_sum(std::move(terms));
}

// Symmetric in its arguments and exactly H(a) when a == b.
double mutual_information(const Contingency& t, double ha, double hb) {
  const double via_a = ha - conditional_entropy(t, true);
  const double via_b = hb - conditional_entropy(t, false);
  return std::max(0.0, 0.5 * (via_a + via_b));
}

std::int64_t pairs(std::size_t k) {
  const auto v = static_cast<std::int64_t>(k);
  return v * (v - 1) / 2;
}

struct PairCounts {
  std::int64_t both = 0;    // same cluster in a and in b
  std::int64_t same_a = 0;
  std::int64_t same_b = 0;
  std::int64_t total = 0;
};

PairCounts pair_counts(const Contingency& t) {
  PairCounts p;
  for (std::size_t c : t.cells) p.both += pairs(c);
  for (std::size_t s : t.a_sizes) p.same_a += pairs(s);
  for (std::size_t s : t.b_sizes) p.same_b += pairs(s);
  p.total = pairs(t.n);
  return p;
}

Vector singular_values(const Matrix& m) {
  const Eigen::MatrixXd dense = m;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense);
  return svd.singularValues();
}

}  // namespace

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  check_lengths(a, b);
  Contingency t;
  t.n = a.size();
  std::size_t ka = 0;
  std::size_t kb = 0;
  const auto ca = compact(a, ka);
  const auto cb = compact(b, kb);
  t.a_sizes.assign(ka, 0);
  t.b_sizes.assign(kb, 0);
  t.cells.assign(ka * kb, 0);
  for (std::size_t i = 0; i < t.n; ++i) {
    ++t.a_sizes[ca[i]];
    ++t.b_sizes[cb[i]];
    ++t.cells[ca[i] * kb + cb[i]];
  }
  return t;
}

double expected_mutual_information(const Contingency& t) {
  const auto n = static_cast<double>(t.n);
  const double lg_n = std::lgamma(n + 1.0);
  std::vector<double> terms;
  for (std::size_t ai : t.a_sizes) {
    for (std::size_t bj : t.b_sizes) {
      const auto a = static_cast<double>(ai);
      const auto b = static_cast<double>(bj);
      const double lead = std::lgamma(a + 1.0) + std::lgamma(b + 1.0) + std::lgamma(n - a + 1.0) +
                          std::lgamma(n - b + 1.0) - lg_n;
      const std::size_t lo = std::max<std::int64_t>(1, static_cast<std::int64_t>(ai + bj) - static_cast<std::int64_t>(t.n));
      const std::size_t hi = std::min(ai, bj);
      for (std::size_t k = lo; k <= hi; ++k) {
        const auto nij = static_cast<double>(k);
        const double log_p = lead - std::lgamma(nij + 1.0) - std::lgamma(a - nij + 1.0) - std::lgamma(b - nij + 1.0) -
                             std::lgamma(n - a - b + nij + 1.0);
        terms.push_back((nij / n) * std::log(n * nij / (a * b)) * std::exp(log_p));
      }
    }
  }
  return sorted_sum(std::move(terms));
}

double ami(std::span<const int> a, std::span<const int> b) {
  const Contingency t = contingency(a, b);
  if (t.n == 0) throw Error(ErrorKind::LengthMismatch, "ami needs at least one sample");
  // The denominator vanishes exactly when a labeling is constant (convention: 0) or when both
  // labelings are all singletons, which makes them identical up to relabeling.
  if (t.a_sizes.size() == 1 || t.b_sizes.size() == 1) return 0.0;
  if (t.a_sizes.size() == t.n && t.b_sizes.size() == t.n) return 1.0;
  const double ha = entropy(t.a_sizes, t.n);
  const double hb = entropy(t.b_sizes, t.n);
  const double mi = mutual_information(t, ha, hb);
  const double emi = expected_mutual_information(t);
  return (mi - emi) / (0.5 * (ha + hb) - emi);
}

MetricValue ari(std::span<const int> a, std::span<const int> b) {
  check_lengths(a, b);
  if (a.size() < 2) return MetricValue::undefined();
  const PairCounts p = pair_counts(contingency(a, b));
  const double expected = static_cast<double>(p.same_a) * static_cast<double>(p.same_b) / static_cast<double>(p.total);
  const double maximum = 0.5 * static_cast<double>(p.same_a + p.same_b);
  // Zero only for two identical trivial partitions (all-one-cluster or all-singleton).
  if (maximum == expected) return {1.0, ScoreStatus::Defined};
  return {(static_cast<double>(p.both) - expected) / (maximum - expected), ScoreStatus::Defined};
}

double v_measure(std::span<const int> a, std::span<const int> b) {
  const Contingency t = contingency(a, b);
  if (t.n == 0) return 0.0;
  const double ha = entropy(t.a_sizes, t.n);
  const double hb = entropy(t.b_sizes, t.n);
  const double homogeneity = ha == 0.0 ? 1.0 : 1.0 - conditional_entropy(t, true) / ha;
  const double completeness = hb == 0.0 ? 1.0 : 1.0 - conditional_entropy(t, false) / hb;
  if (homogeneity + completeness == 0.0) return 0.0;
  return 2.0 * homogeneity * completeness / (homogeneity + completeness);
}

double fmi(std::span<const int> a, std::span<const int> b) {
  const PairCounts p = pair_counts(contingency(a, b));
  if (p.same_a == 0 || p.same_b == 0) return 0.0;
  return static_cast<double>(p.both) /
         std::sqrt(static_cast<double>(p.same_a) * static_cast<double>(p.same_b));
}

MetricValue chi(const Matrix& features, std::span<const int> groups) {
  if (static_cast<std::size_t>(features.rows()) != groups.size()) {
    throw Error(ErrorKind::LengthMismatch, "chi: features and groups differ in length");
  }
  std::size_t k = 0;
  const auto g = compact(groups, k);
  const auto n = groups.size();
  if (k < 2 || n <= k) return MetricValue::undefined();

  const Eigen::RowVectorXd overall = features.colwise().mean();
  Matrix centroids = Matrix::Zero(static_cast<Eigen::Index>(k), features.cols());
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    centroids.row(static_cast<Eigen::Index>(g[i])) += features.row(static_cast<Eigen::Index>(i));
    ++sizes[g[i]];
  }
  double between = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(sizes[c]);
    between += static_cast<double>(sizes[c]) * (centroids.row(static_cast<Eigen::Index>(c)) - overall).squaredNorm();
  }
  double within = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    within += (features.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(g[i]))).squaredNorm();
  }
  if (within == 0.0) return {std::numeric_limits<double>::infinity(), ScoreStatus::Infinite};
  const double kd = static_cast<double>(k);
  const double nd = static_cast<double>(n);
  return {(between / (kd - 1.0)) / (within / (nd - kd)), ScoreStatus::Defined};
}

MetricValue rankme(const Matrix& features, double epsilon) {
  if (features.size() == 0) throw Error(ErrorKind::EmptyDataset, "rankme needs a non-empty matrix");
  if (epsilon < 0.0) throw Error(ErrorKind::Config, "rankme epsilon must be non-negative");
  const Vector sigma = singular_values(features);
  const double total = sigma.sum();
  if (!(total > 0.0)) return MetricValue::undefined();
  Vector p = (sigma.array() / total + epsilon).matrix();
  p /= p.sum();
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  return {std::exp(h), ScoreStatus::Defined};
}

double bnm(const Matrix& probabilities) {
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    const auto row = probabilities.row(i);
    if (!row.allFinite() || row.minCoeff() < -1e-12 || std::abs(row.sum() - 1.0) > 1e-6) {
      throw Error(ErrorKind::NonStochastic, "bnm: row " + std::to_string(i) + " is not a distribution");
    }
  }
  return singular_values(probabilities).sum();
}

}  // namespace vpet::validators
