#pragma once

#include "vpet/data/embedding_set.hpp"

#include <span>
#include <string>

namespace vpet::validators {

enum class ScoreStatus {
  Defined,
  Undefined,  // cannot be computed; ranks worst
  Infinite,   // +infinity, e.g. CHI with zero within-group dispersion; ranks best
};

struct MetricValue {
  double value = 0.0;
  ScoreStatus status = ScoreStatus::Defined;

  bool defined() const noexcept { return status == ScoreStatus::Defined; }
  static MetricValue undefined() noexcept { return {0.0, ScoreStatus::Undefined}; }
};

/// Contingency table of two labelings after compacting each one's values to 0..k-1.
struct Contingency {
  std::size_t n = 0;
  std::vector<std::size_t> a_sizes;
  std::vector<std::size_t> b_sizes;
  std::vector<std::size_t> cells;  // a-major, a_sizes.size() x b_sizes.size()

  std::size_t at(std::size_t i, std::size_t j) const { return cells[i * b_sizes.size() + j]; }
};

Contingency contingency(std::span<const int> a, std::span<const int> b);

/// Adjusted mutual information, arithmetic-mean normalisation, exact hypergeometric E[MI].
/// 0 when the normaliser vanishes.
double ami(std::span<const int> a, std::span<const int> b);

/// Expected mutual information of two random labelings with the given marginals.
double expected_mutual_information(const Contingency& table);

/// Adjusted Rand index; undefined for n < 2.
MetricValue ari(std::span<const int> a, std::span<const int> b);

double v_measure(std::span<const int> a, std::span<const int> b);

/// Fowlkes-Mallows index; 0 when either partition has no same-cluster pair.
double fmi(std::span<const int> a, std::span<const int> b);

/// Calinski-Harabasz index of `features` grouped by `groups`.
/// Undefined with fewer than 2 groups or n <= k; Infinite when the within-group sum is 0.
MetricValue chi(const Matrix& features, std::span<const int> groups);

/// exp(entropy) of l1-normalised singular values, each shifted by epsilon and renormalised.
/// Undefined for an all-zero matrix.
MetricValue rankme(const Matrix& features, double epsilon = 1e-7);

/// Nuclear norm of a row-stochastic matrix. Throws NonStochastic.
double bnm(const Matrix& probabilities);

}  // namespace vpet::validators
