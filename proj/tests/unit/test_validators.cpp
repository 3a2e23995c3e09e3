#include "oracles.hpp"

#include "vpet/error.hpp"
#include "vpet/heads/head.hpp"
#include "vpet/validators/kmeans.hpp"
#include "vpet/validators/metrics.hpp"
#include "vpet/validators/panel.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace vpet;
using namespace vpet::validators;

namespace {

std::vector<int> relabel(const std::vector<int>& a, const std::vector<int>& perm) {
  std::vector<int> out;
  for (int v : a) out.push_back(perm[static_cast<std::size_t>(v)]);
  return out;
}

double rel(double a, long double b) {
  const long double scale = std::max<long double>(1.0L, std::fabs(b));
  return static_cast<double>(std::fabs(a - b) / scale);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("agreement metrics on the fixed four-sample cases") {
  const std::vector<int> a{0, 0, 1, 1};
  const std::vector<int> b{0, 1, 0, 1};
  const std::vector<int> constant{0, 0, 0, 0};

  CHECK(ari(a, b).value == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(*oracle::ari(a, b) == doctest::Approx(-0.5));
  CHECK(fmi(a, b) == 0.0);
  CHECK(v_measure(a, b) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(v_measure(a, b)) < 1e-15);
  CHECK(v_measure(a, constant) == 0.0);
  CHECK(ami(a, constant) == 0.0);
  CHECK(std::abs(ami(a, b) - static_cast<double>(oracle::ami(a, b))) < 1e-10);

  CHECK(ari(a, a).value == 1.0);
  CHECK(ami(a, a) == 1.0);
  CHECK(v_measure(a, a) == 1.0);
  CHECK(fmi(a, a) == 1.0);
  CHECK(ari(a, std::vector<int>{1, 1, 0, 0}).value == 1.0);
  CHECK(fmi(std::vector<int>{0, 0, 0}, std::vector<int>{5, 5, 5}) == 1.0);
  CHECK(ami(std::vector<int>{0, 1, 2, 3}, std::vector<int>{3, 2, 1, 0}) == 1.0);
  CHECK(ari(std::vector<int>{1}, std::vector<int>{1}).status == ScoreStatus::Undefined);
  CHECK_THROWS_AS(ami(a, std::vector<int>{0, 1}), Error);
}

TEST_CASE("expected mutual information: hypergeometric formula equals permutation average") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + rng() % 7;  // up to 8 samples
    const auto a = oracle::random_labels(rng, n, 1 + static_cast<int>(rng() % 3));
    const auto b = oracle::random_labels(rng, n, 1 + static_cast<int>(rng() % 3));
    const long double by_perm = oracle::expected_mi_by_permutation(a, b);
    CHECK(std::fabs(oracle::expected_mi_exact(a, b) - by_perm) < 1e-15L);
    CHECK(std::fabs(expected_mutual_information(contingency(a, b)) - by_perm) < 1e-12L);
  }
}

TEST_CASE("agreement metrics match brute-force oracles on random small instances") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng() % 12;
    const int ca = 1 + static_cast<int>(rng() % 4);
    const int cb = 1 + static_cast<int>(rng() % 4);
    const auto a = oracle::random_labels(rng, n, ca);
    const auto b = oracle::random_labels(rng, n, cb);
    CAPTURE(t);
    CHECK(std::fabs(ami(a, b) - oracle::ami(a, b)) < 1e-9L);
    CHECK(std::fabs(v_measure(a, b) - oracle::v_measure(a, b)) < 1e-9L);
    CHECK(std::fabs(fmi(a, b) - oracle::fmi(a, b)) < 1e-9L);
    const auto expected = oracle::ari(a, b);
    const auto got = ari(a, b);
    if (expected) {
      CHECK(got.defined());
      CHECK(std::fabs(got.value - *expected) < 1e-9L);
    } else {
      CHECK(got.status == ScoreStatus::Undefined);
    }
  }
}

TEST_CASE("agreement metrics are symmetric and invariant to relabeling") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 30;
    const auto a = oracle::random_labels(rng, n, 4);
    const auto b = oracle::random_labels(rng, n, 3);
    std::vector<int> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a2 = relabel(a, perm);
    CHECK(ami(a, b) == doctest::Approx(ami(b, a)).epsilon(1e-12));
    CHECK(ari(a, b).value == doctest::Approx(ari(b, a).value).epsilon(1e-12));
    CHECK(v_measure(a, b) == doctest::Approx(v_measure(b, a)).epsilon(1e-12));
    CHECK(fmi(a, b) == doctest::Approx(fmi(b, a)).epsilon(1e-12));
    CHECK(ami(a2, b) == doctest::Approx(ami(a, b)).epsilon(1e-12));
    CHECK(ari(a2, b).value == doctest::Approx(ari(a, b).value).epsilon(1e-12));
    CHECK(v_measure(a2, b) == doctest::Approx(v_measure(a, b)).epsilon(1e-12));
    CHECK(fmi(a2, b) == doctest::Approx(fmi(a, b)).epsilon(1e-12));
    if (oracle::entropy(a) > 0) {
      CHECK(ami(a, a2) == 1.0);
      CHECK(ari(a, a2).value == 1.0);
      CHECK(v_measure(a, a2) == 1.0);
      if (oracle::enumerate_pairs(a, a).same_a > 0) CHECK(fmi(a, a2) == 1.0);
    }
  }
}

TEST_CASE("Calinski-Harabasz index") {
  Matrix x(4, 1);
  x << 0, 1, 10, 11;
  const std::vector<int> g{0, 0, 1, 1};
  CHECK(chi(x, g).value == doctest::Approx(200.0).epsilon(1e-14));
  CHECK(static_cast<double>(*oracle::chi(x, g)) == doctest::Approx(200.0));
  CHECK(chi((x.array() + 7.5).matrix(), g).value == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(chi(x * 3.0, g).value == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(chi(x, std::vector<int>{0, 0, 0, 0}).status == ScoreStatus::Undefined);
  CHECK(chi(x, std::vector<int>{0, 1, 2, 3}).status == ScoreStatus::Undefined);
  Matrix dup(4, 1);
  dup << 1, 1, 5, 5;
  CHECK(chi(dup, g).status == ScoreStatus::Infinite);

  std::mt19937_64 rng(19);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 3 + rng() % 10;
    const Matrix f = oracle::random_matrix(rng, n, 1 + rng() % 4);
    const auto groups = oracle::random_labels(rng, n, 2 + static_cast<int>(rng() % 3));
    const auto expected = oracle::chi(f, groups);
    const auto got = chi(f, groups);
    if (!expected) {
      CHECK(got.status == ScoreStatus::Undefined);
      continue;
    }
    CHECK(rel(got.value, *expected) < 1e-9);
    const Matrix moved = (f * 2.5).rowwise() + Eigen::RowVectorXd::Constant(f.cols(), -4.0);
    CHECK(std::abs(chi(moved, groups).value - got.value) <= 1e-9 * got.value);
  }
}

TEST_CASE("RankMe effective rank") {
  CHECK(rankme(Matrix::Identity(3, 3), 0.0).value == doctest::Approx(3.0).epsilon(1e-14));
  Eigen::VectorXd u(4), v(3);
  u << 1, 2, 3, 4;
  v << 1, -1, 0.5;
  CHECK(rankme(u * v.transpose(), 0.0).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rankme(Matrix::Zero(3, 2), 0.0).status == ScoreStatus::Undefined);

  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(rng, 20, 8);
  const double base = rankme(x, 0.0).value;
  for (double alpha : {1e-3, 0.5, 3.0, 1e4}) {
    CHECK(std::abs(rankme(alpha * x, 0.0).value - base) <= 1e-9 * base);
  }
  for (int t = 0; t < 100; ++t) {
    const Matrix m = oracle::random_matrix(rng, 1 + rng() % 12, 1 + rng() % 6);
    for (double eps : {0.0, 1e-7}) {
      CHECK(rel(rankme(m, eps).value, oracle::rankme(m, eps)) < 1e-9);
    }
  }
}

TEST_CASE("batch nuclear norm") {
  CHECK(bnm(Matrix::Identity(3, 3)) == doctest::Approx(3.0).epsilon(1e-14));
  Matrix e1 = Matrix::Zero(4, 3);
  e1.col(0).setOnes();
  CHECK(bnm(e1) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(static_cast<double>(oracle::nuclear_norm(e1)) == doctest::Approx(2.0).epsilon(1e-14));

  // Uniform rows: rank one with Frobenius norm sqrt(n / C).
  const Matrix uniform = Matrix::Constant(6, 3, 1.0 / 3.0);
  CHECK(bnm(uniform) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));

  Matrix bad = Matrix::Constant(2, 2, 0.6);
  try {
    bnm(bad);
    FAIL("expected non-stochastic error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonStochastic);
  }

  std::mt19937_64 rng(23);
  for (int t = 0; t < 100; ++t) {
    const Matrix p = oracle::random_stochastic(rng, 1 + rng() % 12, 2 + rng() % 3);
    const double got = bnm(p);
    CHECK(rel(got, oracle::nuclear_norm(p)) < 1e-9);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(p.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const Matrix shuffled = p(order, Eigen::all);
    CHECK(std::abs(bnm(shuffled) - got) <= 1e-12 * got);
  }
}

TEST_CASE("k-means examples") {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 10, 0, 10, 1;
  const auto r = kmeans(x, 2, 3);
  CHECK(r.assignments[0] == r.assignments[1]);
  CHECK(r.assignments[2] == r.assignments[3]);
  CHECK(r.assignments[0] != r.assignments[2]);
  CHECK(r.inertia == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(static_cast<double>(oracle::best_partition_inertia(x, 2)) == doctest::Approx(1.0));

  const auto singletons = kmeans(x, 4, 1);
  CHECK(singletons.inertia == 0.0);
  std::vector<int> sorted = singletons.assignments;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3});

  const Matrix same = Matrix::Constant(5, 3, 2.5);
  const auto degenerate = kmeans(same, 2, 8);
  CHECK(degenerate.inertia == 0.0);
  for (int a : degenerate.assignments) CHECK((a == 0 || a == 1));

  CHECK_THROWS_AS(kmeans(x, 5, 0), Error);
  CHECK(kmeans(x, 2, 3).assignments == r.assignments);
}

TEST_CASE("k-means finds the optimal partition of well separated points") {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 20; ++t) {
    Matrix x = oracle::random_matrix(rng, 8, 2, 0.1);
    for (Eigen::Index i = 0; i < 8; ++i) x(i, 0) += 10.0 * static_cast<double>(i % 3);
    const auto r = kmeans(x, 3, rng());
    CHECK(r.inertia == doctest::Approx(static_cast<double>(oracle::best_partition_inertia(x, 3))).epsilon(1e-9));
    CHECK(r.iterations <= kMaxLloydIterations);
  }
}

TEST_CASE("panel ranking and selection") {
  Matrix m(3, 2);
  m << 0.9, 0.2, 0.5, 0.8, 0.1, 0.4;
  const auto panel = build_panel(m);
  Eigen::MatrixXi expected(3, 2);
  expected << 1, 3, 2, 1, 3, 2;
  CHECK(panel.ranks == expected);
  CHECK(panel.average_rank(0) == 2.0);
  CHECK(panel.average_rank(1) == 1.5);
  CHECK(panel.average_rank(2) == 2.5);
  CHECK(select_config(panel) == 1);

  const auto single = build_panel(Matrix::Constant(1, 7, 0.3));
  CHECK(single.average_rank(0) == 1.0);
  CHECK(select_config(single) == 0);

  const auto tie = build_panel(Matrix::Constant(4, 1, 0.5));
  for (int i = 0; i < 4; ++i) CHECK(tie.ranks(i, 0) == 1);

  Matrix two(2, 2);
  two << 1, 0, 0, 1;
  CHECK(build_panel(two).average_rank(0) == build_panel(two).average_rank(1));
  CHECK(select_config(build_panel(two)) == 0);

  const double values[] = {3.0, 5.0, 5.0, 1.0};
  const ScoreStatus ok[] = {ScoreStatus::Defined, ScoreStatus::Defined, ScoreStatus::Defined, ScoreStatus::Defined};
  CHECK(competition_ranks(values, ok) == std::vector<int>{3, 1, 1, 4});
  const ScoreStatus mixed[] = {ScoreStatus::Undefined, ScoreStatus::Defined, ScoreStatus::Infinite, ScoreStatus::Defined};
  CHECK(competition_ranks(values, mixed) == std::vector<int>{4, 2, 1, 3});
}

TEST_CASE("selection is invariant under monotone transforms of one criterion") {
  std::mt19937_64 rng(55);
  for (int t = 0; t < 100; ++t) {
    const std::size_t h = 1 + rng() % 6;
    Matrix m = oracle::random_matrix(rng, h, 7);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = std::round(m(i, 0) * 2.0);  // force ties
    const auto panel = build_panel(m);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const Eigen::VectorXd col = m.col(c);
      const std::vector<double> column(col.data(), col.data() + col.size());
      const auto ranks = oracle::rank_descending(column);
      for (std::size_t i = 0; i < h; ++i) CHECK(panel.ranks(static_cast<Eigen::Index>(i), c) == ranks[i]);
    }
    const auto col = static_cast<Eigen::Index>(rng() % 7);
    Matrix warped = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) warped(i, col) = std::exp(3.0 * m(i, col)) + 10.0;
    const auto after = build_panel(warped);
    CHECK(after.ranks == panel.ranks);
    CHECK(select_config(after) == select_config(panel));
  }
}

TEST_CASE("score_model wires the seven criteria") {
  // Features: identity, predictions equal to the k-means clusters.
  const int c = 4;
  ModelOutputs out;
  out.features = Matrix::Identity(c, c);
  out.logits = Matrix::Zero(c, c);
  out.predictions = {0, 1, 2, 3};
  out.ids = {0, 1, 2, 3};
  ScoreOptions options;
  options.rankme_epsilon = 0.0;
  const auto scores = score_model(out, c, options);
  REQUIRE(scores.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(scores[i].criterion == kAllCriteria[i]);
    CHECK(scores[i].higher_is_better);
  }
  CHECK(scores[0].value == doctest::Approx(4.0).epsilon(1e-14));  // RankMe
  CHECK(scores[1].value == 1.0);                                  // AMI
  CHECK(scores[2].value == 1.0);                                  // ARI
  CHECK(scores[3].value == 1.0);                                  // V-measure
  CHECK(scores[4].value == 0.0);                                  // FMI: no same-cluster pair
  CHECK(scores[5].status == ScoreStatus::Undefined);              // CHI with n == k
  CHECK(scores[6].value == doctest::Approx(1.0).epsilon(1e-14));  // BNM of uniform 4x4 rows

  // Two tight blobs whose predictions match the clustering.
  ModelOutputs blobs;
  blobs.features.resize(6, 2);
  blobs.features << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
  blobs.logits.resize(6, 2);
  blobs.logits << 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1;
  blobs.predictions = {0, 0, 0, 1, 1, 1};
  blobs.ids = {0, 1, 2, 3, 4, 5};
  const auto s = score_model(blobs, 2);
  for (std::size_t i = 1; i <= 4; ++i) CHECK(s[i].value == 1.0);
  CHECK(s[6].value == doctest::Approx(static_cast<double>(oracle::nuclear_norm(heads::softmax_rows(blobs.logits)))));
}

TEST_CASE("score CSV round trip and panel export") {
  std::vector<ValidatorScore> scores;
  for (auto c : kAllCriteria) scores.push_back({c, 0.125, ScoreStatus::Defined, true});
  scores[5].status = ScoreStatus::Infinite;
  scores[5].value = std::numeric_limits<double>::infinity();
  scores[2].status = ScoreStatus::Undefined;
  const auto back = scores_from_csv(scores_to_csv(scores));
  REQUIRE(back.size() == 7);
  CHECK(back[0].value == 0.125);
  CHECK(back[5].status == ScoreStatus::Infinite);
  CHECK(back[2].status == ScoreStatus::Undefined);

  auto better = scores;
  better[0].value = 0.5;
  const auto panel = build_panel({"a", "b"}, {scores, better});
  const auto dir = std::filesystem::temp_directory_path() / "vpet_panel_test";
  std::filesystem::create_directories(dir);
  write_panel_csv(panel, dir / "panel.csv");
  write_summary_csv(panel, dir / "summary.csv");
  const auto text = slurp(dir / "panel.csv");
  CHECK(text.rfind("config,criterion,score,rank\n", 0) == 0);
  CHECK(text.find("b,RankMe,0.5,1") != std::string::npos);
  const auto summary = slurp(dir / "summary.csv");
  CHECK(summary.rfind("config,average_rank,selected\n", 0) == 0);
  // b wins RankMe and ties elsewhere; the undefined ARI column ranks both last.
  CHECK(summary.find("a,1.2857142857142858,0\n") != std::string::npos);
  CHECK(summary.find("b,1.1428571428571428,1\n") != std::string::npos);
  std::filesystem::remove_all(dir);
}
