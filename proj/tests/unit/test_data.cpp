#include "vpet/data/emb_io.hpp"
#include "vpet/data/split.hpp"
#include "vpet/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <random>
#include <set>

using namespace vpet;

namespace {

// n samples, labels i % classes unless counts given.
EmbeddingSet labelled_set(const std::vector<std::size_t>& per_class) {
  Labels labels;
  for (std::size_t c = 0; c < per_class.size(); ++c) labels.insert(labels.end(), per_class[c], static_cast<int>(c));
  Matrix x(static_cast<Eigen::Index>(labels.size()), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) << static_cast<double>(i), static_cast<double>(labels[i]);
  return EmbeddingSet(x, labels, static_cast<int>(per_class.size()));
}

std::vector<std::size_t> class_counts(const EmbeddingSet& s, const LabelVault* vault = nullptr) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(s.class_count()), 0);
  if (vault) {
    for (auto id : s.ids()) ++counts[static_cast<std::size_t>(vault->reveal(id))];
  } else {
    for (int l : s.labels()) ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

std::set<SampleId> id_set(const std::optional<EmbeddingSet>& s) {
  if (!s) return {};
  return {s->ids().begin(), s->ids().end()};
}

ErrorKind decode_error(const std::vector<std::byte>& bytes) {
  try {
    decode_emb(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("decode accepted malformed input");
  return ErrorKind::Io;
}

void put_u32(std::vector<std::byte>& b, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[offset + i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_CASE("split of the 47-class texture counts keeps three per class") {
  std::vector<std::size_t> per_class(47, 64);  // 47 * 64 = 3008
  const auto split = make_split(labelled_set(per_class), {3, 11, 0.0});
  CHECK(split.labeled.size() == 141);
  CHECK(part_size(split.unlabeled) == 2867);
  CHECK(part_size(split.validation) == 0);
  for (auto c : class_counts(split.labeled)) CHECK(c == 3);
}

TEST_CASE("exhaustive split leaves nothing unlabeled") {
  const auto split = make_split(labelled_set({5, 5}), {5, 0, 0.0});
  CHECK(split.labeled.size() == 10);
  CHECK(part_size(split.unlabeled) == 0);
  CHECK_FALSE(split.unlabeled.has_value());
}

TEST_CASE("validation quota is floored and stratified with leftovers to low classes") {
  const auto split = make_split(labelled_set({50, 50}), {3, 4, 0.25});
  CHECK(split.labeled.size() == 6);
  CHECK(part_size(split.validation) == 23);  // floor(0.25 * 94)
  CHECK(part_size(split.unlabeled) == 71);
  const auto val = class_counts(*split.validation, &split.validation_truth);
  CHECK(val[0] == 12);  // floor(11.75) = 11 each, the spare slot goes to class 0
  CHECK(val[1] == 11);
  CHECK_FALSE(split.validation->has_labels());
  CHECK_FALSE(split.unlabeled->has_labels());
}

TEST_CASE("stratified quota arithmetic") {
  const std::vector<std::size_t> avail{10, 10, 10};
  CHECK(stratified_quota(avail, 0.5) == std::vector<std::size_t>{5, 5, 5});
  // floor(0.2 * 30) = 6 -> 2 each; floor(0.1 * 30) = 3 -> 1 each
  CHECK(stratified_quota(avail, 0.2) == std::vector<std::size_t>{2, 2, 2});
  const std::vector<std::size_t> uneven{3, 3, 1};
  // floor(0.5 * 7) = 3; floors 1, 1, 0; spare slot goes to class 0
  CHECK(stratified_quota(uneven, 0.5) == std::vector<std::size_t>{2, 1, 0});
}

TEST_CASE("split parts are disjoint, cover the source and are reproducible") {
  const auto source = labelled_set({40, 25, 31, 12});
  const SplitSpec spec{2, 99, 0.3, 0.2};
  const auto a = make_split(source, spec);
  const auto b = make_split(source, spec);
  CHECK(a.labeled.ids() == b.labeled.ids());
  CHECK(a.unlabeled->ids() == b.unlabeled->ids());
  CHECK(a.validation->ids() == b.validation->ids());
  CHECK(a.test->ids() == b.test->ids());

  const std::set<SampleId> parts[] = {id_set(a.labeled), id_set(a.unlabeled), id_set(a.validation), id_set(a.test)};
  std::set<SampleId> all;
  std::size_t total = 0;
  for (const auto& p : parts) {
    total += p.size();
    all.insert(p.begin(), p.end());
  }
  CHECK(total == source.size());
  CHECK(all.size() == source.size());
  for (auto c : class_counts(a.labeled)) CHECK(c == 2);

  const auto other = make_split(source, {2, 100, 0.3, 0.2});
  CHECK(other.labeled.ids() != a.labeled.ids());
}

TEST_CASE("split errors") {
  try {
    make_split(labelled_set({5, 2, 5}), {3, 0, 0.0});
    FAIL("expected insufficient shots");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientShots);
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
  CHECK_THROWS_AS(make_split(labelled_set({5, 5}), {1, 0, 1.0}), Error);
  CHECK_THROWS_AS(make_split(labelled_set({5, 5}), {1, 0, 0.6, 0.5}), Error);
  Matrix x(2, 1);
  x << 1, 2;
  CHECK_THROWS_AS(make_split(EmbeddingSet(x, std::nullopt, 0), {1, 0, 0.0}), Error);
}

TEST_CASE("withheld labels cannot be read while training is in progress") {
  const auto split = make_split(labelled_set({10, 10}), {2, 1, 0.0});
  CHECK(split.unlabeled_truth.reveal().size() == 16);
  {
    const TrainingGuard guard;
    CHECK(TrainingGuard::active());
    try {
      (void)split.unlabeled_truth.reveal();
      FAIL("expected leaked labels");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::LeakedLabels);
    }
    CHECK_THROWS_AS(split.unlabeled_truth.reveal(split.unlabeled->ids()[0]), Error);
  }
  CHECK_FALSE(TrainingGuard::active());
}

TEST_CASE("embedding set invariants") {
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  CHECK_THROWS_AS(EmbeddingSet(x, Labels{0, 2}, 2), Error);
  CHECK_THROWS_AS(EmbeddingSet(x, Labels{0, 1}, 2, {7, 7}), Error);
  CHECK_THROWS_AS(EmbeddingSet(Matrix(0, 2), std::nullopt, 0), Error);
  Matrix bad = x;
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(EmbeddingSet(bad, std::nullopt, 0), Error);
  const EmbeddingSet s(x, Labels{0, 1}, 2, {10, 20});
  CHECK(s.select_ids(std::vector<SampleId>{20}).features()(0, 0) == 3.0);
  CHECK_THROWS_AS(s.select_ids(std::vector<SampleId>{30}), Error);
}

TEST_CASE("EMB1 round trip of a labelled 2x3 matrix") {
  Matrix x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  const EmbeddingSet s(x, Labels{0, 1}, 2);
  const auto path = std::filesystem::temp_directory_path() / "vpet_test_roundtrip.emb";
  write_embedding_file(s, path);
  const auto back = read_embedding_file(path);
  CHECK(back.features() == s.features());
  CHECK(back.labels() == s.labels());
  CHECK(back.ids() == s.ids());
  CHECK(back.class_count() == 2);
  std::filesystem::remove(path);
}

TEST_CASE("EMB1 minimal file without labels") {
  Matrix x(1, 1);
  x << 0.5;
  const auto bytes = encode_emb({EmbeddingSet(x, std::nullopt, 0), std::nullopt});
  const auto back = decode_emb(bytes);
  CHECK_FALSE(back.set.has_labels());
  CHECK(back.set.features()(0, 0) == 0.5);
  CHECK_FALSE(back.soft.has_value());
}

TEST_CASE("EMB1 byte layout") {
  Matrix x(1, 2);
  x << 1.0, -2.0;
  const auto bytes = encode_emb({EmbeddingSet(x, Labels{1}, 3, {42}), std::nullopt});
  // 24-byte header, 8 bytes of features, 4 of labels, 8 of ids.
  REQUIRE(bytes.size() == 24 + 8 + 4 + 8);
  CHECK(std::memcmp(bytes.data(), "EMB1", 4) == 0);
  auto u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    return v;
  };
  CHECK(u32(4) == 1);
  CHECK(u32(8) == 1);
  CHECK(u32(12) == 2);
  CHECK(u32(16) == 3);
  CHECK(u32(20) == (emb::kLabelsFlag | emb::kIdsFlag));
  CHECK(u32(24) == 0x3f800000u);  // 1.0f
  CHECK(u32(28) == 0xc0000000u);  // -2.0f
  CHECK(u32(32) == 1);
  CHECK(u32(36) == 42);
}

TEST_CASE("EMB1 round trip is byte exact for f32 values, ids and soft block") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-10.f, 10.f);
  Matrix x(7, 5);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = u(rng);
  Matrix soft = Matrix::Constant(7, 3, 0.25);
  soft.col(0).setConstant(0.5);
  const EmbContainer c{EmbeddingSet(x, Labels{0, 1, 2, 0, 1, 2, 0}, 3, {9, 8, 7, 6, 5, 4, 1000000000000ull}), soft};
  const auto bytes = encode_emb(c);
  const auto back = decode_emb(bytes);
  CHECK(back.set.features() == x);
  CHECK(back.set.ids() == c.set.ids());
  REQUIRE(back.soft.has_value());
  CHECK(*back.soft == soft);
  CHECK(encode_emb(back) == bytes);
}

TEST_CASE("EMB1 decode errors are distinct") {
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  const auto good = encode_emb({EmbeddingSet(x, Labels{0, 1}, 2), std::nullopt});

  auto bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK(decode_error(bad_magic) == ErrorKind::BadMagic);

  auto bad_version = good;
  put_u32(bad_version, 4, 2);
  CHECK(decode_error(bad_version) == ErrorKind::UnsupportedVersion);

  CHECK(decode_error({good.begin(), good.end() - 1}) == ErrorKind::Truncated);
  CHECK(decode_error({good.begin(), good.begin() + 10}) == ErrorKind::Truncated);

  auto non_finite = good;
  put_u32(non_finite, 24, 0x7fc00000u);  // NaN in the first feature
  CHECK(decode_error(non_finite) == ErrorKind::NonFinite);
  auto infinite = good;
  put_u32(infinite, 28, 0x7f800000u);
  CHECK(decode_error(infinite) == ErrorKind::NonFinite);

  auto label_range = good;
  put_u32(label_range, 24 + 16 + 4, 2);  // second label = C
  CHECK(decode_error(label_range) == ErrorKind::LabelOutOfRange);
  auto negative_label = good;
  put_u32(negative_label, 24 + 16, 0xffffffffu);
  CHECK(decode_error(negative_label) == ErrorKind::LabelOutOfRange);

  auto empty = good;
  put_u32(empty, 8, 0);
  CHECK(decode_error(empty) == ErrorKind::EmptyDataset);

  auto trailing = good;
  trailing.push_back(std::byte{0});
  CHECK(decode_error(trailing) == ErrorKind::Shape);

  CHECK_THROWS_AS(read_embedding_file("/nonexistent/file.emb"), Error);
}

TEST_CASE("manifest round trip") {
  const auto path = std::filesystem::temp_directory_path() / "vpet_test.manifest.json";
  Manifest m{"dtd", {"banded", "dotted"}, "dinov2-b14", "mean_labels"};
  write_manifest(m, path);
  const auto back = read_manifest(path);
  CHECK(back.dataset_name == "dtd");
  CHECK(back.class_names == m.class_names);
  CHECK(back.source_model == "dinov2-b14");
  CHECK(back.strategy == "mean_labels");
  CHECK(manifest_path_for("run/view0.emb") == std::filesystem::path("run/view0.manifest.json"));
  std::filesystem::remove(path);
}
