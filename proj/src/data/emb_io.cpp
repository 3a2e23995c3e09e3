#include "vpet/data/emb_io.hpp"

#include "vpet/error.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace vpet {

namespace {

static_assert(std::numeric_limits<float>::is_iec559);

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void f32(double v) { put(std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4); }
  void raw(const char* s, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) out_.push_back(static_cast<std::byte>(s[i]));
  }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
  }
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4, what))); }
  float f32(const char* what) { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, what))); }
  void need(std::uint64_t bytes, const char* what) const {
    if (in_.size() - pos_ < bytes) {
      throw Error(ErrorKind::Truncated, std::string(what) + " needs " + std::to_string(bytes) + " bytes, " +
                                            std::to_string(in_.size() - pos_) + " remain");
    }
  }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  std::span<const std::byte> bytes(std::size_t len, const char* what) {
    need(len, what);
    auto s = in_.subspan(pos_, len);
    pos_ += len;
    return s;
  }

 private:
  std::uint64_t get(int bytes, const char* what) {
    need(static_cast<std::uint64_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

std::vector<std::byte> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> data(size);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorKind::Io, "read failed for " + path.string());
  return data;
}

void spill(std::span<const std::byte> data, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace

std::vector<std::byte> encode_emb(const EmbContainer& container) {
  const EmbeddingSet& set = container.set;
  const auto n = set.size();
  const auto d = set.dim();
  if (container.soft) {
    if (static_cast<std::size_t>(container.soft->rows()) != n || container.soft->cols() != set.class_count()) {
      throw Error(ErrorKind::Shape, "soft-label block must be n x class_count");
    }
  }
  std::uint32_t flags = emb::kIdsFlag;
  if (set.has_labels()) flags |= emb::kLabelsFlag;
  if (container.soft) flags |= emb::kSoftFlag;

  Writer w;
  w.raw("EMB1", 4);
  w.u32(emb::kVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(set.class_count()));
  w.u32(flags);
  for (Eigen::Index i = 0; i < set.features().rows(); ++i)
    for (Eigen::Index j = 0; j < set.features().cols(); ++j) w.f32(set.features()(i, j));
  if (set.has_labels())
    for (int y : set.labels()) w.i32(y);
  for (SampleId id : set.ids()) w.u64(id);
  if (container.soft)
    for (Eigen::Index i = 0; i < container.soft->rows(); ++i)
      for (Eigen::Index j = 0; j < container.soft->cols(); ++j) w.f32((*container.soft)(i, j));
  return w.take();
}

EmbContainer decode_emb(std::span<const std::byte> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), "EMB1", 4) != 0) throw Error(ErrorKind::BadMagic, "expected \"EMB1\"");
  const auto version = r.u32("version");
  if (version != emb::kVersion) throw Error(ErrorKind::UnsupportedVersion, "version " + std::to_string(version));
  const auto n = r.u32("n");
  const auto d = r.u32("d");
  const auto classes = r.u32("class_count");
  const auto flags = r.u32("flags");
  if (n == 0 || d == 0) throw Error(ErrorKind::EmptyDataset, "header declares n=0 or d=0");
  if (classes > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw Error(ErrorKind::Shape, "class_count too large");
  }
  const bool has_labels = flags & emb::kLabelsFlag;
  const bool has_ids = flags & emb::kIdsFlag;
  const bool has_soft = flags & emb::kSoftFlag;
  if ((has_labels || has_soft) && classes == 0) throw Error(ErrorKind::Shape, "labels or soft block with class_count 0");

  std::uint64_t payload = std::uint64_t{n} * d * 4;
  if (has_labels) payload += std::uint64_t{n} * 4;
  if (has_ids) payload += std::uint64_t{n} * 8;
  if (has_soft) payload += std::uint64_t{n} * classes * 4;
  r.need(payload, "payload");

  Matrix features(n, d);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      const float v = r.f32("features");
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::NonFinite, "feature (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      features(i, j) = v;
    }
  }
  std::optional<Labels> labels;
  if (has_labels) {
    labels.emplace(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto y = r.i32("labels");
      if (y < 0 || static_cast<std::uint32_t>(y) >= classes) {
        throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " at row " + std::to_string(i));
      }
      (*labels)[i] = y;
    }
  }
  std::vector<SampleId> ids;
  if (has_ids) {
    ids.resize(n);
    for (auto& id : ids) id = r.u64("ids");
  }
  std::optional<Matrix> soft;
  if (has_soft) {
    soft.emplace(n, classes);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = 0; j < classes; ++j) {
        const float v = r.f32("soft labels");
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "soft label row " + std::to_string(i));
        (*soft)(i, j) = v;
      }
    }
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::Shape, std::to_string(r.remaining()) + " trailing bytes after the declared payload");
  }
  return EmbContainer{EmbeddingSet(std::move(features), std::move(labels), static_cast<int>(classes), std::move(ids)),
                      std::move(soft)};
}

EmbContainer read_emb_container(const std::filesystem::path& path) { return decode_emb(slurp(path)); }

void write_emb_container(const EmbContainer& container, const std::filesystem::path& path) {
  spill(encode_emb(container), path);
}

EmbeddingSet read_embedding_file(const std::filesystem::path& path) { return read_emb_container(path).set; }

void write_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_emb_container(EmbContainer{set, std::nullopt}, path);
}

std::filesystem::path manifest_path_for(const std::filesystem::path& emb_path) {
  auto p = emb_path;
  p.replace_extension(".manifest.json");
  return p;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j{{"dataset_name", manifest.dataset_name},
                   {"class_names", manifest.class_names},
                   {"source_model", manifest.source_model}};
  if (!manifest.strategy.empty()) j["strategy"] = manifest.strategy;
  const auto text = j.dump(2) + "\n";
  spill(std::as_bytes(std::span(text.data(), text.size())), path);
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
  Manifest m;
  m.dataset_name = j.value("dataset_name", "");
  m.class_names = j.value("class_names", std::vector<std::string>{});
  m.source_model = j.value("source_model", "");
  m.strategy = j.value("strategy", "");
  return m;
}

}  // namespace vpet
