#pragma once

#include "vpet/data/embedding_set.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vpet {

/// EMB1 container, little-endian:
///   "EMB1" | version u32 = 1 | n u32 | d u32 | class_count u32 | flags u32
///   | n*d f32 features (row-major) | [n i32 labels] | [n u64 ids] | [n*C f32 soft labels]
/// flags: bit0 labels, bit1 ids, bit2 soft-label block.
namespace emb {
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kLabelsFlag = 1u << 0;
inline constexpr std::uint32_t kIdsFlag = 1u << 1;
inline constexpr std::uint32_t kSoftFlag = 1u << 2;
}  // namespace emb

struct EmbContainer {
  EmbeddingSet set;
  /// n x class_count row-stochastic matrix, when present.
  std::optional<Matrix> soft;
};

std::vector<std::byte> encode_emb(const EmbContainer& container);
EmbContainer decode_emb(std::span<const std::byte> bytes);

EmbContainer read_emb_container(const std::filesystem::path& path);
void write_emb_container(const EmbContainer& container, const std::filesystem::path& path);

EmbeddingSet read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path);

/// Optional `<name>.manifest.json` companion.
struct Manifest {
  std::string dataset_name;
  std::vector<std::string> class_names;
  std::string source_model;
  /// Ensemble strategy tag for pseudo-label files; empty otherwise.
  std::string strategy;
};

std::filesystem::path manifest_path_for(const std::filesystem::path& emb_path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace vpet
