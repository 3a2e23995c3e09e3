#include "vpet/data/split.hpp"

#include "vpet/error.hpp"
#include "vpet/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace vpet {

namespace {
std::atomic<int> g_active_guards{0};
}  // namespace

TrainingGuard::TrainingGuard() { g_active_guards.fetch_add(1); }
TrainingGuard::~TrainingGuard() { g_active_guards.fetch_sub(1); }
bool TrainingGuard::active() noexcept { return g_active_guards.load() > 0; }

LabelVault::LabelVault(std::vector<SampleId> ids, Labels labels) : ids_(std::move(ids)), labels_(std::move(labels)) {
  if (ids_.size() != labels_.size()) throw Error(ErrorKind::LengthMismatch, "vault ids and labels differ in length");
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
}

const Labels& LabelVault::reveal() const {
  if (TrainingGuard::active()) throw Error(ErrorKind::LeakedLabels, "withheld labels read during training");
  return labels_;
}

int LabelVault::reveal(SampleId id) const {
  if (TrainingGuard::active()) throw Error(ErrorKind::LeakedLabels, "withheld labels read during training");
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorKind::MisalignedSources, "no withheld label for id " + std::to_string(id));
  return labels_[it->second];
}

std::size_t part_size(const std::optional<EmbeddingSet>& part) noexcept { return part ? part->size() : 0; }

std::vector<std::size_t> stratified_quota(std::span<const std::size_t> available, double fraction) {
  std::size_t pool = 0;
  for (std::size_t a : available) pool += a;
  const auto total = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool)));
  std::vector<std::size_t> quota(available.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < available.size(); ++c) {
    quota[c] = std::min(available[c], static_cast<std::size_t>(std::floor(fraction * static_cast<double>(available[c]))));
    assigned += quota[c];
  }
  while (assigned < total) {
    bool progressed = false;
    for (std::size_t c = 0; c < available.size() && assigned < total; ++c) {
      if (quota[c] < available[c]) {
        ++quota[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return quota;
}

DatasetSplit make_split(const EmbeddingSet& source, const SplitSpec& spec) {
  if (source.size() == 0) throw Error(ErrorKind::EmptyDataset, "source has no samples");
  if (!source.has_labels()) throw Error(ErrorKind::Shape, "make_split needs a labelled source");
  if (spec.shots_per_class < 1) throw Error(ErrorKind::Config, "shots_per_class must be positive");
  if (spec.validation_fraction < 0.0 || spec.validation_fraction >= 1.0 || spec.test_fraction < 0.0 ||
      spec.test_fraction >= 1.0 || spec.validation_fraction + spec.test_fraction >= 1.0) {
    throw Error(ErrorKind::Config, "validation/test fractions must lie in [0,1) and sum below 1");
  }
  const int classes = source.class_count();
  const auto shots = static_cast<std::size_t>(spec.shots_per_class);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < source.size(); ++i) members[static_cast<std::size_t>(source.labels()[i])].push_back(i);
  for (int c = 0; c < classes; ++c) {
    const auto have = members[static_cast<std::size_t>(c)].size();
    if (have < shots) {
      throw Error(ErrorKind::InsufficientShots, "class " + std::to_string(c) + " has " + std::to_string(have) +
                                                    " samples, needs " + std::to_string(shots));
    }
  }

  std::vector<std::size_t> remainder(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    Rng rng(spec.seed ^ static_cast<std::uint64_t>(c));
    fisher_yates(std::span<std::size_t>(members[c]), rng);
    remainder[c] = members[c].size() - shots;
  }
  const auto test_quota = stratified_quota(remainder, spec.test_fraction);
  const auto val_quota = stratified_quota(remainder, spec.validation_fraction);

  std::vector<std::size_t> labeled, test, validation, unlabeled;
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& m = members[c];
    std::size_t pos = 0;
    auto take = [&](std::vector<std::size_t>& out, std::size_t count) {
      out.insert(out.end(), m.begin() + static_cast<std::ptrdiff_t>(pos),
                 m.begin() + static_cast<std::ptrdiff_t>(pos + count));
      pos += count;
    };
    take(labeled, shots);
    take(test, test_quota[c]);
    take(validation, std::min(val_quota[c], m.size() - pos));
    take(unlabeled, m.size() - pos);
  }
  for (auto* part : {&labeled, &test, &validation, &unlabeled}) std::sort(part->begin(), part->end());

  auto vault_of = [&](const std::vector<std::size_t>& rows) {
    std::vector<SampleId> ids;
    Labels labels;
    for (std::size_t r : rows) {
      ids.push_back(source.ids()[r]);
      labels.push_back(source.labels()[r]);
    }
    return LabelVault(std::move(ids), std::move(labels));
  };
  auto part = [&](const std::vector<std::size_t>& rows, bool keep_labels) -> std::optional<EmbeddingSet> {
    if (rows.empty()) return std::nullopt;
    auto set = source.select(rows);
    return keep_labels ? set : set.without_labels();
  };

  return DatasetSplit{source.select(labeled), part(unlabeled, false), part(validation, false), part(test, true),
                      vault_of(unlabeled), vault_of(validation)};
}

}  // namespace vpet
