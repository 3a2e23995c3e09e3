#include "vpet/pipeline/vpet.hpp"

#include "vpet/data/emb_io.hpp"
#include "vpet/error.hpp"
#include "vpet/random.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

namespace vpet::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::optional<EmbeddingSet> cut(const EmbeddingSet& source, const std::optional<EmbeddingSet>& reference,
                                bool keep_labels) {
  if (!reference) return std::nullopt;
  auto part = source.select_ids(reference->ids());
  return keep_labels || !part.has_labels() ? part : part.without_labels();
}

heads::HeadConfig pair_head_config(const ExperimentConfig& config, PairIndex pair) {
  heads::HeadConfig h = config.heads.at(pair.head);
  h.seed = pair_seed(config, pair);
  return h;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<NamedSource> load_sources(const ExperimentConfig& config) {
  std::vector<NamedSource> out;
  if (config.synthetic) {
    auto views = make_diverse_views(*config.synthetic);
    for (std::size_t v = 0; v < views.size(); ++v) out.push_back({"view" + std::to_string(v), std::move(views[v])});
    return out;
  }
  for (const auto& s : config.sources) out.push_back({s.name, read_embedding_file(s.path)});
  return out;
}

AlignedSplits split_sources(std::span<const NamedSource> sources, const SplitSpec& spec) {
  if (sources.empty()) throw Error(ErrorKind::InsufficientSources, "no embedding sources");
  const EmbeddingSet& first = sources.front().set;
  const std::set<SampleId> reference_ids(first.ids().begin(), first.ids().end());
  for (std::size_t m = 1; m < sources.size(); ++m) {
    const auto& s = sources[m].set;
    if (s.size() != first.size() || std::set<SampleId>(s.ids().begin(), s.ids().end()) != reference_ids) {
      throw Error(ErrorKind::MisalignedSources, "source " + sources[m].name + " does not share sample ids with " +
                                                    sources.front().name);
    }
    if (s.class_count() != first.class_count() && s.class_count() != 0) {
      throw Error(ErrorKind::MisalignedSources, "source " + sources[m].name + " has a different class count");
    }
    if (s.has_labels()) {
      const auto aligned = s.select_ids(first.ids());
      if (aligned.labels() != first.labels()) {
        throw Error(ErrorKind::MisalignedSources, "source " + sources[m].name + " disagrees on labels");
      }
    }
  }
  AlignedSplits out{make_split(first, spec), {}};
  for (const auto& source : sources) {
    // Labels always come from the reference split, so sources without labels work too.
    const EmbeddingSet& s = source.set;
    auto labeled_features = s.select_ids(out.reference.labeled.ids());
    EmbeddingSet labeled(labeled_features.features(), out.reference.labeled.labels(), first.class_count(),
                         out.reference.labeled.ids());
    std::optional<EmbeddingSet> test;
    if (out.reference.test) {
      auto t = s.select_ids(out.reference.test->ids());
      test = EmbeddingSet(t.features(), out.reference.test->labels(), first.class_count(), out.reference.test->ids());
    }
    out.parts.push_back(SourceParts{std::move(labeled), cut(s, out.reference.unlabeled, false),
                                    cut(s, out.reference.validation, false), std::move(test)});
  }
  return out;
}

const PairRun& PairPool::at(PairIndex pair) const {
  for (const auto& r : runs)
    if (r.pair == pair) return r;
  throw Error(ErrorKind::Config, "pair " + pair_name(pair) + " not in pool");
}

PairPool build_pair_pool(const ExperimentConfig& config, std::span<const NamedSource> sources) {
  config.validate();
  if (sources.size() != config.source_count()) {
    throw Error(ErrorKind::InsufficientSources, "config expects " + std::to_string(config.source_count()) +
                                                    " sources, got " + std::to_string(sources.size()));
  }
  PairPool pool{split_sources(sources, config.split), {}, sources.front().set.class_count(), {}};
  const TrainingGuard guard;
  for (std::size_t m = 0; m < sources.size(); ++m) {
    for (std::size_t n = 0; n < config.heads.size(); ++n) {
      const PairIndex pair{n, m};
      const auto& parts = pool.splits.parts[m];
      PairRun run;
      run.pair = pair;
      auto start = Clock::now();
      try {
        run.model = heads::train_head(parts.labeled, heads::TrainTargets::hard(parts.labeled.labels(), pool.class_count),
                                      pair_head_config(config, pair));
      } catch (const Error& e) {
        throw Error(e.kind(), "pair " + pair_name(pair) + " (" + sources[m].name + "): " + e.what());
      }
      pool.timings.supervised += seconds_since(start);

      start = Clock::now();
      if (parts.unlabeled) {
        run.unlabeled = heads::forward(run.model, *parts.unlabeled);
        run.pseudo = ensemble::pseudo_label(*run.unlabeled, {config.tau});
      } else {
        run.pseudo.one_hot = Matrix::Zero(0, pool.class_count);
      }
      pool.timings.pseudo_labeling += seconds_since(start);
      if (parts.validation) run.validation = heads::forward(run.model, *parts.validation);
      pool.runs.push_back(std::move(run));
    }
  }
  return pool;
}

PairIndex choose_trainee(const ExperimentConfig& config, const PairPool& pool,
                         std::optional<validators::ScorePanel>* panel_out) {
  if (config.final_trainee) return *config.final_trainee;
  if (!pool.runs.front().validation) return PairIndex{0, 0};
  std::vector<std::string> names;
  std::vector<std::vector<validators::ValidatorScore>> scores;
  for (const auto& r : pool.runs) {
    names.push_back(pair_name(r.pair));
    validators::ScoreOptions options;
    options.seed = derive_seed(config.seed, 0x7a1d);
    scores.push_back(validators::score_model(*r.validation, pool.class_count, options));
  }
  auto panel = validators::build_panel(std::move(names), scores);
  const auto chosen = pool.runs[validators::select_config(panel)].pair;
  if (panel_out) *panel_out = std::move(panel);
  return chosen;
}

ensemble::PseudoLabelSet ensemble_pool(const ExperimentConfig& config, const PairPool& pool,
                                       std::span<const std::size_t> members) {
  if (members.empty()) throw Error(ErrorKind::InsufficientSources, "ensemble needs at least one pool member");
  std::vector<const PairRun*> runs;
  for (std::size_t i : members) runs.push_back(&pool.runs.at(i));

  if (!runs.front()->unlabeled) {
    ensemble::PseudoLabelSet empty;
    empty.soft = Matrix::Zero(0, pool.class_count);
    empty.source_count = members.size();
    empty.strategy = config.strategy;
    return empty;
  }

  // ids accepted by every member, in unlabeled order
  std::vector<SampleId> accepted = runs.front()->unlabeled->ids;
  for (const auto* r : runs) {
    const std::set<SampleId> ok(r->pseudo.ids.begin(), r->pseudo.ids.end());
    std::erase_if(accepted, [&](SampleId id) { return !ok.contains(id); });
  }

  std::vector<ModelOutputs> outputs;
  for (const auto* r : runs) {
    const ModelOutputs& full = *r->unlabeled;
    if (accepted.size() == full.ids.size()) {
      outputs.push_back(full);
      continue;
    }
    const std::set<SampleId> keep(accepted.begin(), accepted.end());
    ModelOutputs sub;
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < full.ids.size(); ++i)
      if (keep.contains(full.ids[i])) rows.push_back(static_cast<Eigen::Index>(i));
    sub.features = full.features(rows, Eigen::all);
    sub.logits = full.logits(rows, Eigen::all);
    for (auto i : rows) {
      sub.predictions.push_back(full.predictions[static_cast<std::size_t>(i)]);
      sub.ids.push_back(full.ids[static_cast<std::size_t>(i)]);
    }
    outputs.push_back(std::move(sub));
  }
  if (accepted.empty()) {
    ensemble::PseudoLabelSet empty;
    empty.soft = Matrix::Zero(0, pool.class_count);
    empty.source_count = members.size();
    empty.strategy = config.strategy;
    return empty;
  }
  // Every member already passed the threshold on these ids.
  return ensemble::ensemble(config.strategy, outputs, {0.0});
}

heads::HeadModel self_train(const ExperimentConfig& config, const PairPool& pool, PairIndex trainee,
                            const ensemble::PseudoLabelSet& pseudo) {
  const TrainingGuard guard;
  const SourceParts& parts = pool.splits.parts.at(trainee.source);
  std::optional<EmbeddingSet> train;
  Matrix targets(0, pool.class_count);
  if (pseudo.size() > 0) {
    const auto features = parts.unlabeled->select_ids(pseudo.ids);
    train = EmbeddingSet(features.features(), std::nullopt, pool.class_count, features.ids());
    targets = pseudo.soft;
  }
  if (config.mix_labeled) {
    const EmbeddingSet labeled(parts.labeled.features(), std::nullopt, pool.class_count, parts.labeled.ids());
    const Matrix one_hot = heads::TrainTargets::hard(parts.labeled.labels(), pool.class_count).distribution();
    train = train ? concatenate(*train, labeled) : labeled;
    Matrix stacked(targets.rows() + one_hot.rows(), pool.class_count);
    stacked << targets, one_hot;
    targets = std::move(stacked);
  }
  if (!train) throw Error(ErrorKind::EmptyDataset, "self-training set is empty (no pseudo-labels, mix_labeled off)");
  return heads::train_head(*train, heads::TrainTargets::soft(std::move(targets)), pair_head_config(config, trainee));
}

VpetResult run_vpet(const ExperimentConfig& config, const PairPool& pool) {
  VpetResult result;
  result.timings = pool.timings;
  const auto& reference = pool.splits.reference;
  if (!reference.test) throw Error(ErrorKind::Config, "split produced no test set; set split.test_fraction > 0");

  {
    const TrainingGuard guard;
    auto start = Clock::now();
    result.trainee = choose_trainee(config, pool, &result.trainee_panel);
    result.timings.trainee_selection = seconds_since(start);

    start = Clock::now();
    std::vector<std::size_t> all(pool.runs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    result.pseudo = ensemble_pool(config, pool, all);
    result.timings.ensembling = seconds_since(start);

    start = Clock::now();
    result.final_model = self_train(config, pool, result.trainee, result.pseudo);
    result.timings.self_training = seconds_since(start);
  }

  const auto& trainee_test = *pool.splits.parts[result.trainee.source].test;
  result.final_top1 = heads::top1_accuracy(heads::forward(result.final_model, trainee_test), trainee_test.labels());
  result.pseudo_label_count = result.pseudo.size();
  result.pseudo_label_accuracy =
      result.pseudo.size() > 0 ? ensemble::pseudo_label_accuracy(result.pseudo, reference.unlabeled_truth) : 0.0;

  for (const auto& r : pool.runs) {
    PairDiagnostics d;
    d.pair = r.pair;
    d.name = pair_name(r.pair);
    const auto& test = *pool.splits.parts[r.pair.source].test;
    d.test_top1 = heads::top1_accuracy(heads::forward(r.model, test), test.labels());
    if (r.unlabeled) {
      d.mean_entropy = ensemble::entropy_profile(heads::softmax_rows(r.unlabeled->logits)).mean;
      d.top_confidence_accuracy = ensemble::top_confidence_accuracy(*r.unlabeled, reference.unlabeled_truth, 0.2);
    }
    result.pairs.push_back(std::move(d));
  }
  return result;
}

VpetResult run_vpet(const ExperimentConfig& config, std::span<const NamedSource> sources) {
  return run_vpet(config, build_pair_pool(config, sources));
}

VpetResult run_vpet(const ExperimentConfig& config) {
  const auto sources = load_sources(config);
  return run_vpet(config, sources);
}

double labeled_only_top1(const PairPool& pool, PairIndex pair) {
  const auto& parts = pool.splits.parts.at(pair.source);
  if (!parts.test) throw Error(ErrorKind::Config, "split produced no test set");
  const heads::HeadModel& model = pool.at(pair).model;
  return heads::top1_accuracy(heads::forward(model, *parts.test), parts.test->labels());
}

nlohmann::json result_to_json(const VpetResult& result, const ExperimentConfig& config) {
  nlohmann::json per_source = nlohmann::json::object();
  nlohmann::json entropy = nlohmann::json::object();
  nlohmann::json top_conf = nlohmann::json::object();
  for (const auto& p : result.pairs) {
    per_source[p.name] = p.test_top1;
    entropy[p.name] = p.mean_entropy;
    top_conf[p.name] = p.top_confidence_accuracy;
  }
  return nlohmann::json{{"final_top1", result.final_top1},
                        {"per_source_top1", per_source},
                        {"pseudo_label_accuracy", result.pseudo_label_accuracy},
                        {"pseudo_label_count", result.pseudo_label_count},
                        {"mean_entropy_per_source", entropy},
                        {"top20_confidence_accuracy_per_source", top_conf},
                        {"final_trainee", pair_name(result.trainee)},
                        {"strategy", ensemble::to_string(config.strategy)},
                        {"source_count", result.pseudo.source_count},
                        {"timings", "timings.json"}};
}

void write_model_outputs(const ModelOutputs& outputs, const std::filesystem::path& dir) {
  const EmbeddingSet logits(outputs.logits, outputs.predictions, outputs.class_count(), outputs.ids);
  write_embedding_file(logits, dir / "outputs.emb");
  write_embedding_file(EmbeddingSet(outputs.features, std::nullopt, outputs.class_count(), outputs.ids),
                       dir / "features.emb");
}

ModelOutputs read_model_outputs(const std::filesystem::path& dir) {
  const EmbeddingSet logits = read_embedding_file(dir / "outputs.emb");
  const EmbeddingSet features = read_embedding_file(dir / "features.emb");
  if (features.ids() != logits.ids()) {
    throw Error(ErrorKind::MisalignedSources, dir.string() + ": features.emb and outputs.emb ids differ");
  }
  ModelOutputs out;
  out.features = features.features();
  out.logits = logits.features();
  out.predictions = logits.has_labels() ? logits.labels() : argmax_rows(logits.features());
  out.ids = logits.ids();
  return out;
}

void write_run(const VpetResult& result, const PairPool& pool, const ExperimentConfig& config,
               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& r : pool.runs) {
    const auto dir = out_dir / pair_name(r.pair);
    heads::save_head(r.model, dir / "model.head");
    if (r.unlabeled) write_model_outputs(*r.unlabeled, dir);
    if (r.validation) write_model_outputs(*r.validation, dir / "validation");
  }
  heads::save_head(result.final_model, out_dir / "final.head");
  if (result.pseudo.size() > 0) {
    const auto& unlabeled = *pool.splits.parts[result.trainee.source].unlabeled;
    const auto features = unlabeled.select_ids(result.pseudo.ids);
    write_emb_container(
        EmbContainer{EmbeddingSet(features.features(), std::nullopt, pool.class_count, features.ids()), result.pseudo.soft},
        out_dir / "pseudo.emb");
    Manifest manifest;
    manifest.dataset_name = "pseudo-labels";
    manifest.source_model = pair_name(result.trainee);
    manifest.strategy = ensemble::to_string(result.pseudo.strategy);
    write_manifest(manifest, manifest_path_for(out_dir / "pseudo.emb"));
  }
  if (result.trainee_panel) {
    validators::write_panel_csv(*result.trainee_panel, out_dir / "panel.csv");
    validators::write_summary_csv(*result.trainee_panel, out_dir / "panel_summary.csv");
  }
  write_text(out_dir / "result.json", result_to_json(result, config).dump(2) + "\n");
  const auto& t = result.timings;
  const nlohmann::json timings{{"supervised", t.supervised},
                               {"pseudo_labeling", t.pseudo_labeling},
                               {"trainee_selection", t.trainee_selection},
                               {"ensembling", t.ensembling},
                               {"self_training", t.self_training},
                               {"total", t.total()}};
  write_text(out_dir / "timings.json", timings.dump(2) + "\n");
}

}  // namespace vpet::pipeline
