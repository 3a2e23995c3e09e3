// vpet: command-line front end for the semi-supervised pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include "vpet/data/emb_io.hpp"
#include "vpet/data/split.hpp"
#include "vpet/ensemble/ensemble.hpp"
#include "vpet/error.hpp"
#include "vpet/heads/head.hpp"
#include "vpet/pipeline/config.hpp"
#include "vpet/pipeline/sweeps.hpp"
#include "vpet/pipeline/synthetic.hpp"
#include "vpet/pipeline/vpet.hpp"
#include "vpet/validators/panel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace vpet;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  fs::path out_dir = ".";
  fs::path config;
};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

pipeline::ExperimentConfig experiment_from(const Globals& g) {
  if (g.config.empty()) throw CLI::RequiredError("--config");
  auto config = pipeline::load_experiment_config(g.config);
  if (g.seed_set) config.seed = g.seed;
  return config;
}

// --- split ---------------------------------------------------------------

struct SplitArgs {
  fs::path input;
  int shots = 1;
  double validation_fraction = 0.1;
  double test_fraction = 0.2;
};

void run_split(const Globals& g, const SplitArgs& a) {
  const EmbeddingSet source = read_embedding_file(a.input);
  const SplitSpec spec{a.shots, g.seed, a.validation_fraction, a.test_fraction};
  const DatasetSplit split = make_split(source, spec);
  fs::create_directories(g.out_dir);

  nlohmann::json files = nlohmann::json::object();
  auto emit = [&](const std::optional<EmbeddingSet>& part, const std::string& name) {
    if (!part) return;
    write_embedding_file(*part, g.out_dir / (name + ".emb"));
    files[name] = {{"file", name + ".emb"}, {"count", part->size()}};
  };
  emit(split.labeled, "labeled");
  emit(split.unlabeled, "unlabeled");
  emit(split.validation, "validation");
  emit(split.test, "test");

  const nlohmann::json manifest{{"source", a.input.string()},
                                {"shots_per_class", a.shots},
                                {"seed", g.seed},
                                {"validation_fraction", a.validation_fraction},
                                {"test_fraction", a.test_fraction},
                                {"class_count", source.class_count()},
                                {"parts", files}};
  write_file(g.out_dir / "split.manifest.json", manifest.dump(2) + "\n");

  // Withheld labels for diagnostics only; never read by training commands.
  auto vault_json = [](const LabelVault& v) { return nlohmann::json{{"ids", v.ids()}, {"labels", v.reveal()}}; };
  const nlohmann::json hidden{{"unlabeled", vault_json(split.unlabeled_truth)},
                              {"validation", vault_json(split.validation_truth)}};
  write_file(g.out_dir / "hidden_labels.json", hidden.dump() + "\n");

  std::cout << "labeled=" << split.labeled.size() << " unlabeled=" << part_size(split.unlabeled)
            << " validation=" << part_size(split.validation) << " test=" << part_size(split.test) << '\n';
}

// --- train-head ----------------------------------------------------------

struct TrainArgs {
  fs::path train;
  fs::path mix_labeled;
  fs::path out;
  std::string architecture = "linear";
  int hidden_width = 64;
  double learning_rate = 1e-2;
  double weight_decay = 5e-4;
  int epochs = 100;
  int batch_size = 32;
  double warmup_fraction = 0.025;
  double label_smoothing = 0.0;
};

void run_train_head(const Globals& g, const TrainArgs& a) {
  heads::HeadConfig config;
  if (!g.config.empty()) {
    config = pipeline::head_config_from_json(read_json(g.config));
  } else {
    config.architecture = heads::parse_architecture(a.architecture);
    config.hidden_width = config.architecture == heads::Architecture::Mlp ? a.hidden_width : 0;
    config.learning_rate = a.learning_rate;
    config.weight_decay = a.weight_decay;
    config.epochs = a.epochs;
    config.batch_size = a.batch_size;
    config.warmup_fraction = a.warmup_fraction;
    config.label_smoothing = a.label_smoothing;
  }
  if (g.seed_set || g.config.empty()) config.seed = g.seed;

  const EmbContainer data = read_emb_container(a.train);
  const int classes = data.set.class_count();
  Matrix targets;
  if (data.soft) {
    targets = *data.soft;
  } else if (data.set.has_labels()) {
    targets = heads::TrainTargets::hard(data.set.labels(), classes).distribution();
  } else {
    throw Error(ErrorKind::Shape, a.train.string() + " carries neither labels nor soft labels");
  }
  EmbeddingSet train(data.set.features(), std::nullopt, classes, data.set.ids());
  if (!a.mix_labeled.empty()) {
    const EmbeddingSet labeled = read_embedding_file(a.mix_labeled);
    const Matrix one_hot = heads::TrainTargets::hard(labeled.labels(), classes).distribution();
    train = concatenate(train, EmbeddingSet(labeled.features(), std::nullopt, classes, labeled.ids()));
    Matrix stacked(targets.rows() + one_hot.rows(), classes);
    stacked << targets, one_hot;
    targets = std::move(stacked);
  }
  const heads::HeadModel model = heads::train_head(train, heads::TrainTargets::soft(targets), config);
  const fs::path out = a.out.empty() ? g.out_dir / "model.head" : a.out;
  heads::save_head(model, out);
  std::cout << "wrote " << out.string() << '\n';
}

// --- pseudo-label --------------------------------------------------------

struct PseudoArgs {
  fs::path model;
  fs::path input;
  double tau = 0.0;
};

void run_pseudo_label(const Globals& g, const PseudoArgs& a) {
  const heads::HeadModel model = heads::load_head(a.model);
  const EmbeddingSet data = read_embedding_file(a.input);
  const ModelOutputs outputs = heads::forward(model, data);
  pipeline::write_model_outputs(outputs, g.out_dir);
  const auto hard = ensemble::pseudo_label(outputs, {a.tau});
  if (!hard.ids.empty()) {
    const auto rows = data.select_ids(hard.ids);
    write_emb_container(EmbContainer{EmbeddingSet(rows.features(), std::nullopt, model.class_count, rows.ids()),
                                     hard.one_hot},
                        g.out_dir / "onehot.emb");
  }
  std::cout << "accepted=" << hard.ids.size() << " of " << outputs.size() << '\n';
}

// --- ensemble ------------------------------------------------------------

struct EnsembleArgs {
  std::vector<fs::path> outputs;
  fs::path features;
  fs::path out;
  std::string strategy = "mean_labels";
  double tau = 0.0;
};

void run_ensemble(const Globals& g, const EnsembleArgs& a) {
  std::vector<ModelOutputs> sources;
  for (const auto& dir : a.outputs) sources.push_back(pipeline::read_model_outputs(dir));
  const auto strategy = ensemble::parse_strategy(a.strategy);
  const auto pseudo = ensemble::ensemble(strategy, sources, {a.tau});
  const EmbeddingSet unlabeled = read_embedding_file(a.features);
  const auto rows = unlabeled.select_ids(pseudo.ids);
  const fs::path out = a.out.empty() ? g.out_dir / "pseudo.emb" : a.out;
  write_emb_container(
      EmbContainer{EmbeddingSet(rows.features(), std::nullopt, static_cast<int>(pseudo.soft.cols()), rows.ids()),
                   pseudo.soft},
      out);
  Manifest manifest;
  manifest.dataset_name = "pseudo-labels";
  manifest.strategy = ensemble::to_string(strategy);
  write_manifest(manifest, manifest_path_for(out));
  const auto entropy = ensemble::entropy_profile(pseudo.soft);
  std::cout << "pseudo_labels=" << pseudo.size() << " sources=" << pseudo.source_count
            << " mean_entropy=" << entropy.mean << '\n';
}

// --- validate / select ---------------------------------------------------

struct ValidateArgs {
  fs::path outputs;
  int classes = 0;
  int clusters = 0;
  double rankme_epsilon = 1e-7;
  fs::path out;
};

void run_validate(const Globals& g, const ValidateArgs& a) {
  const ModelOutputs outputs = pipeline::read_model_outputs(a.outputs);
  validators::ScoreOptions options;
  options.seed = g.seed;
  if (a.clusters > 0) options.clusters = a.clusters;
  options.rankme_epsilon = a.rankme_epsilon;
  const auto csv = validators::scores_to_csv(validators::score_model(outputs, a.classes, options));
  if (!a.out.empty()) write_file(a.out, csv);
  std::cout << csv;
}

struct SelectArgs {
  std::vector<fs::path> scores;
  std::vector<std::string> names;
};

void run_select(const Globals& g, const SelectArgs& a) {
  if (!a.names.empty() && a.names.size() != a.scores.size()) {
    throw CLI::ValidationError("--names", "needs one name per --scores file");
  }
  std::vector<std::string> names;
  std::vector<std::vector<validators::ValidatorScore>> rows;
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    names.push_back(a.names.empty() ? a.scores[i].stem().string() : a.names[i]);
    rows.push_back(validators::scores_from_csv(read_file(a.scores[i])));
  }
  const auto panel = validators::build_panel(names, rows);
  validators::write_panel_csv(panel, g.out_dir / "panel.csv");
  validators::write_summary_csv(panel, g.out_dir / "panel_summary.csv");
  std::cout << "selected=" << panel.configs[validators::select_config(panel)] << '\n';
}

// --- vpet / sweep-scaling / report ---------------------------------------

void run_vpet_command(const Globals& g) {
  const auto config = experiment_from(g);
  const auto sources = pipeline::load_sources(config);
  const auto pool = pipeline::build_pair_pool(config, sources);
  const auto result = pipeline::run_vpet(config, pool);
  pipeline::write_run(result, pool, config, g.out_dir);
  std::cout << "final_top1=" << result.final_top1 << '\n';
}

void run_scaling(const Globals& g, std::size_t max_sources) {
  const auto config = experiment_from(g);
  const auto sources = pipeline::load_sources(config);
  const auto pool = pipeline::build_pair_pool(config, sources);
  const std::size_t k = max_sources == 0 ? pool.runs.size() : max_sources;
  const auto rows = pipeline::run_scaling_sweep(config, pool, k);
  pipeline::write_scaling_csv(rows, g.out_dir / "scaling.csv");
  for (const auto& r : rows) std::cout << "size=" << r.ensemble_size << " mean_top1=" << r.mean_top1 << '\n';
}

void run_report(const Globals& g, const fs::path& input) {
  auto [methods, table] = pipeline::read_accuracy_table(input);
  const auto report = pipeline::build_ranking_report(std::move(methods), table);
  pipeline::write_ranking_report(report, g.out_dir / "ranking.csv");
  std::cout << read_file(g.out_dir / "ranking.csv");
}

void run_synth(const Globals& g, pipeline::SyntheticSpec spec) {
  spec.seed = g.seed;
  const auto views = pipeline::make_diverse_views(spec);
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto path = g.out_dir / ("view" + std::to_string(v) + ".emb");
    write_embedding_file(views[v], path);
    Manifest m;
    m.dataset_name = "synthetic-diverse-views";
    m.source_model = "view" + std::to_string(v);
    for (int c = 0; c < spec.classes; ++c) m.class_names.push_back("class" + std::to_string(c));
    write_manifest(m, manifest_path_for(path));
  }
  std::cout << "views=" << views.size() << " n=" << views.front().size() << " d=" << views.front().dim() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vpet: pseudo-label ensembling and unsupervised model selection on embedding files"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--config", g.config, "JSON config file");

  SplitArgs split_args;
  auto* split = app.add_subcommand("split", "Stratified N-shot split of an EMB1 file");
  split->add_option("--in", split_args.input, "Labelled EMB1 file")->required();
  split->add_option("--shots", split_args.shots, "Labelled samples per class")->required();
  split->add_option("--validation-fraction", split_args.validation_fraction, "Fraction of the remainder for validation");
  split->add_option("--test-fraction", split_args.test_fraction, "Fraction of the remainder for test");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train-head", "Train a classifier head");
  train->add_option("--train", train_args.train, "EMB1 with labels or a soft-label block")->required();
  train->add_option("--mix-labeled", train_args.mix_labeled, "Also train on this labelled EMB1 file");
  train->add_option("--out", train_args.out, "Output .head file");
  train->add_option("--arch", train_args.architecture, "linear | mlp");
  train->add_option("--hidden", train_args.hidden_width, "Hidden width for mlp");
  train->add_option("--lr", train_args.learning_rate, "Peak learning rate");
  train->add_option("--weight-decay", train_args.weight_decay, "Decoupled weight decay");
  train->add_option("--epochs", train_args.epochs, "Epochs");
  train->add_option("--batch", train_args.batch_size, "Batch size");
  train->add_option("--warmup", train_args.warmup_fraction, "Warmup fraction of iterations");
  train->add_option("--label-smoothing", train_args.label_smoothing, "Label smoothing");

  PseudoArgs pseudo_args;
  auto* pseudo = app.add_subcommand("pseudo-label", "Run a head over a set and pseudo-label it");
  pseudo->add_option("--model", pseudo_args.model, ".head file")->required();
  pseudo->add_option("--in", pseudo_args.input, "EMB1 file")->required();
  pseudo->add_option("--tau", pseudo_args.tau, "Confidence threshold")->check(CLI::Range(0.0, 1.0));

  EnsembleArgs ens_args;
  auto* ens = app.add_subcommand("ensemble", "Ensemble pseudo-labels of several model outputs");
  ens->add_option("--outputs", ens_args.outputs, "Model output directories")->required();
  ens->add_option("--features", ens_args.features, "Unlabeled EMB1 file the outputs were computed on")->required();
  ens->add_option("--strategy", ens_args.strategy, "mean_labels | mean_logits | mean_probs");
  ens->add_option("--tau", ens_args.tau, "Confidence threshold")->check(CLI::Range(0.0, 1.0));
  ens->add_option("--out", ens_args.out, "Output EMB1 file");

  ValidateArgs val_args;
  auto* val = app.add_subcommand("validate", "Score model outputs with the seven unsupervised criteria");
  val->add_option("--outputs", val_args.outputs, "Directory with outputs.emb and features.emb")->required();
  val->add_option("--classes", val_args.classes, "Class count")->required()->check(CLI::PositiveNumber);
  val->add_option("--clusters", val_args.clusters, "k for k-means (default: class count)");
  val->add_option("--rankme-epsilon", val_args.rankme_epsilon, "RankMe epsilon");
  val->add_option("--out", val_args.out, "Also write the CSV here");

  SelectArgs sel_args;
  auto* sel = app.add_subcommand("select", "Rank configurations by average validator rank");
  sel->add_option("--scores", sel_args.scores, "Score CSVs from `validate`, one per configuration")->required();
  sel->add_option("--names", sel_args.names, "Configuration names");

  auto* vpet_cmd = app.add_subcommand("vpet", "Run the full pipeline from a config");

  std::size_t max_sources = 0;
  auto* scaling = app.add_subcommand("sweep-scaling", "Ensemble-size scaling study");
  scaling->add_option("--max-sources", max_sources, "Largest ensemble size (default: all pairs)");

  fs::path report_in;
  auto* report = app.add_subcommand("report", "Rank-frequency report from a settings x methods accuracy table");
  report->add_option("--in", report_in, "CSV: setting,<method>,...")->required();

  pipeline::SyntheticSpec synth_spec;
  auto* synth = app.add_subcommand("synth", "Write the synthetic diverse-views benchmark");
  synth->add_option("--views", synth_spec.views, "Number of views");
  synth->add_option("--classes", synth_spec.classes, "Classes");
  synth->add_option("--samples-per-class", synth_spec.samples_per_class, "Samples per class");
  synth->add_option("--separation", synth_spec.class_separation, "Class-mean scale");
  synth->add_option("--noise", synth_spec.noise, "Per-view noise sigma");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e, std::cerr, std::cerr);
    return 1;
  }

  try {
    if (*split) run_split(g, split_args);
    else if (*train) run_train_head(g, train_args);
    else if (*pseudo) run_pseudo_label(g, pseudo_args);
    else if (*ens) run_ensemble(g, ens_args);
    else if (*val) run_validate(g, val_args);
    else if (*sel) run_select(g, sel_args);
    else if (*vpet_cmd) run_vpet_command(g);
    else if (*scaling) run_scaling(g, max_sources);
    else if (*report) run_report(g, report_in);
    else if (*synth) run_synth(g, synth_spec);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
