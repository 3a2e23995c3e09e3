#include "vpet/pipeline/config.hpp"

#include "vpet/error.hpp"
#include "vpet/random.hpp"

#include <fstream>

namespace vpet::pipeline {

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("field \"") + key + "\": " + e.what());
  }
}

}  // namespace

std::size_t ExperimentConfig::source_count() const noexcept {
  return synthetic ? static_cast<std::size_t>(synthetic->views) : sources.size();
}

void ExperimentConfig::validate() const {
  if (source_count() == 0) throw Error(ErrorKind::Config, "experiment needs at least one embedding source");
  if (heads.empty()) throw Error(ErrorKind::Config, "experiment needs at least one head variant");
  for (const auto& h : heads) h.validate();
  if (tau < 0.0 || tau > 1.0) throw Error(ErrorKind::Config, "tau must lie in [0,1]");
  if (final_trainee && (final_trainee->head >= heads.size() || final_trainee->source >= source_count())) {
    throw Error(ErrorKind::Config, "final_trainee index out of range");
  }
}

heads::HeadConfig head_config_from_json(const nlohmann::json& j) {
  heads::HeadConfig c;
  c.architecture = heads::parse_architecture(get_or<std::string>(j, "architecture", "linear"));
  c.hidden_width = get_or(j, "hidden_width", c.hidden_width);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.weight_decay = get_or(j, "weight_decay", c.weight_decay);
  c.epochs = get_or(j, "epochs", c.epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.warmup_fraction = get_or(j, "warmup_fraction", c.warmup_fraction);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.label_smoothing = get_or(j, "label_smoothing", c.label_smoothing);
  c.validate();
  return c;
}

nlohmann::json to_json(const heads::HeadConfig& c) {
  nlohmann::json j{{"architecture", heads::to_string(c.architecture)},
                   {"learning_rate", c.learning_rate},
                   {"weight_decay", c.weight_decay},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"warmup_fraction", c.warmup_fraction},
                   {"seed", c.seed},
                   {"label_smoothing", c.label_smoothing}};
  if (c.architecture == heads::Architecture::Mlp) j["hidden_width"] = c.hidden_width;
  return j;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.classes = get_or(j, "classes", s.classes);
  s.latent_dim = get_or(j, "latent_dim", s.latent_dim);
  s.view_dim = get_or(j, "view_dim", s.view_dim);
  s.views = get_or(j, "views", s.views);
  s.samples_per_class = get_or(j, "samples_per_class", s.samples_per_class);
  s.noise = get_or(j, "noise", s.noise);
  s.class_separation = get_or(j, "class_separation", s.class_separation);
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  return s;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  const int schema = get_or(j, "schema", 0);
  if (schema != kConfigSchema) {
    throw Error(ErrorKind::Config, "unsupported config schema " + std::to_string(schema) + " (expected 1)");
  }
  ExperimentConfig c;
  if (j.contains("sources")) {
    for (const auto& s : j.at("sources")) {
      SourceSpec spec{get_or<std::string>(s, "name", ""), get_or<std::string>(s, "path", "")};
      if (spec.path.empty()) throw Error(ErrorKind::Config, "source entry needs a path");
      if (spec.path.is_relative() && !base_dir.empty()) spec.path = base_dir / spec.path;
      if (spec.name.empty()) spec.name = spec.path.stem().string();
      c.sources.push_back(std::move(spec));
    }
  }
  if (j.contains("synthetic")) c.synthetic = synthetic_spec_from_json(j.at("synthetic"));
  if (j.contains("heads"))
    for (const auto& h : j.at("heads")) c.heads.push_back(head_config_from_json(h));
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.split.shots_per_class = get_or(s, "shots_per_class", c.split.shots_per_class);
    c.split.seed = get_or<std::uint64_t>(s, "seed", c.split.seed);
    c.split.validation_fraction = get_or(s, "validation_fraction", c.split.validation_fraction);
    c.split.test_fraction = get_or(s, "test_fraction", c.split.test_fraction);
  }
  c.strategy = ensemble::parse_strategy(get_or<std::string>(j, "strategy", "mean_labels"));
  c.tau = get_or(j, "tau", c.tau);
  if (j.contains("final_trainee") && !j.at("final_trainee").is_null()) {
    const auto& t = j.at("final_trainee");
    if (t.is_string() && t.get<std::string>() == "auto") {
      c.final_trainee.reset();
    } else {
      c.final_trainee = PairIndex{get_or<std::size_t>(t, "head", 0), get_or<std::size_t>(t, "source", 0)};
    }
  }
  c.mix_labeled = get_or(j, "mix_labeled", c.mix_labeled);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema"] = kConfigSchema;
  j["sources"] = nlohmann::json::array();
  for (const auto& s : c.sources) j["sources"].push_back({{"name", s.name}, {"path", s.path.string()}});
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    j["synthetic"] = {{"classes", s.classes},       {"latent_dim", s.latent_dim},
                      {"view_dim", s.view_dim},     {"views", s.views},
                      {"samples_per_class", s.samples_per_class}, {"noise", s.noise},
                      {"class_separation", s.class_separation},   {"seed", s.seed}};
  }
  j["heads"] = nlohmann::json::array();
  for (const auto& h : c.heads) j["heads"].push_back(to_json(h));
  j["split"] = {{"shots_per_class", c.split.shots_per_class},
                {"seed", c.split.seed},
                {"validation_fraction", c.split.validation_fraction},
                {"test_fraction", c.split.test_fraction}};
  j["strategy"] = ensemble::to_string(c.strategy);
  j["tau"] = c.tau;
  if (c.final_trainee) {
    j["final_trainee"] = {{"head", c.final_trainee->head}, {"source", c.final_trainee->source}};
  } else {
    j["final_trainee"] = "auto";
  }
  j["mix_labeled"] = c.mix_labeled;
  j["seed"] = c.seed;
  return j;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

std::uint64_t pair_seed(const ExperimentConfig& config, PairIndex pair) {
  return derive_seed(derive_seed(config.seed, pair.head + 1, pair.source + 1), config.heads.at(pair.head).seed);
}

std::string pair_name(PairIndex pair) {
  return "m" + std::to_string(pair.source) + "n" + std::to_string(pair.head);
}

}  // namespace vpet::pipeline
