#include "vpet/heads/head.hpp"

#include "vpet/data/split.hpp"
#include "vpet/error.hpp"
#include "vpet/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace vpet {

Labels argmax_rows(const Matrix& m) {
  Labels out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j)
      if (m(i, j) > m(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace vpet

namespace vpet::heads {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

bool is_mlp(const HeadModel& m) { return m.architecture == Architecture::Mlp; }

Matrix hidden_activations(const HeadModel& model, const Matrix& x) {
  Matrix pre = x * model.hidden_weight.transpose();
  pre.rowwise() += model.hidden_bias.transpose();
  return pre.array().tanh().matrix();
}

Matrix logits_from(const HeadModel& model, const Matrix& representation) {
  Matrix z = representation * model.output_weight.transpose();
  z.rowwise() += model.output_bias.transpose();
  return z;
}

void check_input(const HeadModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim) {
    throw Error(ErrorKind::Shape, "input dim " + std::to_string(x.cols()) + " != head input dim " +
                                      std::to_string(model.input_dim));
  }
}

// log-sum-exp per row, max-subtracted.
Vector row_logsumexp(const Matrix& z) {
  Vector out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    out(i) = m + std::log((z.row(i).array() - m).exp().sum());
  }
  return out;
}

struct AdamState {
  HeadGradient m;
  HeadGradient v;
};

HeadGradient zeros_like(const HeadModel& model) {
  return HeadGradient{Matrix::Zero(model.hidden_weight.rows(), model.hidden_weight.cols()),
                      Vector::Zero(model.hidden_bias.size()),
                      Matrix::Zero(model.output_weight.rows(), model.output_weight.cols()),
                      Vector::Zero(model.output_bias.size())};
}

template <typename Param, typename Grad>
void adamw_update(Param& param, const Grad& grad, Grad& m, Grad& v, double lr, double decay, double bias1,
                  double bias2) {
  m = kBeta1 * m + (1.0 - kBeta1) * grad;
  v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  if (decay > 0.0) param *= (1.0 - lr * decay);
  param.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + kAdamEps);
}

}  // namespace

const char* to_string(Architecture architecture) {
  return architecture == Architecture::Linear ? "linear" : "mlp";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp") return Architecture::Mlp;
  throw Error(ErrorKind::Config, "unknown architecture \"" + name + "\"");
}

void HeadConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::Config, what); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) fail("warmup_fraction must lie in [0,1)");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) fail("label_smoothing must lie in [0,1)");
  if (architecture == Architecture::Mlp && hidden_width < 1) fail("mlp head needs hidden_width >= 1");
}

std::size_t HeadModel::parameter_count() const noexcept {
  return static_cast<std::size_t>(hidden_weight.size() + hidden_bias.size() + output_weight.size() +
                                  output_bias.size());
}

TrainTargets TrainTargets::hard(Labels labels, int class_count) {
  if (class_count < 1) throw Error(ErrorKind::Shape, "class count must be positive");
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw Error(ErrorKind::LabelOutOfRange, "target label " + std::to_string(y));
  }
  return TrainTargets(std::move(labels), class_count);
}

TrainTargets TrainTargets::soft(Matrix probabilities) {
  if (probabilities.cols() < 1) throw Error(ErrorKind::Shape, "soft targets need at least one class");
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    const auto row = probabilities.row(i);
    if (!row.allFinite() || row.minCoeff() < 0.0 || std::abs(row.sum() - 1.0) > 1e-6) {
      throw Error(ErrorKind::NonStochastic, "soft target row " + std::to_string(i) + " is not a distribution");
    }
  }
  const auto classes = static_cast<int>(probabilities.cols());
  return TrainTargets(std::move(probabilities), classes);
}

std::size_t TrainTargets::size() const noexcept {
  return std::visit(
      [](const auto& d) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(d)>, Labels>) {
          return d.size();
        } else {
          return static_cast<std::size_t>(d.rows());
        }
      },
      data_);
}

Matrix TrainTargets::distribution() const {
  if (const auto* soft = std::get_if<Matrix>(&data_)) return *soft;
  const auto& labels = std::get<Labels>(data_);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), class_count_);
  for (std::size_t i = 0; i < labels.size(); ++i) out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return out;
}

HeadModel init_head(int input_dim, int class_count, const HeadConfig& config) {
  config.validate();
  if (input_dim < 1 || class_count < 1) throw Error(ErrorKind::Shape, "head needs positive input dim and class count");
  Rng rng(derive_seed(config.seed, 0x1a17));
  auto uniform_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = (2.0 * uniform_unit(rng) - 1.0) * bound;
    return w;
  };
  HeadModel model;
  model.architecture = config.architecture;
  model.input_dim = input_dim;
  model.class_count = class_count;
  model.seed = config.seed;
  int fan_in = input_dim;
  if (config.architecture == Architecture::Mlp) {
    model.hidden_weight = uniform_matrix(config.hidden_width, input_dim);
    model.hidden_bias = Vector::Zero(config.hidden_width);
    fan_in = config.hidden_width;
  } else {
    model.hidden_weight = Matrix(0, 0);
    model.hidden_bias = Vector(0);
  }
  model.output_weight = uniform_matrix(class_count, fan_in);
  model.output_bias = Vector::Zero(class_count);
  return model;
}

double scheduled_learning_rate(double base, std::size_t step, std::size_t total_steps, double warmup_fraction) {
  if (total_steps == 0) return base;
  const auto warmup = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out.row(i) = softmax(logits.row(i).transpose()).transpose();
  return out;
}

Matrix logit_gradient(const Matrix& logits, const Matrix& targets) {
  return (softmax_rows(logits) - targets) / static_cast<double>(logits.rows());
}

double soft_cross_entropy(const HeadModel& model, const Matrix& batch, const Matrix& targets) {
  check_input(model, batch);
  const Matrix z = is_mlp(model) ? logits_from(model, hidden_activations(model, batch)) : logits_from(model, batch);
  const Vector lse = row_logsumexp(z);
  // -sum_c p_c (z_c - lse) = sum_c p_c lse - p.z
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) total += targets.row(i).sum() * lse(i) - targets.row(i).dot(z.row(i));
  return total / static_cast<double>(z.rows());
}

HeadGradient loss_gradient(const HeadModel& model, const Matrix& batch, const Matrix& targets) {
  check_input(model, batch);
  if (targets.rows() != batch.rows() || targets.cols() != model.class_count) {
    throw Error(ErrorKind::Shape, "targets must be batch x class_count");
  }
  HeadGradient g;
  if (!is_mlp(model)) {
    const Matrix dz = logit_gradient(logits_from(model, batch), targets);
    g.output_weight = dz.transpose() * batch;
    g.output_bias = dz.colwise().sum().transpose();
    g.hidden_weight = Matrix(0, 0);
    g.hidden_bias = Vector(0);
    return g;
  }
  const Matrix h = hidden_activations(model, batch);
  const Matrix dz = logit_gradient(logits_from(model, h), targets);
  g.output_weight = dz.transpose() * h;
  g.output_bias = dz.colwise().sum().transpose();
  const Matrix dh = dz * model.output_weight;
  const Matrix da = dh.cwiseProduct((1.0 - h.array().square()).matrix());
  g.hidden_weight = da.transpose() * batch;
  g.hidden_bias = da.colwise().sum().transpose();
  return g;
}

HeadModel train_head(const EmbeddingSet& train, const TrainTargets& targets, const HeadConfig& config) {
  const TrainingGuard guard;
  config.validate();
  if (targets.size() != train.size()) {
    throw Error(ErrorKind::Shape, "targets length " + std::to_string(targets.size()) + " != train size " +
                                      std::to_string(train.size()));
  }
  const int classes = targets.class_count();
  HeadModel model = init_head(static_cast<int>(train.dim()), classes, config);
  if (config.epochs == 0) return model;

  Matrix dist = targets.distribution();
  if (config.label_smoothing > 0.0) {
    dist = (1.0 - config.label_smoothing) * dist.array() + config.label_smoothing / static_cast<double>(classes);
  }

  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(config.epochs);

  AdamState adam{zeros_like(model), zeros_like(model)};
  Rng shuffle_rng(derive_seed(config.seed, 0x5f1e));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Matrix xb;
  Matrix pb;
  std::size_t step = 0;
  const Matrix& x = train.features();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    fisher_yates(std::span<std::size_t>(order), shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t len = std::min(batch, n - start);
      xb.resize(static_cast<Eigen::Index>(len), x.cols());
      pb.resize(static_cast<Eigen::Index>(len), dist.cols());
      for (std::size_t r = 0; r < len; ++r) {
        xb.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(order[start + r]));
        pb.row(static_cast<Eigen::Index>(r)) = dist.row(static_cast<Eigen::Index>(order[start + r]));
      }
      const double loss = soft_cross_entropy(model, xb, pb);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::Divergence, "non-finite loss at iteration " + std::to_string(step));
      }
      const HeadGradient g = loss_gradient(model, xb, pb);
      const double lr = scheduled_learning_rate(config.learning_rate, step, total_steps, config.warmup_fraction);
      const double t = static_cast<double>(step + 1);
      const double bias1 = 1.0 - std::pow(kBeta1, t);
      const double bias2 = 1.0 - std::pow(kBeta2, t);
      adamw_update(model.output_weight, g.output_weight, adam.m.output_weight, adam.v.output_weight, lr,
                   config.weight_decay, bias1, bias2);
      adamw_update(model.output_bias, g.output_bias, adam.m.output_bias, adam.v.output_bias, lr, 0.0, bias1, bias2);
      if (is_mlp(model)) {
        adamw_update(model.hidden_weight, g.hidden_weight, adam.m.hidden_weight, adam.v.hidden_weight, lr,
                     config.weight_decay, bias1, bias2);
        adamw_update(model.hidden_bias, g.hidden_bias, adam.m.hidden_bias, adam.v.hidden_bias, lr, 0.0, bias1,
                     bias2);
      }
    }
  }
  const bool finite = model.output_weight.allFinite() && model.output_bias.allFinite() &&
                      model.hidden_weight.allFinite() && model.hidden_bias.allFinite();
  if (!finite) throw Error(ErrorKind::Divergence, "non-finite parameters after iteration " + std::to_string(step));
  return model;
}

ModelOutputs forward(const HeadModel& model, const Matrix& features, std::span<const SampleId> ids) {
  check_input(model, features);
  if (static_cast<std::size_t>(features.rows()) != ids.size()) throw Error(ErrorKind::Shape, "ids length != rows");
  ModelOutputs out;
  out.features = is_mlp(model) ? hidden_activations(model, features) : features;
  out.logits = logits_from(model, out.features);
  out.predictions = argmax_rows(out.logits);
  out.ids.assign(ids.begin(), ids.end());
  return out;
}

ModelOutputs forward(const HeadModel& model, const EmbeddingSet& set) {
  return forward(model, set.features(), set.ids());
}

double top1_accuracy(const ModelOutputs& outputs, std::span<const int> truth) {
  if (truth.size() != outputs.size()) throw Error(ErrorKind::LengthMismatch, "truth length != outputs length");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += outputs.predictions[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

void put_f32_block(std::ofstream& out, const auto& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i]));
    unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                          static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

void get_f32_block(std::ifstream& in, auto& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorKind::Truncated, "head parameter blob");
    const std::uint32_t bits = std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
                               std::uint32_t{b[3]} << 24;
    const float v = std::bit_cast<float>(bits);
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "head parameter");
    m.data()[i] = v;
  }
}

}  // namespace

void save_head(const HeadModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const nlohmann::json header{{"format", "vpet-head"},
                              {"version", 1},
                              {"architecture", to_string(model.architecture)},
                              {"input_dim", model.input_dim},
                              {"hidden_width", model.hidden_width()},
                              {"class_count", model.class_count},
                              {"seed", model.seed}};
  out << header.dump() << '\n';
  put_f32_block(out, model.hidden_weight);
  put_f32_block(out, model.hidden_bias);
  put_f32_block(out, model.output_weight);
  put_f32_block(out, model.output_bias);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

HeadModel load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::BadMagic, path.string() + " is not a head file");
  }
  if (header.value("format", "") != "vpet-head") throw Error(ErrorKind::BadMagic, path.string() + " is not a head file");
  HeadModel m;
  m.architecture = parse_architecture(header.at("architecture").get<std::string>());
  m.input_dim = header.at("input_dim").get<int>();
  m.class_count = header.at("class_count").get<int>();
  m.seed = header.at("seed").get<std::uint64_t>();
  const int hidden = header.value("hidden_width", 0);
  const int fan_in = m.architecture == Architecture::Mlp ? hidden : m.input_dim;
  if (m.input_dim < 1 || m.class_count < 1 || fan_in < 1) throw Error(ErrorKind::Shape, "bad head dimensions");
  m.hidden_weight.resize(m.architecture == Architecture::Mlp ? hidden : 0, m.architecture == Architecture::Mlp ? m.input_dim : 0);
  m.hidden_bias.resize(m.architecture == Architecture::Mlp ? hidden : 0);
  m.output_weight.resize(m.class_count, fan_in);
  m.output_bias.resize(m.class_count);
  get_f32_block(in, m.hidden_weight);
  get_f32_block(in, m.hidden_bias);
  get_f32_block(in, m.output_weight);
  get_f32_block(in, m.output_bias);
  return m;
}

}  // namespace vpet::heads
