#pragma once

#include "vpet/data/embedding_set.hpp"
#include "vpet/data/model_outputs.hpp"

#include <cstdint>
#include <filesystem>
#include <variant>

namespace vpet::heads {

enum class Architecture { Linear, Mlp };

struct HeadConfig {
  Architecture architecture = Architecture::Linear;
  int hidden_width = 0;  // mlp only
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  int epochs = 10;
  int batch_size = 32;
  double warmup_fraction = 0.025;
  std::uint64_t seed = 0;
  double label_smoothing = 0.0;

  /// Throws Config on out-of-range fields.
  void validate() const;
};

/// Linear head: logits = W x + b.
/// Mlp head: h = tanh(W1 x + b1), logits = W2 h + b2.
/// For linear heads the hidden_* members are empty.
struct HeadModel {
  Architecture architecture = Architecture::Linear;
  int input_dim = 0;
  int class_count = 0;
  std::uint64_t seed = 0;
  Matrix hidden_weight;  // H x d
  Vector hidden_bias;    // H
  Matrix output_weight;  // C x (d | H)
  Vector output_bias;    // C

  int hidden_width() const noexcept { return static_cast<int>(hidden_weight.rows()); }
  std::size_t parameter_count() const noexcept;
};

/// Gradient of the mean batch loss; same layout as HeadModel's parameters.
struct HeadGradient {
  Matrix hidden_weight;
  Vector hidden_bias;
  Matrix output_weight;
  Vector output_bias;
};

/// Hard integer labels or an n x C row-stochastic matrix.
class TrainTargets {
 public:
  static TrainTargets hard(Labels labels, int class_count);
  /// Rows must be non-negative and sum to 1 within 1e-6.
  static TrainTargets soft(Matrix probabilities);

  std::size_t size() const noexcept;
  int class_count() const noexcept { return class_count_; }
  /// Dense n x C target distribution (one-hot for hard targets).
  Matrix distribution() const;

 private:
  TrainTargets(std::variant<Labels, Matrix> data, int class_count) : data_(std::move(data)), class_count_(class_count) {}
  std::variant<Labels, Matrix> data_;
  int class_count_;
};

/// Seeded uniform(+-1/sqrt(fan_in)) weights, zero biases.
HeadModel init_head(int input_dim, int class_count, const HeadConfig& config);

/// Cosine-annealed learning rate with linear warmup, for 0-based `step` of `total_steps`.
double scheduled_learning_rate(double base, std::size_t step, std::size_t total_steps, double warmup_fraction);

/// Mini-batch AdamW (beta1 0.9, beta2 0.999, eps 1e-8, decoupled decay on weights)
/// on soft cross-entropy. Final partial batches are trained. Deterministic given config.seed.
HeadModel train_head(const EmbeddingSet& train, const TrainTargets& targets, const HeadConfig& config);

ModelOutputs forward(const HeadModel& model, const EmbeddingSet& set);
ModelOutputs forward(const HeadModel& model, const Matrix& features, std::span<const SampleId> ids);

Vector softmax(const Vector& logits);
Matrix softmax_rows(const Matrix& logits);

/// Mean over rows of -sum_c targets(i,c) * log softmax(logits)(i,c).
double soft_cross_entropy(const HeadModel& model, const Matrix& batch, const Matrix& targets);

/// Exact gradient of soft_cross_entropy with respect to every parameter.
HeadGradient loss_gradient(const HeadModel& model, const Matrix& batch, const Matrix& targets);

/// Gradient with respect to the logits, (softmax - targets) / batch size.
Matrix logit_gradient(const Matrix& logits, const Matrix& targets);

double top1_accuracy(const ModelOutputs& outputs, std::span<const int> truth);

/// `.head` file: one line of JSON (architecture, dims, class count, seed)
/// followed by the little-endian f32 parameter blob.
void save_head(const HeadModel& model, const std::filesystem::path& path);
HeadModel load_head(const std::filesystem::path& path);

const char* to_string(Architecture architecture);
Architecture parse_architecture(const std::string& name);

}  // namespace vpet::heads
