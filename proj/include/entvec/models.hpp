#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entvec/dataset.hpp"
#include "entvec/matrix.hpp"

namespace entvec {

enum class ModelKind { log_linear, vector_space };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::log_linear;
  std::size_t dim = 64;
  std::size_t batch_size = 64;
  std::size_t window_size = 0;  // must equal the dataset manifest's
  std::size_t epochs = 5;
  double learning_rate = 0.1;
  std::size_t negatives = 5;  // vector_space only
  double init_scale = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

// Parameter tensors for both model kinds. entity_representations holds the
// softmax output weights (log_linear) or the entity embeddings (vector_space);
// unused tensors stay empty. The padding row of word_embeddings is zero and
// never receives gradient.
struct ModelParams {
  ModelKind kind = ModelKind::log_linear;
  std::optional<WordId> padding_id;
  MatrixD word_embeddings;           // table_size x d
  MatrixD entity_representations;    // |E| x d
  std::vector<double> entity_bias;   // |E|       (log_linear)
  MatrixD projection;                // d x d     (vector_space)
  std::vector<double> projection_bias;  // d      (vector_space)

  std::size_t dim() const { return word_embeddings.cols(); }
  std::size_t num_entities() const { return entity_representations.rows(); }
};

struct Batch {
  MatrixI windows;                 // batch x window_size
  std::vector<EntityId> entities;  // batch
  std::vector<double> weights;     // batch

  std::size_t size() const { return entities.size(); }
};

struct TrainReport {
  std::vector<double> epoch_losses;  // mean weighted loss per epoch
  ModelParams params;
  double elapsed_seconds = 0.0;
};

// Uniform [-init_scale, init_scale] entries from the seeded generator; the
// padding row is zeroed afterwards and biases start at zero.
ModelParams init_params(const ModelConfig& config, std::size_t vocab_table_size,
                        std::size_t num_entities, std::optional<WordId> padding_id,
                        std::uint64_t seed);

// Mean of word-embedding rows over non-padding positions; all-padding windows
// give the zero vector.
std::vector<double> average_window(const ModelParams& params, std::span<const WordId> window);

// softmax(U * average_window + bias) over entities.
std::vector<double> forward_log_linear(const ModelParams& params, std::span<const WordId> window);

// Weighted mean of per-item cross-entropy -log P(entity | window).
double loss_log_linear(const ModelParams& params, const Batch& batch);

// tanh(M * average_window + c): the text representation in entity space.
std::vector<double> forward_vector_space(const ModelParams& params, std::span<const WordId> window);

// Negative ids per batch item, uniform over entities != the target;
// deterministic in (targets, seed).
std::vector<std::vector<EntityId>> sample_negatives(std::span<const EntityId> targets,
                                                    std::size_t num_entities, std::size_t n_neg,
                                                    std::uint64_t seed);

// Weighted mean of -log s(<h, E[pos]>) - sum_j log s(-<h, E[neg_j]>) with
// uniformly drawn negatives (s = logistic). Throws when |E| < 2.
double loss_vector_space(const ModelParams& params, const Batch& batch, std::size_t n_neg,
                         std::uint64_t seed);

// Analytic gradient of the model's batch loss with respect to every parameter
// tensor; mirrors ModelParams. neg_seed selects the negatives (vector_space)
// and must match the seed handed to loss_vector_space for the same batch.
ModelParams gradients(const ModelParams& params, const Batch& batch, const ModelConfig& config,
                      std::uint64_t neg_seed);

// params <- params - learning_rate * grads. Throws on non-finite gradients.
void sgd_step(ModelParams& params, const ModelParams& grads, double learning_rate);

// Epochs of shuffled mini-batch SGD; the last short batch of an epoch is kept.
// Fully deterministic given config.seed.
TrainReport train(const PackagedDataset& dataset, const ModelConfig& config);

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<std::string> row_labels;  // empty when rows are not tokens/entities
};

// word_embeddings (padding row dropped), entity_representations, and the
// model-specific extras, each with row-label provenance.
std::vector<NamedTensor> get_representations(const ModelParams& params, const Vocabulary& vocab,
                                             const EntityIndex& entities);

struct TrainedModel {
  ModelParams params;
  Vocabulary vocab;
  EntityIndex entities;
  std::vector<double> epoch_losses;
  std::uint64_t seed = 0;
  std::size_t window_size = 0;
};

inline constexpr const char* kModelManifestFile = "model.json";
inline constexpr const char* kFullWordEmbeddingsFile = "word_embeddings.full.npy";

// Model directory: one NPY per tensor (word embeddings with the padding row
// kept in word_embeddings.full.npy), vocabulary + entity files, model.json.
void save_model(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace entvec
