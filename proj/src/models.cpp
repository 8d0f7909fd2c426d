#include "entvec/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "entvec/errors.hpp"
#include "entvec/fs_util.hpp"
#include "entvec/npy.hpp"
#include "entvec/rng.hpp"

namespace entvec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::log_linear:
      return "log_linear";
    case ModelKind::vector_space:
      return "vector_space";
  }
  throw Error("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "log_linear") return ModelKind::log_linear;
  if (name == "vector_space") return ModelKind::vector_space;
  throw Error("unknown model kind: " + name);
}

void ModelConfig::validate() const {
  if (dim < 1) throw UsageError("dim must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (window_size < 1) throw UsageError("window_size must be >= 1");
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
  if (kind == ModelKind::vector_space && negatives < 1)
    throw UsageError("negatives must be >= 1");
  if (!(init_scale > 0.0)) throw UsageError("init_scale must be > 0");
}

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log logistic(x) = softplus(-x), computed without overflow.
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

void fill_uniform(MatrixD& m, double scale, Rng& rng) {
  for (double& v : m.storage()) v = uniform_real(rng, -scale, scale);
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z;
  z.kind = params.kind;
  z.padding_id = params.padding_id;
  z.word_embeddings = MatrixD(params.word_embeddings.rows(), params.word_embeddings.cols());
  z.entity_representations =
      MatrixD(params.entity_representations.rows(), params.entity_representations.cols());
  z.entity_bias.assign(params.entity_bias.size(), 0.0);
  z.projection = MatrixD(params.projection.rows(), params.projection.cols());
  z.projection_bias.assign(params.projection_bias.size(), 0.0);
  return z;
}

bool is_padding(const ModelParams& params, WordId id) {
  return params.padding_id && *params.padding_id == id;
}

// Average window plus the positions that contributed, for backprop.
struct WindowAverage {
  std::vector<double> mean;
  std::vector<WordId> words;  // non-padding positions, duplicates kept
};

WindowAverage average_with_positions(const ModelParams& params, std::span<const WordId> window) {
  WindowAverage avg;
  avg.mean.assign(params.dim(), 0.0);
  for (const WordId id : window) {
    if (is_padding(params, id)) continue;
    avg.words.push_back(id);
    const auto row = params.word_embeddings.row(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < row.size(); ++j) avg.mean[j] += row[j];
  }
  if (!avg.words.empty()) {
    const double inv = 1.0 / static_cast<double>(avg.words.size());
    for (double& v : avg.mean) v *= inv;
  }
  return avg;
}

// Scatters d(loss)/d(mean) back into the word-embedding gradient.
void backprop_average(const WindowAverage& avg, std::span<const double> d_mean,
                      MatrixD& d_word_embeddings) {
  if (avg.words.empty()) return;
  const double inv = 1.0 / static_cast<double>(avg.words.size());
  for (const WordId id : avg.words) {
    auto row = d_word_embeddings.row(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += d_mean[j] * inv;
  }
}

double weight_sum(const Batch& batch) {
  double sum = 0.0;
  for (const double w : batch.weights) sum += w;
  if (!(sum > 0.0)) throw Error("batch weights must sum to a positive value");
  return sum;
}

double batch_loss_and_grads(const ModelParams& params, const Batch& batch,
                            std::size_t n_neg, std::uint64_t neg_seed,
                            ModelParams* grads) {
  const std::size_t d = params.dim();
  const std::size_t num_entities = params.num_entities();
  const double total_weight = weight_sum(batch);

  std::vector<std::vector<EntityId>> negatives;
  if (params.kind == ModelKind::vector_space)
    negatives = sample_negatives(batch.entities, num_entities, n_neg, neg_seed);

  double loss_sum = 0.0;
  std::vector<double> logits(params.kind == ModelKind::log_linear ? num_entities : 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto window = batch.windows.row(i);
    const double coef = batch.weights[i] / total_weight;
    const std::size_t target = static_cast<std::size_t>(batch.entities[i]);
    const WindowAverage avg = average_with_positions(params, window);

    if (params.kind == ModelKind::log_linear) {
      for (std::size_t e = 0; e < num_entities; ++e)
        logits[e] = dot(params.entity_representations.row(e), avg.mean) + params.entity_bias[e];
      const double max_logit = *std::max_element(logits.begin(), logits.end());
      double exp_sum = 0.0;
      for (const double z : logits) exp_sum += std::exp(z - max_logit);
      const double lse = max_logit + std::log(exp_sum);
      loss_sum += batch.weights[i] * (lse - logits[target]);

      if (grads) {
        std::vector<double> d_mean(d, 0.0);
        for (std::size_t e = 0; e < num_entities; ++e) {
          double dz = std::exp(logits[e] - lse);
          if (e == target) dz -= 1.0;
          dz *= coef;
          grads->entity_bias[e] += dz;
          auto d_row = grads->entity_representations.row(e);
          const auto u_row = params.entity_representations.row(e);
          for (std::size_t j = 0; j < d; ++j) {
            d_row[j] += dz * avg.mean[j];
            d_mean[j] += dz * u_row[j];
          }
        }
        backprop_average(avg, d_mean, grads->word_embeddings);
      }
    } else {
      std::vector<double> pre(d);
      std::vector<double> h(d);
      for (std::size_t j = 0; j < d; ++j) {
        pre[j] = dot(params.projection.row(j), avg.mean) + params.projection_bias[j];
        h[j] = std::tanh(pre[j]);
      }

      double item_loss = 0.0;
      std::vector<double> d_h(grads ? d : 0, 0.0);
      const auto accumulate = [&](std::size_t entity, double sign) {
        const auto e_row = params.entity_representations.row(entity);
        const double x = dot(h, e_row);
        item_loss += sign > 0 ? softplus(-x) : softplus(x);
        if (grads) {
          // d/dx of -log s(x) is s(x)-1; of -log s(-x) is s(x).
          const double g = (sign > 0 ? logistic(x) - 1.0 : logistic(x)) * coef;
          auto d_e = grads->entity_representations.row(entity);
          for (std::size_t j = 0; j < d; ++j) {
            d_h[j] += g * e_row[j];
            d_e[j] += g * h[j];
          }
        }
      };
      accumulate(target, +1.0);
      for (const EntityId neg : negatives[i]) accumulate(static_cast<std::size_t>(neg), -1.0);
      loss_sum += batch.weights[i] * item_loss;

      if (grads) {
        std::vector<double> d_pre(d);
        std::vector<double> d_mean(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) d_pre[j] = d_h[j] * (1.0 - h[j] * h[j]);
        for (std::size_t j = 0; j < d; ++j) {
          grads->projection_bias[j] += d_pre[j];
          auto d_m = grads->projection.row(j);
          const auto m_row = params.projection.row(j);
          for (std::size_t l = 0; l < d; ++l) {
            d_m[l] += d_pre[j] * avg.mean[l];
            d_mean[l] += d_pre[j] * m_row[l];
          }
        }
        backprop_average(avg, d_mean, grads->word_embeddings);
      }
    }
  }

  if (grads && params.padding_id) {
    auto pad = grads->word_embeddings.row(static_cast<std::size_t>(*params.padding_id));
    std::fill(pad.begin(), pad.end(), 0.0);
  }
  return loss_sum / total_weight;
}

bool all_finite(std::span<const double> values) {
  for (const double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

bool all_finite(const ModelParams& p) {
  return all_finite(p.word_embeddings.storage()) &&
         all_finite(p.entity_representations.storage()) && all_finite(p.entity_bias) &&
         all_finite(p.projection.storage()) && all_finite(p.projection_bias);
}

void axpy(std::span<double> y, double alpha, std::span<const double> x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::size_t vocab_table_size,
                        std::size_t num_entities, std::optional<WordId> padding_id,
                        std::uint64_t seed) {
  if (vocab_table_size < 1 || num_entities < 1)
    throw Error("init_params requires at least one word and one entity");
  if (padding_id && (*padding_id < 0 || static_cast<std::size_t>(*padding_id) >= vocab_table_size))
    throw Error("padding id out of range");

  Rng rng(seed);
  ModelParams params;
  params.kind = config.kind;
  params.padding_id = padding_id;
  params.word_embeddings = MatrixD(vocab_table_size, config.dim);
  fill_uniform(params.word_embeddings, config.init_scale, rng);
  if (padding_id) {
    auto pad = params.word_embeddings.row(static_cast<std::size_t>(*padding_id));
    std::fill(pad.begin(), pad.end(), 0.0);
  }
  params.entity_representations = MatrixD(num_entities, config.dim);
  fill_uniform(params.entity_representations, config.init_scale, rng);
  if (config.kind == ModelKind::log_linear) {
    params.entity_bias.assign(num_entities, 0.0);
  } else {
    params.projection = MatrixD(config.dim, config.dim);
    fill_uniform(params.projection, config.init_scale, rng);
    params.projection_bias.assign(config.dim, 0.0);
  }
  return params;
}

std::vector<double> average_window(const ModelParams& params, std::span<const WordId> window) {
  return average_with_positions(params, window).mean;
}

std::vector<double> forward_log_linear(const ModelParams& params, std::span<const WordId> window) {
  const WindowAverage avg = average_with_positions(params, window);
  const std::size_t num_entities = params.num_entities();
  std::vector<double> probs(num_entities);
  for (std::size_t e = 0; e < num_entities; ++e)
    probs[e] = dot(params.entity_representations.row(e), avg.mean) + params.entity_bias[e];
  const double max_logit = *std::max_element(probs.begin(), probs.end());
  double exp_sum = 0.0;
  for (double& p : probs) {
    p = std::exp(p - max_logit);
    exp_sum += p;
  }
  for (double& p : probs) p /= exp_sum;
  return probs;
}

double loss_log_linear(const ModelParams& params, const Batch& batch) {
  return batch_loss_and_grads(params, batch, 0, 0, nullptr);
}

std::vector<double> forward_vector_space(const ModelParams& params,
                                         std::span<const WordId> window) {
  const WindowAverage avg = average_with_positions(params, window);
  const std::size_t d = params.dim();
  std::vector<double> h(d);
  for (std::size_t j = 0; j < d; ++j)
    h[j] = std::tanh(dot(params.projection.row(j), avg.mean) + params.projection_bias[j]);
  return h;
}

std::vector<std::vector<EntityId>> sample_negatives(std::span<const EntityId> targets,
                                                    std::size_t num_entities, std::size_t n_neg,
                                                    std::uint64_t seed) {
  if (num_entities < 2) throw Error("need >=2 entities for negative sampling");
  Rng rng(seed);
  std::vector<std::vector<EntityId>> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    out[i].reserve(n_neg);
    for (std::size_t j = 0; j < n_neg; ++j) {
      // Uniform over entities excluding the target.
      EntityId draw = static_cast<EntityId>(uniform_index(rng, num_entities - 1));
      if (draw >= targets[i]) ++draw;
      out[i].push_back(draw);
    }
  }
  return out;
}

double loss_vector_space(const ModelParams& params, const Batch& batch, std::size_t n_neg,
                         std::uint64_t seed) {
  return batch_loss_and_grads(params, batch, n_neg, seed, nullptr);
}

ModelParams gradients(const ModelParams& params, const Batch& batch, const ModelConfig& config,
                      std::uint64_t neg_seed) {
  ModelParams grads = zeros_like(params);
  batch_loss_and_grads(params, batch, config.negatives, neg_seed, &grads);
  return grads;
}

void sgd_step(ModelParams& params, const ModelParams& grads, double learning_rate) {
  if (!all_finite(grads)) throw Error("divergence detected: non-finite gradient");
  axpy(params.word_embeddings.storage(), -learning_rate, grads.word_embeddings.storage());
  axpy(params.entity_representations.storage(), -learning_rate,
       grads.entity_representations.storage());
  axpy(params.entity_bias, -learning_rate, grads.entity_bias);
  axpy(params.projection.storage(), -learning_rate, grads.projection.storage());
  axpy(params.projection_bias, -learning_rate, grads.projection_bias);
}

TrainReport train(const PackagedDataset& dataset, const ModelConfig& config) {
  config.validate();
  if (config.window_size != dataset.manifest.window_size)
    throw UsageError("window size " + std::to_string(config.window_size) +
                     " does not match dataset window size " +
                     std::to_string(dataset.manifest.window_size));
  if (config.kind == ModelKind::vector_space && dataset.entity_index.size() < 2)
    throw Error("need >=2 entities for negative sampling");

  const auto start_time = std::chrono::steady_clock::now();
  const std::size_t n = dataset.num_instances();
  const std::size_t window_size = dataset.manifest.window_size;

  TrainReport report;
  report.params = init_params(config, dataset.vocab.table_size(), dataset.entity_index.size(),
                              dataset.vocab.padding_id(), config.seed);
  ModelParams& params = report.params;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, 0x5f0000ULL + epoch));
    shuffle(order, shuffle_rng);

    double epoch_loss_sum = 0.0;
    double epoch_weight_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(begin + config.batch_size, n);
      const std::size_t count = end - begin;
      Batch batch;
      batch.windows = MatrixI(count, window_size);
      batch.entities.resize(count);
      batch.weights.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[begin + i];
        std::copy(dataset.windows.row(src).begin(), dataset.windows.row(src).end(),
                  batch.windows.row(i).begin());
        batch.entities[i] = dataset.entities[src];
        batch.weights[i] = dataset.weights[src];
      }

      const std::uint64_t neg_seed =
          mix_seed(config.seed, 0x6e650000ULL + epoch * 0x100000ULL + batch_index);
      ModelParams grads = zeros_like(params);
      const double loss = batch_loss_and_grads(params, batch, config.negatives, neg_seed, &grads);
      if (!std::isfinite(loss))
        throw Error("divergence detected at epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(batch_index + 1));
      double batch_weight = 0.0;
      for (const double w : batch.weights) batch_weight += w;
      epoch_loss_sum += loss * batch_weight;
      epoch_weight_sum += batch_weight;

      try {
        sgd_step(params, grads, config.learning_rate);
      } catch (const Error&) {
        throw Error("divergence detected at epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(batch_index + 1));
      }
    }
    report.epoch_losses.push_back(epoch_loss_sum / epoch_weight_sum);
  }

  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

std::vector<NamedTensor> get_representations(const ModelParams& params, const Vocabulary& vocab,
                                             const EntityIndex& entities) {
  std::vector<NamedTensor> out;
  const std::size_t d = params.dim();

  NamedTensor words;
  words.name = "word_embeddings";
  words.shape = {vocab.size(), d};
  words.values.reserve(vocab.size() * d);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto row = params.word_embeddings.row(i);
    words.values.insert(words.values.end(), row.begin(), row.end());
    words.row_labels.push_back(vocab.token_of(static_cast<WordId>(i)));
  }
  out.push_back(std::move(words));

  NamedTensor reps;
  reps.name = "entity_representations";
  reps.shape = {entities.size(), d};
  reps.values = params.entity_representations.storage();
  reps.row_labels = entities.names();
  out.push_back(std::move(reps));

  if (params.kind == ModelKind::log_linear) {
    NamedTensor bias;
    bias.name = "entity_bias";
    bias.shape = {params.entity_bias.size()};
    bias.values = params.entity_bias;
    bias.row_labels = entities.names();
    out.push_back(std::move(bias));
  } else {
    NamedTensor projection;
    projection.name = "projection";
    projection.shape = {d, d};
    projection.values = params.projection.storage();
    out.push_back(std::move(projection));

    NamedTensor bias;
    bias.name = "projection_bias";
    bias.shape = {params.projection_bias.size()};
    bias.values = params.projection_bias;
    out.push_back(std::move(bias));
  }
  return out;
}

void save_model(const TrainedModel& model, const fs::path& dir) {
  const ModelParams& params = model.params;
  json manifest;
  manifest["dim"] = params.dim();
  manifest["entities_file"] = kEntityIndexFile;
  manifest["epoch_losses"] = model.epoch_losses;
  manifest["format_version"] = 1;
  manifest["model_kind"] = to_string(params.kind);
  manifest["num_entities"] = params.num_entities();
  if (params.padding_id)
    manifest["padding_id"] = *params.padding_id;
  else
    manifest["padding_id"] = nullptr;
  manifest["seed"] = model.seed;
  manifest["vocab_file"] = kVocabularyFile;
  manifest["vocab_table_size"] = params.word_embeddings.rows();
  manifest["window_size"] = model.window_size;

  write_directory_atomically(
      dir,
      [&](const fs::path& tmp) {
        const std::size_t w_shape[] = {params.word_embeddings.rows(), params.dim()};
        npy::write(tmp / kFullWordEmbeddingsFile, params.word_embeddings.storage(), w_shape);
        const std::size_t e_shape[] = {params.num_entities(), params.dim()};
        npy::write(tmp / "entity_representations.npy", params.entity_representations.storage(),
                   e_shape);
        if (params.kind == ModelKind::log_linear) {
          const std::size_t b_shape[] = {params.entity_bias.size()};
          npy::write(tmp / "entity_bias.npy", params.entity_bias, b_shape);
        } else {
          const std::size_t m_shape[] = {params.dim(), params.dim()};
          npy::write(tmp / "projection.npy", params.projection.storage(), m_shape);
          const std::size_t c_shape[] = {params.projection_bias.size()};
          npy::write(tmp / "projection_bias.npy", params.projection_bias, c_shape);
        }
        model.vocab.save(tmp / kVocabularyFile);
        model.entities.save(tmp / kEntityIndexFile);
        std::ofstream out(tmp / kModelManifestFile, std::ios::binary);
        out << manifest.dump(2) << '\n';
        if (!out) throw Error("failed writing model manifest");
      },
      [&](const fs::path& existing) {
        if (!fs::exists(existing / kModelManifestFile))
          throw Error("refusing to overwrite " + existing.string() + ": no model.json found");
      });
}

namespace {

MatrixD read_matrix(const fs::path& path, std::size_t rows, std::size_t cols) {
  npy::Array array = npy::read(path);
  if (array.dtype != npy::Dtype::float64 || array.shape.size() != 2 || array.shape[0] != rows ||
      array.shape[1] != cols)
    throw Error(path.string() + ": expected a " + std::to_string(rows) + "x" +
                std::to_string(cols) + " real matrix");
  return MatrixD::from_rows(rows, cols, std::move(array.reals));
}

std::vector<double> read_vector(const fs::path& path, std::size_t size) {
  npy::Array array = npy::read(path);
  if (array.dtype != npy::Dtype::float64 || array.shape.size() != 1 || array.shape[0] != size)
    throw Error(path.string() + ": expected a real vector of length " + std::to_string(size));
  return std::move(array.reals);
}

}  // namespace

TrainedModel load_model(const fs::path& dir) {
  std::ifstream in(dir / kModelManifestFile, std::ios::binary);
  if (!in) throw Error("cannot open model manifest: " + (dir / kModelManifestFile).string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error((dir / kModelManifestFile).string() + ": invalid JSON: " + e.what());
  }

  TrainedModel model;
  std::size_t table_size = 0;
  std::size_t num_entities = 0;
  std::size_t d = 0;
  try {
    model.params.kind = model_kind_from_string(manifest.at("model_kind").get<std::string>());
    d = manifest.at("dim").get<std::size_t>();
    table_size = manifest.at("vocab_table_size").get<std::size_t>();
    num_entities = manifest.at("num_entities").get<std::size_t>();
    if (!manifest.at("padding_id").is_null())
      model.params.padding_id = manifest.at("padding_id").get<WordId>();
    model.epoch_losses = manifest.at("epoch_losses").get<std::vector<double>>();
    model.seed = manifest.at("seed").get<std::uint64_t>();
    model.window_size = manifest.at("window_size").get<std::size_t>();
    model.vocab = Vocabulary::load(dir / manifest.at("vocab_file").get<std::string>());
    model.entities = EntityIndex::load(dir / manifest.at("entities_file").get<std::string>());
  } catch (const json::exception& e) {
    throw Error((dir / kModelManifestFile).string() + ": invalid manifest: " + e.what());
  }

  if (model.vocab.table_size() != table_size)
    throw Error(dir.string() + ": vocab_table_size mismatch between manifest and vocabulary file");
  if (model.entities.size() != num_entities)
    throw Error(dir.string() + ": num_entities mismatch between manifest and entity file");
  if (model.vocab.padding_id() != model.params.padding_id)
    throw Error(dir.string() + ": padding_id mismatch between manifest and vocabulary file");

  ModelParams& params = model.params;
  params.word_embeddings = read_matrix(dir / kFullWordEmbeddingsFile, table_size, d);
  params.entity_representations = read_matrix(dir / "entity_representations.npy", num_entities, d);
  if (params.kind == ModelKind::log_linear) {
    params.entity_bias = read_vector(dir / "entity_bias.npy", num_entities);
  } else {
    params.projection = read_matrix(dir / "projection.npy", d, d);
    params.projection_bias = read_vector(dir / "projection_bias.npy", d);
  }

  if (!all_finite(params)) throw Error(dir.string() + ": non-finite model parameters");
  if (params.padding_id) {
    const auto pad = params.word_embeddings.row(static_cast<std::size_t>(*params.padding_id));
    for (const double v : pad)
      if (v != 0.0) throw Error(dir.string() + ": padding row of word embeddings is not zero");
  }
  return model;
}

}  // namespace entvec
