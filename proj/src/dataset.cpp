#include "entvec/dataset.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "entvec/errors.hpp"
#include "entvec/fs_util.hpp"
#include "entvec/npy.hpp"

namespace entvec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(WeightingScheme scheme) {
  switch (scheme) {
    case WeightingScheme::none:
      return "none";
    case WeightingScheme::reciprocal_doc_length:
      return "reciprocal_doc_length";
    case WeightingScheme::resampled:
      return "resampled";
  }
  throw Error("unknown weighting scheme");
}

WeightingScheme weighting_scheme_from_string(const std::string& name) {
  if (name == "none") return WeightingScheme::none;
  if (name == "reciprocal_doc_length") return WeightingScheme::reciprocal_doc_length;
  if (name == "resampled") return WeightingScheme::resampled;
  throw Error("unknown weighting scheme: " + name);
}

namespace {

json manifest_to_json(const Manifest& m) {
  json counts;
  counts["num_docs"] = m.num_docs;
  counts["num_entities"] = m.num_entities;
  counts["num_instances"] = m.num_instances;
  counts["num_skipped_docs"] = m.num_skipped_docs;
  counts["vocab_size"] = m.vocab_size;

  json out;
  out["counts"] = counts;
  out["format_version"] = m.format_version;
  if (m.padding_id)
    out["padding_id"] = *m.padding_id;
  else
    out["padding_id"] = nullptr;
  out["parameters"] = m.parameters;
  out["seed"] = m.seed;
  out["skip"] = m.skip;
  out["stride"] = m.stride;
  out["weighting_scheme"] = to_string(m.weighting);
  out["window_size"] = m.window_size;
  return out;
}

Manifest manifest_from_json(const fs::path& path, const json& j) {
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.window_size = j.at("window_size").get<std::size_t>();
    m.stride = j.at("stride").get<std::size_t>();
    m.skip = j.at("skip").get<std::size_t>();
    if (!j.at("padding_id").is_null()) m.padding_id = j.at("padding_id").get<WordId>();
    m.weighting = weighting_scheme_from_string(j.at("weighting_scheme").get<std::string>());
    const json& counts = j.at("counts");
    m.num_instances = counts.at("num_instances").get<std::size_t>();
    m.vocab_size = counts.at("vocab_size").get<std::size_t>();
    m.num_entities = counts.at("num_entities").get<std::size_t>();
    m.num_docs = counts.at("num_docs").get<std::size_t>();
    m.num_skipped_docs = counts.at("num_skipped_docs").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("parameters"))
      m.parameters = j.at("parameters").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid manifest: " + e.what());
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open manifest for writing: " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
  if (!out) throw Error("failed writing manifest: " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
  return manifest_from_json(path, j);
}

// Overwrite policy shared by dataset and model directories: replacing is fine
// only when the destination is a previous output of the same format version.
void check_same_format(const fs::path& existing, const char* manifest_name, int format_version) {
  const fs::path manifest_path = existing / manifest_name;
  if (!fs::exists(manifest_path))
    throw Error("refusing to overwrite " + existing.string() + ": no " +
                std::string(manifest_name) + " found");
  std::ifstream in(manifest_path, std::ios::binary);
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    throw Error("refusing to overwrite " + existing.string() + ": unreadable manifest");
  }
  const int existing_version = j.value("format_version", -1);
  if (existing_version != format_version)
    throw Error("refusing to overwrite " + existing.string() + ": format_version " +
                std::to_string(existing_version) + " != " + std::to_string(format_version));
}

}  // namespace

Manifest package(std::span<const TrainingInstance> instances, const Vocabulary& vocab,
                 const EntityIndex& entity_index, Manifest manifest, const fs::path& out_dir) {
  if (instances.empty()) throw Error("no training instances");

  const std::size_t n = instances.size();
  const std::size_t window_size = manifest.window_size;
  MatrixI windows(n, window_size);
  std::vector<std::int64_t> entities(n);
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TrainingInstance& instance = instances[i];
    if (instance.window.word_ids.size() != window_size)
      throw Error("window length does not match window_size");
    std::copy(instance.window.word_ids.begin(), instance.window.word_ids.end(),
              windows.row(i).begin());
    entities[i] = instance.entity_id;
    weights[i] = instance.weight;
  }

  manifest.num_instances = n;
  manifest.vocab_size = vocab.size();
  manifest.num_entities = entity_index.size();
  manifest.padding_id = vocab.padding_id();

  write_directory_atomically(
      out_dir,
      [&](const fs::path& tmp) {
        const std::size_t windows_shape[] = {n, window_size};
        const std::size_t vec_shape[] = {n};
        npy::write(tmp / kWindowsFile, windows.storage(), windows_shape);
        npy::write(tmp / kEntitiesArrayFile, entities, vec_shape);
        npy::write(tmp / kWeightsFile, weights, vec_shape);
        vocab.save(tmp / kVocabularyFile);
        entity_index.save(tmp / kEntityIndexFile);
        write_manifest(tmp / kManifestFile, manifest);
      },
      [&](const fs::path& existing) {
        check_same_format(existing, kManifestFile, manifest.format_version);
      });
  return manifest;
}

PackagedDataset load_dataset(const fs::path& dir) {
  PackagedDataset dataset;
  dataset.manifest = read_manifest(dir / kManifestFile);
  const Manifest& m = dataset.manifest;

  dataset.vocab = Vocabulary::load(dir / kVocabularyFile);
  dataset.entity_index = EntityIndex::load(dir / kEntityIndexFile);

  npy::Array windows = npy::read(dir / kWindowsFile);
  npy::Array entities = npy::read(dir / kEntitiesArrayFile);
  npy::Array weights = npy::read(dir / kWeightsFile);
  if (windows.dtype != npy::Dtype::int64 || windows.shape.size() != 2)
    throw Error(dir.string() + ": windows.npy must be a 2-d integer array");
  if (entities.dtype != npy::Dtype::int64 || entities.shape.size() != 1)
    throw Error(dir.string() + ": entities.npy must be a 1-d integer array");
  if (weights.dtype != npy::Dtype::float64 || weights.shape.size() != 1)
    throw Error(dir.string() + ": weights.npy must be a 1-d real array");

  const std::size_t n = windows.shape[0];
  if (windows.shape[1] != m.window_size)
    throw Error(dir.string() + ": window_size mismatch: windows.npy has " +
                std::to_string(windows.shape[1]) + " columns, manifest says " +
                std::to_string(m.window_size));
  if (n != m.num_instances)
    throw Error(dir.string() + ": num_instances mismatch: arrays have " + std::to_string(n) +
                ", manifest says " + std::to_string(m.num_instances));
  if (entities.shape[0] != n || weights.shape[0] != n)
    throw Error(dir.string() + ": array lengths disagree");
  if (dataset.vocab.size() != m.vocab_size)
    throw Error(dir.string() + ": vocab_size mismatch: vocabulary file has " +
                std::to_string(dataset.vocab.size()) + ", manifest says " +
                std::to_string(m.vocab_size));
  if (dataset.vocab.padding_id() != m.padding_id)
    throw Error(dir.string() + ": padding_id mismatch between vocabulary and manifest");
  if (dataset.entity_index.size() != m.num_entities)
    throw Error(dir.string() + ": num_entities mismatch: entity file has " +
                std::to_string(dataset.entity_index.size()) + ", manifest says " +
                std::to_string(m.num_entities));

  const std::int64_t word_limit = static_cast<std::int64_t>(dataset.vocab.table_size());
  for (const std::int64_t id : windows.ints)
    if (id < 0 || id >= word_limit) throw Error(dir.string() + ": word id out of range");
  const std::int64_t entity_limit = static_cast<std::int64_t>(dataset.entity_index.size());
  for (const std::int64_t id : entities.ints)
    if (id < 0 || id >= entity_limit) throw Error(dir.string() + ": entity id out of range");
  for (const double w : weights.reals)
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(dir.string() + ": non-positive weight");

  dataset.windows = MatrixI::from_rows(n, m.window_size, std::move(windows.ints));
  dataset.entities = std::move(entities.ints);
  dataset.weights = std::move(weights.reals);
  return dataset;
}

}  // namespace entvec
