#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "entvec/extraction.hpp"
#include "entvec/matrix.hpp"
#include "entvec/vocabulary.hpp"

namespace entvec {

enum class WeightingScheme { none, reciprocal_doc_length, resampled };

std::string to_string(WeightingScheme scheme);
WeightingScheme weighting_scheme_from_string(const std::string& name);

struct Manifest {
  int format_version = 1;
  std::size_t window_size = 0;
  std::size_t stride = 0;
  std::size_t skip = 0;
  std::optional<WordId> padding_id;
  WeightingScheme weighting = WeightingScheme::none;
  std::size_t num_instances = 0;
  std::size_t vocab_size = 0;  // retained tokens, padding excluded
  std::size_t num_entities = 0;
  std::size_t num_docs = 0;
  std::size_t num_skipped_docs = 0;
  std::uint64_t seed = 0;
  // Creation parameters echoed verbatim (string key/value pairs).
  std::map<std::string, std::string> parameters;
};

struct PackagedDataset {
  MatrixI windows;                 // N x window_size
  std::vector<EntityId> entities;  // N
  std::vector<double> weights;     // N
  Vocabulary vocab;
  EntityIndex entity_index;
  Manifest manifest;

  std::size_t num_instances() const { return entities.size(); }
};

inline constexpr const char* kWindowsFile = "windows.npy";
inline constexpr const char* kEntitiesArrayFile = "entities.npy";
inline constexpr const char* kWeightsFile = "weights.npy";
inline constexpr const char* kVocabularyFile = "vocabulary.tsv";
inline constexpr const char* kEntityIndexFile = "entities.tsv";
inline constexpr const char* kManifestFile = "manifest.json";

// Writes windows.npy / entities.npy / weights.npy plus vocabulary, entity
// index and manifest.json into out_dir (built in a temp dir, committed by
// rename). `manifest` must carry everything except the counts filled in here.
// Refuses to replace an existing directory that is not a dataset of the same
// format version.
Manifest package(std::span<const TrainingInstance> instances, const Vocabulary& vocab,
                 const EntityIndex& entity_index, Manifest manifest,
                 const std::filesystem::path& out_dir);

// Loads and validates a packaged dataset; any invariant violation (count
// mismatch, id out of range, non-positive weight) is a hard error.
PackagedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace entvec
