#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entvec/vocabulary.hpp"

namespace entvec {

using EntityId = std::int64_t;

struct ExtractionConfig {
  std::size_t window_size = 5;
  std::size_t stride = 5;
  std::size_t skip = 0;  // tokens skipped between selected tokens inside a window
  bool pad_short_documents = true;

  void validate() const;
};

// Fixed-length word-id sequence; padding, when present, is a contiguous suffix.
struct Window {
  std::vector<WordId> word_ids;
  std::size_t padding = 0;

  bool operator==(const Window&) const = default;
};

// Dense entity-name <-> id map; ids are assigned by ascending name so that the
// numbering does not depend on association-file line order.
class EntityIndex {
 public:
  EntityIndex() = default;
  // Names are deduplicated and sorted.
  static EntityIndex from_names(std::vector<std::string> names);

  std::optional<EntityId> id_of(std::string_view name) const;
  const std::string& name_of(EntityId id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  void save(const std::filesystem::path& path) const;  // "name<TAB>id" per line
  static EntityIndex load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, EntityId> id_of_;
};

struct AssociationTable {
  EntityIndex entities;
  // Entity ids per document, ascending and unique.
  std::unordered_map<std::string, std::vector<EntityId>> doc_to_entities;

  static AssociationTable from_pairs(
      std::span<const std::pair<std::string, std::string>> doc_entity_pairs);
};

struct TrainingInstance {
  Window window;
  EntityId entity_id = 0;
  double weight = 1.0;
  std::string source_doc;
};

// Plain windows: starts at 0, stride, 2*stride, ... while in range. A partial
// window is right-padded when pad_short_documents is set and dropped otherwise.
// Requires config.skip == 0.
std::vector<Window> extract_windows(std::span<const WordId> ids, const ExtractionConfig& config,
                                    std::optional<WordId> padding_id);

// Skip-grams: same start schedule, selecting every (skip+1)-th token.
// Requires config.skip >= 1.
std::vector<Window> extract_skipgrams(std::span<const WordId> ids, const ExtractionConfig& config,
                                      std::optional<WordId> padding_id);

// Dispatches on config.skip.
std::vector<Window> extract(std::span<const WordId> ids, const ExtractionConfig& config,
                            std::optional<WordId> padding_id);

// Cartesian product of the document's windows with its associated entities
// (ascending entity id), unit weights. A document absent from the association
// table yields nothing and bumps *skipped_docs.
std::vector<TrainingInstance> make_instances(std::string_view doc_id,
                                             std::span<const Window> windows,
                                             const AssociationTable& assoc,
                                             std::size_t* skipped_docs);

// Sets each weight to 1 / doc_length(source_doc). Lengths are in-vocabulary
// token counts and must be positive.
void weight_reciprocal_length(std::span<TrainingInstance> instances,
                              const std::unordered_map<std::string, std::int64_t>& doc_lengths);

// Draws `target` instances per entity uniformly with replacement (per-entity
// sub-seeds derived from `seed`); target defaults to the maximum per-entity
// count. Output weights are reset to 1. Throws if any entity has no instances.
std::vector<TrainingInstance> resample_per_entity(std::span<const TrainingInstance> instances,
                                                  const EntityIndex& entities,
                                                  std::optional<std::size_t> target,
                                                  std::uint64_t seed);

}  // namespace entvec
