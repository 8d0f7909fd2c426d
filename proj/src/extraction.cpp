#include "entvec/extraction.hpp"

#include <algorithm>
#include <fstream>

#include "entvec/errors.hpp"
#include "entvec/rng.hpp"

namespace entvec {

void ExtractionConfig::validate() const {
  if (window_size < 1) throw UsageError("window_size must be >= 1");
  if (stride < 1) throw UsageError("stride must be >= 1");
}

EntityIndex EntityIndex::from_names(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  EntityIndex index;
  index.names_ = std::move(names);
  index.id_of_.reserve(index.names_.size());
  for (std::size_t i = 0; i < index.names_.size(); ++i)
    index.id_of_.emplace(index.names_[i], static_cast<EntityId>(i));
  return index;
}

std::optional<EntityId> EntityIndex::id_of(std::string_view name) const {
  const auto it = id_of_.find(std::string(name));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

void EntityIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open entity file for writing: " + path.string());
  for (std::size_t i = 0; i < names_.size(); ++i) out << names_[i] << '\t' << i << '\n';
  if (!out) throw Error("failed writing entity file: " + path.string());
}

EntityIndex EntityIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open entity file: " + path.string());
  EntityIndex index;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error("malformed entity line in " + path.string() + ": " + line);
    std::string name = line.substr(0, tab);
    std::size_t id = 0;
    try {
      id = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw Error("malformed entity id in " + path.string() + ": " + line);
    }
    if (id != index.names_.size())
      throw Error("entity ids not dense in " + path.string() + ": " + line);
    if (!index.id_of_.emplace(name, static_cast<EntityId>(id)).second)
      throw Error("duplicate entity name in " + path.string() + ": " + name);
    index.names_.push_back(std::move(name));
  }
  if (index.names_.empty()) throw Error("empty entity file: " + path.string());
  return index;
}

AssociationTable AssociationTable::from_pairs(
    std::span<const std::pair<std::string, std::string>> doc_entity_pairs) {
  std::vector<std::string> names;
  names.reserve(doc_entity_pairs.size());
  for (const auto& [doc, entity] : doc_entity_pairs) names.push_back(entity);

  AssociationTable table;
  table.entities = EntityIndex::from_names(std::move(names));
  for (const auto& [doc, entity] : doc_entity_pairs)
    table.doc_to_entities[doc].push_back(*table.entities.id_of(entity));
  for (auto& [doc, ids] : table.doc_to_entities) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  return table;
}

namespace {

std::vector<Window> extract_impl(std::span<const WordId> ids, const ExtractionConfig& config,
                                 std::optional<WordId> padding_id) {
  config.validate();
  if (config.pad_short_documents && !padding_id)
    throw Error("padding requested but no padding id reserved");

  std::vector<Window> out;
  if (ids.empty()) return out;
  const std::size_t step = config.skip + 1;
  for (std::size_t start = 0; start < ids.size(); start += config.stride) {
    Window window;
    window.word_ids.reserve(config.window_size);
    for (std::size_t t = 0; t < config.window_size; ++t) {
      const std::size_t pos = start + t * step;
      if (pos >= ids.size()) break;
      window.word_ids.push_back(ids[pos]);
    }
    if (window.word_ids.size() == config.window_size) {
      out.push_back(std::move(window));
    } else if (config.pad_short_documents) {
      window.padding = config.window_size - window.word_ids.size();
      window.word_ids.resize(config.window_size, *padding_id);
      out.push_back(std::move(window));
    }
  }
  return out;
}

}  // namespace

std::vector<Window> extract_windows(std::span<const WordId> ids, const ExtractionConfig& config,
                                    std::optional<WordId> padding_id) {
  if (config.skip != 0) throw Error("extract_windows requires skip = 0");
  return extract_impl(ids, config, padding_id);
}

std::vector<Window> extract_skipgrams(std::span<const WordId> ids, const ExtractionConfig& config,
                                      std::optional<WordId> padding_id) {
  if (config.skip < 1) throw Error("extract_skipgrams requires skip >= 1");
  return extract_impl(ids, config, padding_id);
}

std::vector<Window> extract(std::span<const WordId> ids, const ExtractionConfig& config,
                            std::optional<WordId> padding_id) {
  return extract_impl(ids, config, padding_id);
}

std::vector<TrainingInstance> make_instances(std::string_view doc_id,
                                             std::span<const Window> windows,
                                             const AssociationTable& assoc,
                                             std::size_t* skipped_docs) {
  std::vector<TrainingInstance> instances;
  const auto it = assoc.doc_to_entities.find(std::string(doc_id));
  if (it == assoc.doc_to_entities.end()) {
    if (skipped_docs) ++*skipped_docs;
    return instances;
  }
  instances.reserve(windows.size() * it->second.size());
  for (const Window& window : windows) {
    for (const EntityId entity : it->second) {
      instances.push_back({window, entity, 1.0, std::string(doc_id)});
    }
  }
  return instances;
}

void weight_reciprocal_length(std::span<TrainingInstance> instances,
                              const std::unordered_map<std::string, std::int64_t>& doc_lengths) {
  for (TrainingInstance& instance : instances) {
    const auto it = doc_lengths.find(instance.source_doc);
    if (it == doc_lengths.end())
      throw Error("no recorded length for document " + instance.source_doc);
    if (it->second <= 0) throw Error("zero-length document " + instance.source_doc);
    instance.weight = 1.0 / static_cast<double>(it->second);
  }
}

std::vector<TrainingInstance> resample_per_entity(std::span<const TrainingInstance> instances,
                                                  const EntityIndex& entities,
                                                  std::optional<std::size_t> target,
                                                  std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_entity(entities.size());
  for (std::size_t i = 0; i < instances.size(); ++i)
    by_entity.at(static_cast<std::size_t>(instances[i].entity_id)).push_back(i);

  std::size_t max_count = 0;
  for (std::size_t e = 0; e < by_entity.size(); ++e) {
    if (by_entity[e].empty())
      throw Error("entity has no training instances: " + entities.name_of(static_cast<EntityId>(e)));
    max_count = std::max(max_count, by_entity[e].size());
  }
  const std::size_t per_entity = target.value_or(max_count);

  std::vector<TrainingInstance> out;
  out.reserve(per_entity * by_entity.size());
  for (std::size_t e = 0; e < by_entity.size(); ++e) {
    Rng rng(mix_seed(seed, e));
    for (std::size_t t = 0; t < per_entity; ++t) {
      const std::size_t pick = by_entity[e][uniform_index(rng, by_entity[e].size())];
      TrainingInstance copy = instances[pick];
      copy.weight = 1.0;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace entvec
