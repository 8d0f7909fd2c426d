#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace entvec {

using WordId = std::int64_t;

struct Document {
  std::string id;
  std::string text;
};

// Token retention bounds applied while building a vocabulary.
struct FilterConfig {
  std::size_t min_token_length = 1;  // code points
  std::int64_t min_collection_frequency = 1;
  double max_document_frequency_fraction = 1.0;  // in (0, 1]
  std::optional<std::size_t> max_vocabulary_size;
  std::unordered_set<std::string> stopwords;

  void validate() const;
};

// Splits on Unicode whitespace, strips leading/trailing ASCII punctuation
// from each piece, lowercases ASCII letters. Non-ASCII code points are kept
// verbatim and treated as word characters; invalid UTF-8 bytes are treated as
// single code points. Empty pieces are dropped.
std::vector<std::string> tokenize(std::string_view text);

// Immutable token<->id dictionary. Ids are dense in [0, size()) and assigned
// by descending collection frequency with lexicographic tie-breaking. When a
// padding id is reserved it equals size() and has no surface token.
class Vocabulary {
 public:
  std::optional<WordId> id_of(std::string_view token) const;
  const std::string& token_of(WordId id) const;
  std::int64_t collection_frequency(WordId id) const;
  std::int64_t doc_frequency(WordId id) const;

  // Retained tokens, padding excluded.
  std::size_t size() const { return tokens_.size(); }
  // Rows an embedding table needs: size() plus the padding slot if reserved.
  std::size_t table_size() const { return tokens_.size() + (padding_id_ ? 1 : 0); }
  std::optional<WordId> padding_id() const { return padding_id_; }
  const FilterConfig& filter_config() const { return filter_config_; }

  // Order-preserving; out-of-vocabulary tokens are dropped.
  std::vector<WordId> encode(std::span<const std::string> tokens) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend Vocabulary build_vocabulary(std::span<const Document> corpus,
                                     const FilterConfig& config, bool reserve_padding);

 private:
  std::unordered_map<std::string, WordId> id_of_;
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> collection_frequency_;
  std::vector<std::int64_t> doc_frequency_;
  std::optional<WordId> padding_id_;
  FilterConfig filter_config_;
};

// Counts frequencies over the corpus, applies the filter bounds and assigns
// ids. Deterministic for a given corpus content regardless of document order.
// Throws Error on an empty corpus or when every token is filtered out.
Vocabulary build_vocabulary(std::span<const Document> corpus, const FilterConfig& config,
                            bool reserve_padding);

}  // namespace entvec
