#include "entvec/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "entvec/errors.hpp"

namespace entvec {

namespace {

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case U'\t':
    case U'\n':
    case 0x0B:
    case 0x0C:
    case U'\r':
    case U' ':
    case 0x85:    // NEL
    case 0xA0:    // NBSP
    case 0x1680:  // ogham space mark
    case 0x2028:  // line separator
    case 0x2029:  // paragraph separator
    case 0x202F:  // narrow NBSP
    case 0x205F:  // medium mathematical space
    case 0x3000:  // ideographic space
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_ascii_alnum(char32_t cp) {
  return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') ||
         (cp >= U'A' && cp <= U'Z');
}

// Word character: ASCII alphanumerics plus everything non-ASCII.
bool is_word_char(char32_t cp) { return cp >= 0x80 || is_ascii_alnum(cp); }

// Decodes one code point starting at `i`; invalid sequences decode as a single
// byte so that tokenization never fails on malformed input.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char b0 = byte(i);
  std::size_t len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    ++i;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return b0;
  }
  if (i + len > s.size()) {
    ++i;
    return b0;
  }
  for (std::size_t k = 1; k < len; ++k) {
    if ((byte(i + k) & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (byte(i + k) & 0x3F);
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::size_t count_code_points(std::string_view token) {
  std::size_t i = 0;
  std::size_t n = 0;
  while (i < token.size()) {
    decode_utf8(token, i);
    ++n;
  }
  return n;
}

void flush_piece(std::vector<char32_t>& piece, std::vector<std::string>& out) {
  if (piece.empty()) return;
  std::size_t begin = 0;
  std::size_t end = piece.size();
  while (begin < end && !is_word_char(piece[begin])) ++begin;
  while (end > begin && !is_word_char(piece[end - 1])) --end;
  if (begin < end) {
    std::string token;
    for (std::size_t k = begin; k < end; ++k) {
      char32_t cp = piece[k];
      if (cp >= U'A' && cp <= U'Z') cp += 32;
      append_utf8(token, cp);
    }
    out.push_back(std::move(token));
  }
  piece.clear();
}

}  // namespace

void FilterConfig::validate() const {
  if (min_token_length < 1) throw UsageError("min_token_length must be >= 1");
  if (min_collection_frequency < 1) throw UsageError("min_collection_frequency must be >= 1");
  if (!(max_document_frequency_fraction > 0.0 && max_document_frequency_fraction <= 1.0))
    throw UsageError("max_document_frequency_fraction must be in (0, 1]");
  if (max_vocabulary_size && *max_vocabulary_size < 1)
    throw UsageError("max_vocabulary_size must be >= 1");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::vector<char32_t> piece;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode_utf8(text, i);
    if (is_unicode_space(cp)) {
      flush_piece(piece, out);
    } else {
      piece.push_back(cp);
    }
  }
  flush_piece(piece, out);
  return out;
}

std::optional<WordId> Vocabulary::id_of(std::string_view token) const {
  const auto it = id_of_.find(std::string(token));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token_of(WordId id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

std::int64_t Vocabulary::collection_frequency(WordId id) const {
  return collection_frequency_.at(static_cast<std::size_t>(id));
}

std::int64_t Vocabulary::doc_frequency(WordId id) const {
  return doc_frequency_.at(static_cast<std::size_t>(id));
}

std::vector<WordId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<WordId> ids;
  ids.reserve(tokens.size());
  for (const auto& token : tokens) {
    const auto it = id_of_.find(token);
    if (it != id_of_.end()) ids.push_back(it->second);
  }
  return ids;
}

Vocabulary build_vocabulary(std::span<const Document> corpus, const FilterConfig& config,
                            bool reserve_padding) {
  config.validate();
  if (corpus.empty()) throw Error("empty corpus");

  struct Counts {
    std::int64_t collection = 0;
    std::int64_t docs = 0;
  };
  std::unordered_map<std::string, Counts> counts;
  for (const Document& doc : corpus) {
    std::unordered_set<std::string> seen;
    for (std::string& token : tokenize(doc.text)) {
      auto& entry = counts[token];
      ++entry.collection;
      if (seen.insert(std::move(token)).second) ++entry.docs;
    }
  }

  const double num_docs = static_cast<double>(corpus.size());
  std::vector<std::pair<std::string, Counts>> retained;
  for (const auto& [token, c] : counts) {
    if (count_code_points(token) < config.min_token_length) continue;
    if (c.collection < config.min_collection_frequency) continue;
    if (static_cast<double>(c.docs) / num_docs > config.max_document_frequency_fraction) continue;
    if (config.stopwords.contains(token)) continue;
    retained.emplace_back(token, c);
  }
  if (retained.empty()) throw Error("empty vocabulary");

  std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) {
    if (a.second.collection != b.second.collection)
      return a.second.collection > b.second.collection;
    return a.first < b.first;
  });
  if (config.max_vocabulary_size && retained.size() > *config.max_vocabulary_size)
    retained.resize(*config.max_vocabulary_size);

  Vocabulary vocab;
  vocab.filter_config_ = config;
  vocab.tokens_.reserve(retained.size());
  vocab.collection_frequency_.reserve(retained.size());
  vocab.doc_frequency_.reserve(retained.size());
  for (auto& [token, c] : retained) {
    const WordId id = static_cast<WordId>(vocab.tokens_.size());
    vocab.id_of_.emplace(token, id);
    vocab.tokens_.push_back(std::move(token));
    vocab.collection_frequency_.push_back(c.collection);
    vocab.doc_frequency_.push_back(c.docs);
  }
  if (reserve_padding) vocab.padding_id_ = static_cast<WordId>(vocab.tokens_.size());
  return vocab;
}

namespace {
constexpr std::string_view kVocabHeader = "#vocab-version:1";
constexpr std::string_view kPaddingToken = "<PAD>";
}  // namespace

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open vocabulary file for writing: " + path.string());
  out << kVocabHeader << '\n';
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    out << tokens_[id] << '\t' << collection_frequency_[id] << '\t' << doc_frequency_[id] << '\n';
  }
  if (padding_id_) out << kPaddingToken << "\t0\t0\n";
  if (!out) throw Error("failed writing vocabulary file: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open vocabulary file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader)
    throw Error("bad vocabulary header in " + path.string());

  Vocabulary vocab;
  while (std::getline(in, line)) {
    std::size_t tab1 = line.find('\t');
    std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      throw Error("malformed vocabulary line in " + path.string() + ": " + line);
    std::string token = line.substr(0, tab1);
    std::int64_t cf = 0;
    std::int64_t df = 0;
    try {
      cf = std::stoll(line.substr(tab1 + 1, tab2 - tab1 - 1));
      df = std::stoll(line.substr(tab2 + 1));
    } catch (const std::exception&) {
      throw Error("malformed vocabulary counts in " + path.string() + ": " + line);
    }
    if (token == kPaddingToken) {
      if (vocab.padding_id_) throw Error("duplicate padding line in " + path.string());
      vocab.padding_id_ = static_cast<WordId>(vocab.tokens_.size());
      continue;
    }
    if (vocab.padding_id_) throw Error("padding line must be last in " + path.string());
    const WordId id = static_cast<WordId>(vocab.tokens_.size());
    if (!vocab.id_of_.emplace(token, id).second)
      throw Error("duplicate token in " + path.string() + ": " + token);
    vocab.tokens_.push_back(std::move(token));
    vocab.collection_frequency_.push_back(cf);
    vocab.doc_frequency_.push_back(df);
  }
  if (vocab.tokens_.empty()) throw Error("empty vocabulary file: " + path.string());
  return vocab;
}

}  // namespace entvec
