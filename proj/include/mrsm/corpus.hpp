#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrsm/types.hpp"

namespace mrsm {

// A document reduced to its keyword multiset. Counts are kept because the
// weighting stage needs term frequencies, not just presence.
struct Document {
  DocId id = 0;
  OwnerId owner = 0;
  std::map<std::string, std::uint32_t, std::less<>> terms;
};

// Whitespace split, lowercase, punctuation stripped. No stemming.
std::vector<std::string> tokenize(std::string_view text);

Document make_document(DocId id, OwnerId owner, std::string_view text);
Document make_document(DocId id, OwnerId owner, const std::vector<std::string>& terms);

// Throws on an empty corpus, duplicate doc ids or empty documents.
void validate_corpus(std::span<const Document> docs);

class KeywordDictionary {
 public:
  KeywordDictionary() = default;
  // `words` must be strictly increasing.
  explicit KeywordDictionary(std::vector<std::string> words);

  static KeywordDictionary build(std::span<const Document> docs);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t dim) const { return words_.at(dim); }
  std::optional<std::size_t> position(std::string_view word) const;

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t, std::less<>> position_;
};

struct BinaryIndex {
  DocId doc = 0;
  OwnerId owner = 0;
  std::vector<std::uint8_t> bits;     // n entries, 0/1
  std::vector<std::uint32_t> counts;  // n entries, raw term frequency
};

BinaryIndex build_binary_index(const Document& doc, const KeywordDictionary& dict);
std::vector<BinaryIndex> build_binary_indexes(std::span<const Document> docs,
                                              const KeywordDictionary& dict);

// Keywords a user asks for, with their weights (default 1).
struct KeywordQuery {
  std::vector<std::pair<std::string, double>> terms;

  static KeywordQuery of(const std::vector<std::string>& words, double weight = 1.0);
};

// One JSON object per line: {"doc_id":..,"owner_id":..,"text":".."} or with
// "terms":[..] instead of "text". Blank lines are skipped.
std::vector<Document> read_corpus(std::istream& in);
std::vector<Document> load_corpus(const std::string& path);
void write_corpus(std::ostream& out, std::span<const Document> docs);
std::string document_to_json(const Document& doc);
Document document_from_json(std::string_view line);

// One word per line; line number (from 0) is the dimension.
void write_dictionary(std::ostream& out, const KeywordDictionary& dict);
KeywordDictionary read_dictionary(std::istream& in);

}  // namespace mrsm
