#include "mrsm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

namespace mrsm {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Document make_document(DocId id, OwnerId owner, const std::vector<std::string>& terms) {
  Document doc;
  doc.id = id;
  doc.owner = owner;
  for (const auto& t : terms) {
    if (!t.empty()) ++doc.terms[t];
  }
  return doc;
}

Document make_document(DocId id, OwnerId owner, std::string_view text) {
  return make_document(id, owner, tokenize(text));
}

void validate_corpus(std::span<const Document> docs) {
  if (docs.empty()) throw Error("corpus is empty");
  std::set<DocId> seen;
  for (const auto& d : docs) {
    if (!seen.insert(d.id).second) throw Error("duplicate doc_id " + std::to_string(d.id));
    if (d.terms.empty()) throw Error("document " + std::to_string(d.id) + " has no terms");
  }
}

KeywordDictionary::KeywordDictionary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (i > 0 && !(words_[i - 1] < words_[i])) {
      throw Error("dictionary words must be strictly increasing at '" + words_[i] + "'");
    }
    position_.emplace(words_[i], i);
  }
}

KeywordDictionary KeywordDictionary::build(std::span<const Document> docs) {
  validate_corpus(docs);
  std::set<std::string> all;
  for (const auto& d : docs) {
    for (const auto& [term, count] : d.terms) all.insert(term);
  }
  return KeywordDictionary(std::vector<std::string>(all.begin(), all.end()));
}

std::optional<std::size_t> KeywordDictionary::position(std::string_view word) const {
  auto it = position_.find(word);
  if (it == position_.end()) return std::nullopt;
  return it->second;
}

BinaryIndex build_binary_index(const Document& doc, const KeywordDictionary& dict) {
  BinaryIndex index;
  index.doc = doc.id;
  index.owner = doc.owner;
  index.bits.assign(dict.size(), 0);
  index.counts.assign(dict.size(), 0);
  for (const auto& [term, count] : doc.terms) {
    auto dim = dict.position(term);
    if (!dim) throw Error("term '" + term + "' of document " + std::to_string(doc.id) +
                          " is not in the dictionary");
    index.bits[*dim] = 1;
    index.counts[*dim] = count;
  }
  return index;
}

std::vector<BinaryIndex> build_binary_indexes(std::span<const Document> docs,
                                              const KeywordDictionary& dict) {
  std::vector<BinaryIndex> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(build_binary_index(d, dict));
  return out;
}

KeywordQuery KeywordQuery::of(const std::vector<std::string>& words, double weight) {
  KeywordQuery q;
  for (const auto& w : words) q.terms.emplace_back(w, weight);
  return q;
}

Document document_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  if (!j.contains("doc_id") || !j.contains("owner_id")) {
    throw Error("corpus record needs doc_id and owner_id");
  }
  const auto id = j.at("doc_id").get<DocId>();
  const auto owner = j.at("owner_id").get<OwnerId>();
  if (j.contains("terms")) {
    Document doc;
    doc.id = id;
    doc.owner = owner;
    const auto& terms = j.at("terms");
    if (terms.is_object()) {
      for (const auto& [term, count] : terms.items()) doc.terms[term] += count.get<std::uint32_t>();
    } else {
      for (const auto& t : terms) ++doc.terms[t.get<std::string>()];
    }
    return doc;
  }
  if (j.contains("text")) return make_document(id, owner, j.at("text").get<std::string>());
  throw Error("corpus record " + std::to_string(id) + " has neither text nor terms");
}

std::string document_to_json(const Document& doc) {
  nlohmann::json j;
  j["doc_id"] = doc.id;
  j["owner_id"] = doc.owner;
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [term, count] : doc.terms) terms[term] = count;
  j["terms"] = std::move(terms);
  return j.dump();
}

std::vector<Document> read_corpus(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      docs.push_back(document_from_json(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path);
  return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) out << document_to_json(d) << '\n';
}

void write_dictionary(std::ostream& out, const KeywordDictionary& dict) {
  for (const auto& w : dict.words()) out << w << '\n';
}

KeywordDictionary read_dictionary(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    words.push_back(line);
  }
  return KeywordDictionary(std::move(words));
}

}  // namespace mrsm
