#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrsm/corpus.hpp"

namespace mrsm {

// Topic-structured stand-in for a multi-owner publication corpus. Every
// topic owns a contiguous block of the vocabulary; owners write mostly about
// one topic, and term draws within a topic follow a Zipf law.
struct SyntheticCorpusConfig {
  std::size_t documents = 500;
  std::size_t vocabulary = 4000;
  std::size_t owners = 20;
  std::size_t topics = 4;
  std::size_t mean_terms = 40;         // tokens per document, uniform in [mean/2, 3*mean/2]
  double zipf_exponent = 1.0;
  double background_share = 0.1;      // tokens drawn from the whole vocabulary
  double secondary_topic_share = 0.2;  // documents written on an owner's second topic
  bool cover_vocabulary = true;        // every word used at least once
  std::uint64_t seed = 1;
};

class SyntheticCorpus {
 public:
  explicit SyntheticCorpus(SyntheticCorpusConfig config);

  const SyntheticCorpusConfig& config() const { return config_; }
  const std::vector<Document>& documents() const { return documents_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  std::size_t topic_of_word(std::size_t word) const;
  // Vocabulary indices of a topic, most popular first.
  const std::vector<std::size_t>& topic_ranking(std::size_t topic) const {
    return topic_rank_.at(topic);
  }

  // Fresh documents from the same generative model (no vocabulary top-up).
  std::vector<Document> sample_documents(std::size_t count, DocId first_id,
                                         std::uint64_t seed) const;

  // Zipf query workload: pick a topic, then `min_terms..max_terms` distinct
  // keywords by popularity rank within it.
  std::vector<KeywordQuery> sample_queries(std::size_t count, std::size_t min_terms,
                                           std::size_t max_terms, std::uint64_t seed) const;

 private:
  Document sample_document(DocId id, Rng& rng) const;
  std::size_t draw_topic_word(std::size_t topic, Rng& rng) const;

  SyntheticCorpusConfig config_;
  std::vector<std::string> vocabulary_;
  std::vector<std::vector<std::size_t>> topic_rank_;
  std::vector<std::size_t> background_rank_;
  std::vector<double> topic_cdf_;       // shared Zipf CDF over a topic block
  std::vector<double> background_cdf_;  // Zipf CDF over the whole vocabulary
  std::vector<std::pair<std::size_t, std::size_t>> owner_topics_;
  std::vector<Document> documents_;
};

// Word name for vocabulary slot i; fixed width so lexicographic = numeric.
std::string synthetic_word(std::size_t i);

}  // namespace mrsm
