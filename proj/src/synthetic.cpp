#include "mrsm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace mrsm {
namespace {

std::vector<double> zipf_cdf(std::size_t n, double exponent) {
  std::vector<double> cdf(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    cdf[r] = total;
  }
  for (auto& c : cdf) c /= total;
  return cdf;
}

std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<std::size_t>(it - cdf.begin());
}

}  // namespace

std::string synthetic_word(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "kw%06zu", i);
  return buf;
}

SyntheticCorpus::SyntheticCorpus(SyntheticCorpusConfig config) : config_(config) {
  if (config_.documents == 0 || config_.vocabulary == 0 || config_.owners == 0 ||
      config_.topics == 0) {
    throw Error("synthetic corpus sizes must be positive");
  }
  if (config_.topics > config_.vocabulary) throw Error("more topics than vocabulary words");
  Rng rng = make_rng(config_.seed, 1);

  vocabulary_.reserve(config_.vocabulary);
  for (std::size_t i = 0; i < config_.vocabulary; ++i) vocabulary_.push_back(synthetic_word(i));

  const std::size_t block = config_.vocabulary / config_.topics;
  topic_rank_.resize(config_.topics);
  for (std::size_t t = 0; t < config_.topics; ++t) {
    const std::size_t begin = t * block;
    const std::size_t end = (t + 1 == config_.topics) ? config_.vocabulary : begin + block;
    auto& rank = topic_rank_[t];
    rank.resize(end - begin);
    std::iota(rank.begin(), rank.end(), begin);
    std::shuffle(rank.begin(), rank.end(), rng);
  }
  background_rank_.resize(config_.vocabulary);
  std::iota(background_rank_.begin(), background_rank_.end(), 0);
  std::shuffle(background_rank_.begin(), background_rank_.end(), rng);

  topic_cdf_ = zipf_cdf(block, config_.zipf_exponent);
  background_cdf_ = zipf_cdf(config_.vocabulary, config_.zipf_exponent);

  owner_topics_.resize(config_.owners);
  for (std::size_t o = 0; o < config_.owners; ++o) {
    const std::size_t primary = o % config_.topics;
    std::size_t secondary = primary;
    if (config_.topics > 1) {
      secondary = (primary + 1 +
                   std::uniform_int_distribution<std::size_t>(0, config_.topics - 2)(rng)) %
                  config_.topics;
    }
    owner_topics_[o] = {primary, secondary};
  }

  documents_ = sample_documents(config_.documents, 1, config_.seed);

  if (config_.cover_vocabulary) {
    std::vector<bool> used(config_.vocabulary, false);
    for (const auto& d : documents_) {
      for (const auto& [term, count] : d.terms) used[std::stoul(term.substr(2))] = true;
    }
    std::vector<std::vector<std::size_t>> docs_by_topic(config_.topics);
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      const auto owner_slot = static_cast<std::size_t>(documents_[i].owner - 1);
      docs_by_topic[owner_topics_[owner_slot].first].push_back(i);
    }
    Rng fill = make_rng(config_.seed, 2);
    for (std::size_t w = 0; w < config_.vocabulary; ++w) {
      if (used[w]) continue;
      const auto& pool = docs_by_topic[topic_of_word(w)];
      std::size_t target;
      if (!pool.empty()) {
        target = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(fill)];
      } else {
        target = std::uniform_int_distribution<std::size_t>(0, documents_.size() - 1)(fill);
      }
      ++documents_[target].terms[vocabulary_[w]];
    }
  }
}

std::size_t SyntheticCorpus::topic_of_word(std::size_t word) const {
  const std::size_t block = config_.vocabulary / config_.topics;
  return std::min(word / block, config_.topics - 1);
}

std::size_t SyntheticCorpus::draw_topic_word(std::size_t topic, Rng& rng) const {
  const auto& rank = topic_rank_[topic];
  std::size_t r = draw(topic_cdf_, rng);
  if (r >= rank.size()) r = rank.size() - 1;
  return rank[r];
}

Document SyntheticCorpus::sample_document(DocId id, Rng& rng) const {
  Document doc;
  doc.id = id;
  const auto owner_slot =
      std::uniform_int_distribution<std::size_t>(0, config_.owners - 1)(rng);
  doc.owner = static_cast<OwnerId>(owner_slot + 1);
  const auto [primary, secondary] = owner_topics_[owner_slot];
  std::bernoulli_distribution second(config_.secondary_topic_share);
  const std::size_t topic = second(rng) ? secondary : primary;
  const std::size_t lo = std::max<std::size_t>(1, config_.mean_terms / 2);
  const std::size_t hi = std::max(lo, config_.mean_terms + config_.mean_terms / 2);
  const std::size_t length = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  std::bernoulli_distribution background(config_.background_share);
  for (std::size_t i = 0; i < length; ++i) {
    std::size_t w;
    if (background(rng)) {
      w = background_rank_[draw(background_cdf_, rng)];
    } else {
      w = draw_topic_word(topic, rng);
    }
    ++doc.terms[vocabulary_[w]];
  }
  return doc;
}

std::vector<Document> SyntheticCorpus::sample_documents(std::size_t count, DocId first_id,
                                                        std::uint64_t seed) const {
  Rng rng = make_rng(seed, 3);
  std::vector<Document> docs;
  docs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    docs.push_back(sample_document(first_id + static_cast<DocId>(i), rng));
  }
  return docs;
}

std::vector<KeywordQuery> SyntheticCorpus::sample_queries(std::size_t count, std::size_t min_terms,
                                                          std::size_t max_terms,
                                                          std::uint64_t seed) const {
  if (min_terms == 0 || max_terms < min_terms) throw Error("bad query term range");
  Rng rng = make_rng(seed, 4);
  std::vector<KeywordQuery> out;
  out.reserve(count);
  for (std::size_t q = 0; q < count; ++q) {
    const auto topic = std::uniform_int_distribution<std::size_t>(0, config_.topics - 1)(rng);
    const auto want = std::uniform_int_distribution<std::size_t>(min_terms, max_terms)(rng);
    std::set<std::size_t> words;
    std::size_t guard = 0;
    while (words.size() < want && guard++ < 64 * want) words.insert(draw_topic_word(topic, rng));
    std::vector<std::string> names;
    for (auto w : words) names.push_back(vocabulary_[w]);
    out.push_back(KeywordQuery::of(names));
  }
  return out;
}

}  // namespace mrsm
