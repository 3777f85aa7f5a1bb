#include "mrsm/types.hpp"

#include <algorithm>
#include <cmath>

namespace mrsm {

bool scores_tied(double a, double b) {
  return std::abs(a - b) <= kScoreTolerance * (1.0 + std::max(std::abs(a), std::abs(b)));
}

bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (scores_tied(a.score, b.score)) return a.doc < b.doc;
  return a.score > b.score;
}

void sort_ranked(std::vector<ScoredDoc>& docs) {
  std::sort(docs.begin(), docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
  });
  std::size_t i = 0;
  while (i < docs.size()) {
    std::size_t j = i;
    while (j + 1 < docs.size() && scores_tied(docs[j].score, docs[j + 1].score)) ++j;
    if (j > i) {
      std::sort(docs.begin() + static_cast<std::ptrdiff_t>(i),
                docs.begin() + static_cast<std::ptrdiff_t>(j + 1),
                [](const ScoredDoc& a, const ScoredDoc& b) { return a.doc < b.doc; });
    }
    i = j + 1;
  }
}

std::vector<DocId> doc_ids(const std::vector<ScoredDoc>& docs) {
  std::vector<DocId> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.doc);
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng make_rng(std::uint64_t seed, std::uint64_t salt) { return Rng(mix_seed(seed, salt)); }

std::size_t ceil_log2(std::size_t n) {
  std::size_t bits = 0;
  std::size_t value = 1;
  while (value < n) {
    value <<= 1;
    ++bits;
  }
  return bits;
}

}  // namespace mrsm
