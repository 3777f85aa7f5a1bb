#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mrsm/engine.hpp"

namespace mrsm {

// Documents ranked at or above the k-th exact score (tied scores included,
// so the set can exceed k).
std::vector<DocId> exact_top_k(std::span<const ScoredDoc> ranking, std::size_t k);

// |retrieved intersect exact| / k.
double precision(std::span<const DocId> retrieved, std::span<const DocId> exact, std::size_t k);

// sum_i |i - r_i| / k^2, r_i the exact rank of the i-th retrieved document.
// A displacement is capped at k; a document absent from the exact ranking
// counts k.
double rank_privacy(std::span<const DocId> retrieved, std::span<const DocId> exact_ranking,
                    std::size_t k);

// x^2/95 + y^2/80 with x, y in percent.
double equilibrium_score(double x, double y);

// s log N / (log N - log s). Requires 1 <= s < N.
double efficiency_ratio(double documents, double partitions);

// (N - 1/2) / (N/s - 1/2): node storage of one tree over N leaves against a
// tree over N/s leaves. Requires 1 <= s <= N.
double storage_ratio(double documents, double partitions);

// Query workload over an arbitrary built corpus: a partition chosen in
// proportion to its document count, then min_terms..max_terms distinct
// keywords drawn Zipf-weighted by document frequency rank inside it.
std::vector<KeywordQuery> sample_workload(const Pipeline& pipeline, std::size_t count,
                                          std::size_t min_terms, std::size_t max_terms,
                                          double zipf, std::uint64_t seed);

struct VisitStats {
  std::string variant;
  std::size_t queries = 0;
  double mean_visited = 0.0;
  double var_visited = 0.0;   // population variance
  double mean_micros = 0.0;
  double var_micros = 0.0;
  std::size_t total_visited = 0;
};

VisitStats summarize(std::string variant, std::span<const std::size_t> visited,
                     std::span<const double> micros);

// Single tree over all documents (s = 1) with random, owner-grouped and
// likelihood leaf orders. All variants see identical query vectors.
std::vector<VisitStats> bench_tree_orders(std::span<const Document> corpus, PipelineConfig config,
                                          std::span<const KeywordQuery> queries, std::size_t k);

struct ScalingRow {
  std::size_t documents = 0;
  std::size_t dictionary = 0;
  std::size_t partitions = 0;
  VisitStats stats;
};

// Forest (config.partitions trees, proxy-chosen partitions, ceil(k/t)
// quota) against one likelihood-ordered tree over the same corpus.
std::vector<ScalingRow> bench_forest_vs_tree(std::span<const Document> corpus,
                                             const PipelineConfig& config,
                                             std::span<const KeywordQuery> queries,
                                             std::size_t k);

struct UpdateReport {
  std::size_t documents = 0;
  std::size_t partitions = 0;
  std::size_t inserts = 0;
  double mean_touched_forest = 0.0;
  double mean_touched_single = 0.0;
  std::size_t max_touched_forest = 0;
  std::size_t max_trees_touched = 0;  // per insert, forest
  std::size_t full_rebuilds = 0;
  double measured_ratio = 0.0;        // forest / single tree
  double per_update_theory = 0.0;     // log(N/s) / log N
  double amortized_theory = 0.0;      // (2/s) log(N/s) / (2 log N)
};

UpdateReport bench_update(std::span<const Document> corpus, const PipelineConfig& config,
                          std::span<const Document> inserts);

void write_tree_speed_csv(std::ostream& out, std::span<const VisitStats> rows);
void write_scaling_csv(std::ostream& out, std::span<const ScalingRow> rows);
void write_update_csv(std::ostream& out, std::span<const UpdateReport> rows);

}  // namespace mrsm
