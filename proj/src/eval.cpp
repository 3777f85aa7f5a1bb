#include "mrsm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>

namespace mrsm {

std::vector<DocId> exact_top_k(std::span<const ScoredDoc> ranking, std::size_t k) {
  std::vector<DocId> out;
  if (k == 0 || ranking.empty()) return out;
  const std::size_t last = std::min(k, ranking.size()) - 1;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (i > last && !scores_tied(ranking[i].score, ranking[last].score)) break;
    out.push_back(ranking[i].doc);
  }
  return out;
}

double precision(std::span<const DocId> retrieved, std::span<const DocId> exact, std::size_t k) {
  if (k == 0) throw Error("precision needs k >= 1");
  const std::set<DocId> truth(exact.begin(), exact.end());
  std::set<DocId> hits;
  for (auto d : retrieved) {
    if (truth.contains(d)) hits.insert(d);
  }
  return static_cast<double>(hits.size()) / static_cast<double>(k);
}

double rank_privacy(std::span<const DocId> retrieved, std::span<const DocId> exact_ranking,
                    std::size_t k) {
  if (k == 0) throw Error("rank privacy needs k >= 1");
  std::unordered_map<DocId, std::size_t> rank;
  for (std::size_t i = 0; i < exact_ranking.size(); ++i) rank.emplace(exact_ranking[i], i + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    const auto it = rank.find(retrieved[i]);
    double shift = static_cast<double>(k);
    if (it != rank.end()) {
      const double d = std::abs(static_cast<double>(i + 1) - static_cast<double>(it->second));
      shift = std::min(d, shift);
    }
    total += shift;
  }
  return total / (static_cast<double>(k) * static_cast<double>(k));
}

double equilibrium_score(double x, double y) { return x * x / 95.0 + y * y / 80.0; }

double efficiency_ratio(double documents, double partitions) {
  if (!(partitions >= 1.0) || !(partitions < documents)) {
    throw Error("efficiency ratio needs 1 <= s < N");
  }
  const double log_n = std::log2(documents);
  return partitions * log_n / (log_n - std::log2(partitions));
}

double storage_ratio(double documents, double partitions) {
  if (!(partitions >= 1.0) || !(partitions <= documents)) {
    throw Error("storage ratio needs 1 <= s <= N");
  }
  return (documents - 0.5) / (documents / partitions - 0.5);
}

std::vector<KeywordQuery> sample_workload(const Pipeline& pipeline, std::size_t count,
                                          std::size_t min_terms, std::size_t max_terms,
                                          double zipf, std::uint64_t seed) {
  if (min_terms == 0 || max_terms < min_terms) throw Error("need 1 <= min_terms <= max_terms");
  const std::size_t s = pipeline.partitions.size();
  std::vector<double> sizes;
  std::vector<std::vector<std::size_t>> ranked(s);
  std::vector<std::discrete_distribution<std::size_t>> pick(s);
  for (PartitionId p = 0; p < s; ++p) {
    const auto& part = pipeline.partitions[p];
    std::vector<std::size_t> df(part.words.size(), 0);
    for (const auto& c : part.indexes) {
      for (std::size_t d = 0; d < df.size(); ++d) df[d] += c.bits[d];
    }
    for (std::size_t d = 0; d < df.size(); ++d) {
      if (df[d] > 0) ranked[p].push_back(d);
    }
    std::stable_sort(ranked[p].begin(), ranked[p].end(),
                     [&](std::size_t a, std::size_t b) { return df[a] > df[b]; });
    std::vector<double> w;
    for (std::size_t r = 0; r < ranked[p].size(); ++r) {
      w.push_back(std::pow(static_cast<double>(r + 1), -zipf));
    }
    pick[p] = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    sizes.push_back(ranked[p].empty() ? 0.0 : static_cast<double>(part.indexes.size()));
  }
  if (std::all_of(sizes.begin(), sizes.end(), [](double x) { return x == 0.0; })) {
    throw Error("no indexed keywords to query");
  }
  Rng rng = make_rng(seed, 0x5a0);
  std::discrete_distribution<std::size_t> partition(sizes.begin(), sizes.end());
  std::uniform_int_distribution<std::size_t> terms(min_terms, max_terms);
  std::vector<KeywordQuery> out;
  for (std::size_t i = 0; i < count; ++i) {
    const PartitionId p = partition(rng);
    const std::size_t want = std::min(terms(rng), ranked[p].size());
    std::set<std::size_t> chosen;
    while (chosen.size() < want) chosen.insert(ranked[p][pick[p](rng)]);
    std::vector<std::string> words;
    for (auto d : chosen) words.push_back(pipeline.partitions[p].words[d]);
    out.push_back(KeywordQuery::of(words));
  }
  return out;
}

VisitStats summarize(std::string variant, std::span<const std::size_t> visited,
                     std::span<const double> micros) {
  VisitStats s;
  s.variant = std::move(variant);
  s.queries = visited.size();
  if (visited.empty()) return s;
  const double n = static_cast<double>(visited.size());
  for (auto v : visited) {
    s.total_visited += v;
    s.mean_visited += static_cast<double>(v);
  }
  s.mean_visited /= n;
  for (auto v : visited) {
    const double d = static_cast<double>(v) - s.mean_visited;
    s.var_visited += d * d;
  }
  s.var_visited /= n;
  if (!micros.empty()) {
    for (auto t : micros) s.mean_micros += t;
    s.mean_micros /= static_cast<double>(micros.size());
    for (auto t : micros) s.var_micros += (t - s.mean_micros) * (t - s.mean_micros);
    s.var_micros /= static_cast<double>(micros.size());
  }
  return s;
}

namespace {

constexpr std::uint64_t kBenchQuerySalt = 0xbe00;

struct Timed {
  std::vector<std::size_t> visited;
  std::vector<double> micros;
};

Timed run_queries(const Pipeline& pipeline, std::span<const KeywordQuery> queries, std::size_t k,
                  bool all_partitions) {
  Timed out;
  std::vector<PartitionId> every;
  if (all_partitions) {
    for (PartitionId p = 0; p < pipeline.partitions.size(); ++p) every.push_back(p);
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    Rng rng = make_rng(pipeline.config.seed, kBenchQuerySalt + i);
    const auto plan = plan_query(pipeline, queries[i], every, std::nullopt, rng);
    const auto start = std::chrono::steady_clock::now();
    const auto result = search_plain(pipeline, plan, k);
    const auto stop = std::chrono::steady_clock::now();
    out.visited.push_back(result.total_visited());
    out.micros.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
  }
  return out;
}

}  // namespace

std::vector<VisitStats> bench_tree_orders(std::span<const Document> corpus, PipelineConfig config,
                                          std::span<const KeywordQuery> queries, std::size_t k) {
  config.partitions = 1;
  config.encrypt = false;
  config.leaf_order = LeafOrder::likelihood;
  Pipeline pipeline = build_pipeline(corpus, config);

  std::vector<VisitStats> out;
  const std::pair<const char*, LeafOrder> variants[] = {{"random", LeafOrder::random},
                                                        {"grouped_by_owner", LeafOrder::grouped_by_owner},
                                                        {"mlsb", LeafOrder::likelihood}};
  for (const auto& [name, order] : variants) {
    Pipeline variant = pipeline;
    variant.config.leaf_order = order;
    variant.forest = build_forest(variant.secure, tree_options(variant.config));
    const auto timed = run_queries(variant, queries, k, true);
    out.push_back(summarize(name, timed.visited, timed.micros));
  }
  return out;
}

std::vector<ScalingRow> bench_forest_vs_tree(std::span<const Document> corpus,
                                             const PipelineConfig& config,
                                             std::span<const KeywordQuery> queries,
                                             std::size_t k) {
  PipelineConfig forest_config = config;
  forest_config.encrypt = false;
  forest_config.leaf_order = LeafOrder::likelihood;
  PipelineConfig tree_config = forest_config;
  tree_config.partitions = 1;

  std::vector<ScalingRow> rows;
  for (const auto* cfg : {&tree_config, &forest_config}) {
    const Pipeline pipeline = build_pipeline(corpus, *cfg);
    const auto timed = run_queries(pipeline, queries, k, false);
    ScalingRow row;
    row.documents = pipeline.documents();
    row.dictionary = pipeline.dictionary.size();
    row.partitions = pipeline.partitions.size();
    row.stats = summarize(cfg == &tree_config ? "single_tree" : "forest", timed.visited,
                          timed.micros);
    rows.push_back(std::move(row));
  }
  return rows;
}

UpdateReport bench_update(std::span<const Document> corpus, const PipelineConfig& config,
                          std::span<const Document> inserts) {
  PipelineConfig forest_config = config;
  forest_config.encrypt = false;
  PipelineConfig tree_config = forest_config;
  tree_config.partitions = 1;
  Pipeline forest = build_pipeline(corpus, forest_config);
  Pipeline single = build_pipeline(corpus, tree_config);

  UpdateReport report;
  report.documents = forest.documents();
  report.partitions = forest.partitions.size();
  report.inserts = inserts.size();
  for (const auto& doc : inserts) {
    std::vector<std::uint64_t> before;
    for (const auto& t : forest.forest.trees) before.push_back(t.shape_signature());
    const auto f = insert_document(forest, doc);
    std::size_t changed = 0;
    for (std::size_t p = 0; p < before.size(); ++p) {
      changed += forest.forest.trees[p].shape_signature() != before[p] ? 1 : 0;
    }
    report.max_trees_touched = std::max(report.max_trees_touched, changed);
    report.max_touched_forest = std::max(report.max_touched_forest, f.stats.touched);
    report.full_rebuilds += f.stats.full_rebuild ? 1 : 0;
    report.mean_touched_forest += static_cast<double>(f.stats.touched);
    report.mean_touched_single += static_cast<double>(insert_document(single, doc).stats.touched);
  }
  if (!inserts.empty()) {
    report.mean_touched_forest /= static_cast<double>(inserts.size());
    report.mean_touched_single /= static_cast<double>(inserts.size());
    report.measured_ratio = report.mean_touched_forest / report.mean_touched_single;
  }
  const double n = static_cast<double>(report.documents);
  const double s = static_cast<double>(report.partitions);
  report.per_update_theory = std::log2(n / s) / std::log2(n);
  report.amortized_theory = report.per_update_theory / s;
  return report;
}

void write_tree_speed_csv(std::ostream& out, std::span<const VisitStats> rows) {
  out << "variant,queries,mean_visited,var_visited,total_visited,mean_us,var_us\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.queries << ',' << r.mean_visited << ',' << r.var_visited << ','
        << r.total_visited << ',' << r.mean_micros << ',' << r.var_micros << '\n';
  }
}

void write_scaling_csv(std::ostream& out, std::span<const ScalingRow> rows) {
  out << "documents,dictionary,partitions,variant,queries,mean_visited,var_visited,total_visited,"
         "mean_us,var_us\n";
  for (const auto& r : rows) {
    out << r.documents << ',' << r.dictionary << ',' << r.partitions << ',' << r.stats.variant
        << ',' << r.stats.queries << ',' << r.stats.mean_visited << ',' << r.stats.var_visited
        << ',' << r.stats.total_visited << ',' << r.stats.mean_micros << ','
        << r.stats.var_micros << '\n';
  }
}

void write_update_csv(std::ostream& out, std::span<const UpdateReport> rows) {
  out << "documents,partitions,inserts,mean_touched_forest,mean_touched_single,"
         "max_touched_forest,max_trees_touched,full_rebuilds,measured_ratio,"
         "per_update_theory,amortized_theory\n";
  for (const auto& r : rows) {
    out << r.documents << ',' << r.partitions << ',' << r.inserts << ',' << r.mean_touched_forest
        << ',' << r.mean_touched_single << ',' << r.max_touched_forest << ','
        << r.max_trees_touched << ',' << r.full_rebuilds << ',' << r.measured_ratio << ','
        << r.per_update_theory << ',' << r.amortized_theory << '\n';
  }
}

}  // namespace mrsm
