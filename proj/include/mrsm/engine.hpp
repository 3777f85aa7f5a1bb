#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mrsm/aspe.hpp"
#include "mrsm/corpus.hpp"
#include "mrsm/forest.hpp"
#include "mrsm/padding.hpp"
#include "mrsm/partitioning.hpp"
#include "mrsm/weighting.hpp"

namespace mrsm {

struct PipelineConfig {
  std::size_t partitions = 0;          // s; 0 picks default_partition_count(n)
  double pseudo_ratio = 0.1;           // U_i = ceil(ratio * N_i)
  std::optional<std::size_t> omega;    // default ceil(U_i / 2)
  double sigma = 0.05;
  NoiseModel::Scale sigma_scale = NoiseModel::Scale::aggregate;
  ProbeConfig probes;
  LeafOrder leaf_order = LeafOrder::likelihood;
  std::uint64_t seed = 1;
  KeyOptions key_options;
  bool encrypt = true;  // false skips keygen and the encrypted forest
};

// Every intermediate artifact of one build, owned by the trusted proxy.
struct Pipeline {
  PipelineConfig config;
  KeywordDictionary dictionary;
  PartitionSet partitions;
  std::vector<Matrix> correlativity;                 // per partition
  std::vector<std::vector<OwnerWeights>> weights;    // per partition, by owner
  std::vector<Vector> max_raw;                       // per partition
  std::vector<std::vector<WeightedIndex>> weighted;  // per partition, by doc
  std::vector<NoiseModel> noise;
  std::vector<std::vector<SecureWeightedIndex>> secure;
  Forest forest;
  SecretKey key;
  EncryptedForest encrypted;
  std::uint64_t updates = 0;  // salts the encryption randomness of updates

  std::size_t real_dims(PartitionId p) const { return partitions[p].words.size(); }
  std::size_t total_dims(PartitionId p) const { return real_dims(p) + noise.at(p).pseudo_count; }
  std::size_t documents() const { return partitions.assignments().size(); }
};

// Tree options derived from the pipeline seed.
TreeBuildOptions tree_options(const PipelineConfig& config);

Pipeline build_pipeline(std::span<const Document> corpus, const PipelineConfig& config);

// Same partitions, weights and keys; indexes re-padded with a new sigma and
// the forest rebuilt and re-encrypted.
Pipeline with_sigma(const Pipeline& base, double sigma);

// Query vectors the proxy builds before encryption.
struct QueryPlan {
  std::vector<PartitionId> partitions;
  std::vector<std::pair<PartitionId, Vector>> vectors;  // real weights, then alpha entries
};

// Unknown keywords contribute nothing. Without an explicit partition list
// the proxy picks the partitions that hold a query keyword, keeping the `t`
// with the largest query weight when t is given. Pseudo entries are drawn
// i.i.d. from U[0,1] per query.
QueryPlan plan_query(const Pipeline& pipeline, const KeywordQuery& query,
                     std::span<const PartitionId> explicit_partitions,
                     std::optional<std::size_t> t, Rng& rng);

// Query weights restricted to real keywords, one vector per partition.
std::vector<std::pair<PartitionId, Vector>> real_query_vectors(const Pipeline& pipeline,
                                                               const KeywordQuery& query);

// Every indexed document scored against the unpadded weighted indexes,
// ranked (ties by doc id). This is the ground-truth ranking.
std::vector<ScoredDoc> exact_ranking(const Pipeline& pipeline, const KeywordQuery& query);

SearchOutput search_plain(const Pipeline& pipeline, const QueryPlan& plan, std::size_t k,
                          QuotaPolicy policy = QuotaPolicy::per_tree);

std::vector<std::pair<PartitionId, Trapdoor>> make_trapdoors(const Pipeline& pipeline,
                                                             const QueryPlan& plan, Rng& rng);

SearchOutput search_encrypted(const Pipeline& pipeline, const QueryPlan& plan, std::size_t k,
                              Rng& rng, QuotaPolicy policy = QuotaPolicy::per_tree);

struct InsertOutcome {
  PartitionId partition = 0;
  UpdateStats stats;
  std::size_t ignored_terms = 0;  // terms outside every sub-dictionary
};

// The document joins the partition holding most of its term occurrences.
// Weights are the owner's existing ones in that partition; a new owner gets
// correlativity * tf scaled by the partition maxima and capped at 1. The
// encrypted tree (when present) is updated in place for touched nodes only.
InsertOutcome insert_document(Pipeline& pipeline, const Document& doc);

struct RemoveOutcome {
  PartitionId partition = 0;
  UpdateStats stats;
};

RemoveOutcome remove_document(Pipeline& pipeline, DocId doc);

// Adds new keywords to one sub-dictionary, replaces that partition's key
// with a fresh (V_i + Z_i)-dimensional one and re-encrypts its tree.
// New keywords weigh 1 for every owner.
void extend_keywords(Pipeline& pipeline, PartitionId p, const std::vector<std::string>& words);

struct UserGrant {
  std::string user;
  std::set<std::string> attributes;
  std::set<PartitionId> partitions;
};

// Partitions whose required attributes are all held by the user.
UserGrant grant_by_attributes(const std::string& user, std::set<std::string> attributes,
                              const std::map<PartitionId, std::set<std::string>>& policy,
                              std::size_t partition_count);

// Allow iff every requested partition is granted.
bool authorize(const UserGrant& grant, std::span<const PartitionId> requested);

struct SearchRequest {
  KeywordQuery keywords;
  std::size_t k = 10;
  std::optional<std::size_t> t;
  std::vector<PartitionId> partitions;  // empty: proxy chooses
  QuotaPolicy policy = QuotaPolicy::per_tree;
};

struct SearchResult {
  std::vector<ScoredDoc> results;
  std::vector<PartitionId> partitions;
  std::vector<std::size_t> visited;
  double seconds = 0.0;

  std::size_t total_visited() const;
};

// Stores the encrypted forest and answers trapdoor searches. Sees no key
// material and no plaintext vectors.
class CloudServer {
 public:
  CloudServer() = default;
  explicit CloudServer(EncryptedForest forest) : forest_(std::move(forest)) {}

  SearchOutput search(std::span<const std::pair<PartitionId, Trapdoor>> trapdoors, std::size_t k,
                      QuotaPolicy policy) const;
  const EncryptedTree& tree(PartitionId p) const { return forest_.trees.at(p); }
  void replace_tree(PartitionId p, EncryptedTree tree);
  const EncryptedForest& forest() const { return forest_; }

 private:
  EncryptedForest forest_;
};

// Data owners submit documents through the proxy, which holds keys and
// plaintext state; users query through attribute-checked grants.
class SearchEngine {
 public:
  explicit SearchEngine(Pipeline pipeline);

  void register_user(UserGrant grant);
  SearchResult query(const SearchRequest& request, const std::string& user);

  InsertOutcome insert(const Document& doc);
  RemoveOutcome remove(DocId doc);
  void extend(PartitionId p, const std::vector<std::string>& words);

  const Pipeline& pipeline() const { return pipeline_; }
  const CloudServer& server() const { return server_; }

 private:
  void push_tree(PartitionId p, const UpdateStats& stats);

  Pipeline pipeline_;
  CloudServer server_;
  std::map<std::string, UserGrant> grants_;
  std::uint64_t queries_ = 0;
};

}  // namespace mrsm
