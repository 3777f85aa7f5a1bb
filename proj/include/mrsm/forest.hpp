#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "mrsm/aspe.hpp"
#include "mrsm/padding.hpp"

namespace mrsm {

// Random probe queries used to rank leaves by how likely they are to be hit.
// Keywords are drawn Zipf-weighted by their document frequency rank inside
// the partition; pseudo dimensions are never probed.
struct ProbeConfig {
  std::size_t count = 1000;  // R
  std::size_t min_terms = 1;
  std::size_t max_terms = 3;
  double zipf = 2.0;
  std::uint64_t seed = 0;
};

std::vector<Vector> sample_probes(std::span<const SecureWeightedIndex> indexes,
                                  std::size_t real_dims, std::size_t total_dims,
                                  const ProbeConfig& config);

// Scores are linear in the probe, so the accumulated score over all probes
// is the score against their sum.
Vector probe_sum(std::span<const Vector> probes, std::size_t total_dims);

// Indexes sorted by v . probe_total descending, ties by ascending doc id.
std::vector<SecureWeightedIndex> order_by_likelihood(std::vector<SecureWeightedIndex> indexes,
                                                     const Vector& probe_total);

enum class LeafOrder { likelihood, random, grouped_by_owner };

struct TreeNode {
  Vector v;
  DocId doc = -1;  // leaves only
  int left = -1;
  int right = -1;
  int parent = -1;
  std::size_t leaves = 0;
  std::size_t height = 0;  // edges to the deepest leaf
  DocId min_doc = 0;
  ScoredDoc last;  // probe key of the rightmost leaf
  bool live = false;

  bool is_leaf() const { return left < 0; }
};

struct UpdateStats {
  std::size_t touched = 0;       // nodes whose vector must be (re)encrypted
  std::vector<int> touched_ids;
  std::vector<int> freed_ids;
  bool full_rebuild = false;
};

// Balanced binary tree over one partition's padded indexes. Every internal
// node has two children and holds their elementwise max, so for any
// non-negative query it scores at least as high as every leaf below it.
// Node ids index an arena with a free list; encrypted mirrors reuse them.
class IndexTree {
 public:
  struct Leaf {
    DocId doc = 0;
    Vector values;
  };

  IndexTree() = default;
  IndexTree(PartitionId partition, Vector probe_total);

  // Leaves laid out in the given order, paired left to right level by
  // level; an odd last node moves up unpaired.
  static IndexTree build(PartitionId partition, Vector probe_total, std::vector<Leaf> ordered);

  // New leaf goes where its probe key ranks. Reshapes locally when the
  // depth bound would be exceeded and rebuilds fully once the leaf count has
  // doubled or halved since the last full build.
  UpdateStats insert(DocId doc, Vector values);
  UpdateStats erase(DocId doc);

  PartitionId partition() const { return partition_; }
  std::size_t dim() const { return static_cast<std::size_t>(probe_total_.size()); }
  const Vector& probe_total() const { return probe_total_; }
  int root() const { return root_; }
  const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t arena_size() const { return nodes_.size(); }
  std::size_t size() const { return root_ < 0 ? 0 : node(root_).leaves; }
  std::size_t height() const { return root_ < 0 ? 0 : node(root_).height; }
  std::size_t depth_bound() const { return ceil_log2(size()) + 1; }
  bool contains(DocId doc) const { return leaf_of_.contains(doc); }
  std::size_t depth(int id) const;
  std::vector<DocId> leaf_order() const;
  std::vector<int> live_ids() const;
  std::uint64_t shape_signature() const;
  ScoredDoc key_of(DocId doc, const Vector& values) const;

 private:
  int allocate();
  void release(int id);
  int make_leaf(DocId doc, Vector values);
  void refresh(int id);
  void refresh_upward(int id, UpdateStats& stats);
  void replace_child(int parent, int old_child, int new_child);
  int assemble(const std::vector<int>& leaf_ids, UpdateStats& stats);
  void collect_leaves(int id, std::vector<int>& leaves, std::vector<int>& internals) const;
  void rebuild_subtree(int id, UpdateStats& stats);
  void reshape_subtree(int id, std::size_t height, UpdateStats& stats);
  void rebuild_all(UpdateStats& stats);
  void rebalance(UpdateStats& stats);
  int first_leaf_after(const ScoredDoc& key) const;
  int predecessor(int leaf) const;

  PartitionId partition_ = 0;
  Vector probe_total_;
  std::vector<TreeNode> nodes_;
  std::vector<int> free_;
  int root_ = -1;
  std::map<DocId, int> leaf_of_;
  std::size_t built_size_ = 0;
};

struct TreeBuildOptions {
  LeafOrder order = LeafOrder::likelihood;
  ProbeConfig probes;
  std::uint64_t seed = 0;  // random leaf order
};

IndexTree build_tree(PartitionId partition, std::span<const SecureWeightedIndex> indexes,
                     const TreeBuildOptions& options);

struct Forest {
  std::vector<IndexTree> trees;  // trees[p] covers partition p
};

Forest build_forest(const std::vector<std::vector<SecureWeightedIndex>>& partitions,
                    const TreeBuildOptions& options);

struct EncryptedNode {
  EncryptedVector e;
  DocId doc = -1;
  int left = -1;
  int right = -1;
  DocId min_doc = 0;
  bool live = false;

  bool is_leaf() const { return left < 0; }
};

// Node-for-node encrypted copy of an IndexTree. Holds no key material and
// no plaintext vectors.
class EncryptedTree {
 public:
  EncryptedTree() = default;

  static EncryptedTree encrypt(const IndexTree& tree, const PartitionKey& key, Rng& rng);

  // Mirrors the plaintext shape and re-encrypts only the updated nodes.
  void apply(const IndexTree& tree, const UpdateStats& stats, const PartitionKey& key, Rng& rng);

  PartitionId partition() const { return partition_; }
  std::size_t dim() const { return dim_; }
  int root() const { return root_; }
  const EncryptedNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const;
  std::uint64_t shape_signature() const;

  void write(std::ostream& out) const;
  static EncryptedTree read(std::istream& in);

 private:
  void encrypt_nodes(const IndexTree& tree, const std::vector<int>& ids, const PartitionKey& key,
                     Rng& rng);

  PartitionId partition_ = 0;
  std::size_t dim_ = 0;
  int root_ = -1;
  std::vector<EncryptedNode> nodes_;
};

struct EncryptedForest {
  std::vector<EncryptedTree> trees;
};

EncryptedForest encrypt_forest(const Forest& forest, const SecretKey& key, std::uint64_t seed);

// Versioned binary file: per tree a preorder shape walk with node ciphertexts.
void write_forest(std::ostream& out, const EncryptedForest& forest);
EncryptedForest read_forest(std::istream& in);

// per_tree keeps ceil(k/t) candidates in each searched tree; full keeps k,
// which makes the merged result exact.
enum class QuotaPolicy { per_tree, full };

struct TreeSearch {
  std::vector<ScoredDoc> candidates;  // ranked, at most quota
  std::size_t visited = 0;            // node scores computed
  std::vector<int> pruned;            // roots of skipped subtrees
};

TreeSearch gdfs_tree(const IndexTree& tree, const Vector& query, std::size_t quota,
                     bool record_pruned = false);
TreeSearch gdfs_tree(const EncryptedTree& tree, const Trapdoor& trapdoor, std::size_t quota,
                     bool record_pruned = false);

struct SearchOutput {
  std::vector<ScoredDoc> results;
  std::vector<std::size_t> visited;  // per searched tree, in request order

  std::size_t total_visited() const;
};

std::size_t candidate_quota(std::size_t k, std::size_t t, QuotaPolicy policy);

SearchOutput gdfs_search(const EncryptedForest& forest,
                         std::span<const std::pair<PartitionId, Trapdoor>> trapdoors,
                         std::size_t k, QuotaPolicy policy = QuotaPolicy::per_tree);
SearchOutput gdfs_search(const Forest& forest,
                         std::span<const std::pair<PartitionId, Vector>> queries, std::size_t k,
                         QuotaPolicy policy = QuotaPolicy::per_tree);

}  // namespace mrsm
