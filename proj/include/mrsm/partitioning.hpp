#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrsm/corpus.hpp"

namespace mrsm {

// One of the two clusters an owner's indexes are split into.
struct InitialPartition {
  OwnerId owner = 0;
  std::vector<DocId> members;
  std::vector<double> representative;  // mean of the members' bits
};

// Splits one owner's index vectors into at most two clusters.
using LocalSplitter = std::function<std::vector<InitialPartition>(std::span<const BinaryIndex>)>;

// 2-means under L1 distance with component-wise median centres. Seeds are
// the first vector and the vector farthest from it; ties go to the first
// cluster; an empty second cluster is dropped.
std::vector<InitialPartition> local_split(std::span<const BinaryIndex> owner_indexes);

struct GlobalClustering {
  std::vector<PartitionId> initial_to_partition;
  std::vector<std::vector<double>> centroids;
  double objective = 0.0;  // member-weighted sum of L1 distances representative -> centroid
};

// k-medians (L1 k-means with median centroids) over the representatives,
// each weighted by its member count. k-means++ seeding, best of several
// seeded restarts, at most 100 rounds.
GlobalClustering global_cluster(std::span<const InitialPartition> initials, std::size_t s,
                                std::uint64_t seed);

// A document's binary index restricted to its partition's sub-dictionary.
struct CompressedIndex {
  DocId doc = 0;
  OwnerId owner = 0;
  std::vector<std::uint8_t> bits;
  std::vector<std::uint32_t> counts;
};

struct Partition {
  std::vector<std::string> words;         // sub-dictionary, local dimension order
  std::vector<CompressedIndex> indexes;   // members, ascending doc id
};

struct KeywordHome {
  PartitionId partition = 0;
  std::size_t dim = 0;
};

class PartitionSet {
 public:
  PartitionSet() = default;
  PartitionSet(std::vector<Partition> partitions, std::map<DocId, PartitionId> assignments);

  std::size_t size() const { return partitions_.size(); }
  const Partition& operator[](PartitionId p) const { return partitions_.at(p); }
  Partition& operator[](PartitionId p) { return partitions_.at(p); }
  const std::vector<Partition>& partitions() const { return partitions_; }
  const std::map<DocId, PartitionId>& assignments() const { return assignments_; }

  std::optional<KeywordHome> home(std::string_view word) const;
  std::optional<PartitionId> partition_of(DocId doc) const;

  // Appends new words to a sub-dictionary; existing member indexes get zero
  // columns. Returns the first new local dimension.
  std::size_t add_keywords(PartitionId p, const std::vector<std::string>& words);
  void add_member(PartitionId p, CompressedIndex index);
  void remove_member(DocId doc);

 private:
  void rebuild_homes();

  std::vector<Partition> partitions_;
  std::map<DocId, PartitionId> assignments_;
  std::map<std::string, KeywordHome, std::less<>> homes_;
};

// Assigns each keyword to the partition where its document frequency is
// highest (ties to the lowest id) and compresses every index to its
// partition's sub-dictionary. Keywords never used are dropped.
PartitionSet segment_dictionary(const std::map<DocId, PartitionId>& assignments,
                                std::span<const BinaryIndex> indexes,
                                const KeywordDictionary& dict, std::size_t s);

// Local split per owner, global clustering, then segmentation.
PartitionSet cluster_indexes(std::span<const BinaryIndex> indexes, const KeywordDictionary& dict,
                             std::size_t s, std::uint64_t seed,
                             const LocalSplitter& splitter = local_split);

// ceil(n / 1000): sub-dictionaries of roughly a thousand keywords.
std::size_t default_partition_count(std::size_t dictionary_size);

// Compressed index scattered back to the full dictionary, zero elsewhere.
std::vector<std::uint8_t> scatter(const CompressedIndex& index, const Partition& partition,
                                  const KeywordDictionary& dict);

CompressedIndex compress(const BinaryIndex& index, const Partition& partition,
                         const KeywordDictionary& dict);

// Text record file: header, assignments table, then one sub-dictionary per
// partition. Compressed indexes are rebuilt from the binary indexes on load.
void write_partitions(std::ostream& out, const PartitionSet& set);
PartitionSet read_partitions(std::istream& in, std::span<const BinaryIndex> indexes,
                             const KeywordDictionary& dict);

}  // namespace mrsm
