#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "mrsm/partitioning.hpp"
#include "mrsm/types.hpp"

namespace mrsm {

// Keyword correlativity inside one partition: cosine similarity between the
// document-incidence columns of two keywords. Symmetric, unit diagonal, all
// entries in [0, 1]; a keyword that never occurs has similarity 0 to others.
Matrix build_correlativity(std::span<const CompressedIndex> docs, std::size_t dims);

// Whitespace separated row-major reals. Rejects non-square, asymmetric or
// out-of-range input.
Matrix read_correlativity(std::istream& in, std::size_t dims);

// Average keyword popularity weights of one owner within one partition.
struct OwnerWeights {
  OwnerId owner = 0;
  Vector doc_frequency;  // |L_i(w_t)|: owner's documents containing keyword t
  Vector alpha;          // 1/|L_i(w_t)|, or 0 when the owner never uses t
  Vector akp;            // term frequency summed over those documents, times alpha
  Vector raw;            // correlativity * akp
  Vector normalized;     // raw / per-keyword max over owners, in [0, 1]
};

// One OwnerWeights per owner present in `docs`, sorted by owner id.
std::vector<OwnerWeights> compute_weights(std::span<const CompressedIndex> docs,
                                          const Matrix& correlativity);

// Per-keyword maximum raw weight over owners.
Vector max_raw_weight(std::span<const OwnerWeights> weights);

const OwnerWeights* find_owner(std::span<const OwnerWeights> weights, OwnerId owner);

struct WeightedIndex {
  DocId doc = 0;
  OwnerId owner = 0;
  PartitionId partition = 0;
  Vector values;  // bits (x) owner weights
};

WeightedIndex weight_index(const CompressedIndex& index, const Vector& weights,
                           PartitionId partition);

std::vector<WeightedIndex> weight_indexes(std::span<const CompressedIndex> indexes,
                                          std::span<const OwnerWeights> weights,
                                          PartitionId partition);

}  // namespace mrsm
