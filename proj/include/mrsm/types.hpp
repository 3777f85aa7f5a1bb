#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mrsm {

using DocId = std::int64_t;
using OwnerId = std::int32_t;
using PartitionId = std::size_t;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a user asks for partitions outside their grant.
class AccessDenied : public Error {
 public:
  using Error::Error;
};

struct ScoredDoc {
  DocId doc = 0;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

// Encrypted scores carry rounding noise from the matrix transforms, so two
// scores closer than this (relative) are a tie and fall back to doc id order.
inline constexpr double kScoreTolerance = 1e-9;

bool scores_tied(double a, double b);

// Strict "a ranks ahead of b": higher score first, ties by ascending doc id.
bool ranks_before(const ScoredDoc& a, const ScoredDoc& b);

// Sorts descending by score, then reorders every run of tied scores by doc
// id. Unlike sorting with ranks_before directly this is a valid strict weak
// ordering even when ties chain across the tolerance.
void sort_ranked(std::vector<ScoredDoc>& docs);

std::vector<DocId> doc_ids(const std::vector<ScoredDoc>& docs);

// SplitMix64 finaliser; used to derive independent stage seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

Rng make_rng(std::uint64_t seed, std::uint64_t salt = 0);

std::size_t ceil_log2(std::size_t n);

}  // namespace mrsm
