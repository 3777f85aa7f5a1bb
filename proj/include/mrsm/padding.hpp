#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mrsm/weighting.hpp"

namespace mrsm {

// Pseudo-keyword noise for one partition. Each padded index gets `active`
// randomly placed non-zero pseudo entries out of `pseudo_count`.
struct NoiseModel {
  enum class Distribution { normal, uniform };
  // per_entry: each active entry has standard deviation sigma.
  // aggregate: the sum of the `active` entries has standard deviation sigma,
  // so each entry gets sigma / sqrt(active).
  enum class Scale { per_entry, aggregate };

  std::size_t pseudo_count = 0;  // U_i
  std::size_t active = 0;        // omega_i
  Distribution distribution = Distribution::normal;
  double sigma = 0.0;            // normal: standard deviation, see Scale
  Scale scale = Scale::per_entry;
  double uniform_center = 0.0;   // uniform: mu'
  double uniform_half_width = 0.0;  // uniform: delta
  std::uint64_t seed = 0;

  // U = ceil(pseudo_ratio * real_dims), omega defaults to ceil(U / 2).
  static NoiseModel for_partition(std::size_t real_dims, double pseudo_ratio,
                                  std::optional<std::size_t> active, double sigma,
                                  std::uint64_t seed);

  void validate() const;
  double entry_sigma() const;
};

struct SecureWeightedIndex {
  DocId doc = 0;
  OwnerId owner = 0;
  PartitionId partition = 0;
  std::size_t real_dims = 0;  // N_i; values.size() = N_i + U_i
  Vector values;
};

// Appends the pseudo-keyword block to one weighted index. Draws depend only
// on (model.seed, doc id), so a given document is padded identically no
// matter which batch it arrives in, and normal draws scale linearly in sigma.
SecureWeightedIndex pad_index(const WeightedIndex& index, const NoiseModel& model);

std::vector<SecureWeightedIndex> pad_partition(std::span<const WeightedIndex> indexes,
                                               const NoiseModel& model);

struct NormalApproximation {
  double mean = 0.0;
  double variance = 0.0;
};

// Sum of `summands` i.i.d. U(center - half_width, center + half_width)
// variables, as the matching normal: mean = summands * center,
// variance = summands * half_width^2 / 3.
NormalApproximation uniform_to_normal(double center, double half_width, std::size_t summands);

// Held-out accuracy of a logistic classifier trained to tell padded scores
// from unpadded ones. Features are the standardised score and its square,
// so both shifts and spread changes are learnable. 0.5 means the two
// samples are indistinguishable.
double distinguishability(std::span<const double> padded, std::span<const double> unpadded,
                          std::uint64_t seed = 7);

}  // namespace mrsm
