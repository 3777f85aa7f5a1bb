#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "mrsm/engine.hpp"

namespace mrsm {

struct EquilibriumRow {
  double sigma = 0.0;
  double precision = 0.0;     // mean P_k
  double rank_privacy = 0.0;  // mean P'_k
  double f = 0.0;             // equilibrium_score(100 P_k, 100 P'_k)
  double discriminator_accuracy = 0.0;
};

struct EquilibriumReport {
  std::vector<EquilibriumRow> rows;
  std::size_t best = 0;

  const EquilibriumRow& optimum() const { return rows.at(best); }
};

struct EquilibriumConfig {
  std::vector<double> grid;
  std::size_t k = 100;
  std::uint64_t seed = 11;
};

// "lo:hi:step", inclusive of hi up to rounding.
std::vector<double> parse_grid(std::string_view text);

// First index of the largest f.
std::size_t argmax_f(std::span<const EquilibriumRow> rows);

// For every sigma: re-pad, rebuild and re-encrypt with the base keys, search
// every partition with a k-candidate quota, and score the results against
// the unpadded exact ranking. The discriminator tries to separate padded
// from unpadded scores of each query's exact top-k documents. Query vectors
// use the same pseudo entries at every grid point.
EquilibriumReport optimize_noise(const Pipeline& base, std::span<const KeywordQuery> queries,
                                 const EquilibriumConfig& config);

// sigma,precision,rank_privacy,f,discriminator_accuracy,argmax
void write_equilibrium_csv(std::ostream& out, const EquilibriumReport& report);

}  // namespace mrsm
