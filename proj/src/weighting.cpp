#include "mrsm/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>

namespace mrsm {

Matrix build_correlativity(std::span<const CompressedIndex> docs, std::size_t dims) {
  const auto n = static_cast<Eigen::Index>(dims);
  Matrix incidence = Matrix::Zero(static_cast<Eigen::Index>(docs.size()), n);
  for (std::size_t r = 0; r < docs.size(); ++r) {
    if (docs[r].bits.size() != dims) throw Error("correlativity: index dimension mismatch");
    for (std::size_t j = 0; j < dims; ++j) {
      incidence(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = docs[r].bits[j];
    }
  }
  Matrix gram = Matrix::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(incidence.transpose());
  Matrix corr(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    corr(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double denom = std::sqrt(gram(a, a) * gram(b, b));
      const double c = denom > 0.0 ? std::min(1.0, gram(b, a) / denom) : 0.0;
      corr(a, b) = c;
      corr(b, a) = c;
    }
  }
  return corr;
}

Matrix read_correlativity(std::istream& in, std::size_t dims) {
  const auto n = static_cast<Eigen::Index>(dims);
  Matrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!(in >> m(r, c))) throw Error("correlativity file: expected " +
                                        std::to_string(dims * dims) + " values");
    }
  }
  double extra;
  if (in >> extra) throw Error("correlativity file: trailing values");
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!std::isfinite(m(r, c)) || m(r, c) < 0.0 || m(r, c) > 1.0) {
        throw Error("correlativity file: entry out of [0,1]");
      }
      if (m(r, c) != m(c, r)) throw Error("correlativity file: matrix is not symmetric");
    }
  }
  return m;
}

std::vector<OwnerWeights> compute_weights(std::span<const CompressedIndex> docs,
                                          const Matrix& correlativity) {
  const Eigen::Index n = correlativity.rows();
  std::map<OwnerId, std::pair<Vector, Vector>> totals;  // owner -> (df, tf)
  for (const auto& d : docs) {
    if (static_cast<Eigen::Index>(d.bits.size()) != n) {
      throw Error("weights: index dimension does not match correlativity matrix");
    }
    auto [it, inserted] = totals.try_emplace(d.owner, Vector::Zero(n), Vector::Zero(n));
    auto& [df, tf] = it->second;
    for (Eigen::Index t = 0; t < n; ++t) {
      df[t] += d.bits[static_cast<std::size_t>(t)];
      tf[t] += d.counts[static_cast<std::size_t>(t)];
    }
  }
  std::vector<OwnerWeights> out;
  for (auto& [owner, pair] : totals) {
    OwnerWeights w;
    w.owner = owner;
    w.doc_frequency = pair.first;
    w.alpha = Vector::Zero(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      if (w.doc_frequency[t] > 0.0) w.alpha[t] = 1.0 / w.doc_frequency[t];
    }
    w.akp = pair.second.cwiseProduct(w.alpha);
    w.raw = correlativity * w.akp;
    out.push_back(std::move(w));
  }
  const Vector w_max = max_raw_weight(out);
  for (auto& w : out) {
    w.normalized = Vector::Zero(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      if (w_max[t] > 0.0) w.normalized[t] = w.raw[t] / w_max[t];
    }
  }
  return out;
}

Vector max_raw_weight(std::span<const OwnerWeights> weights) {
  if (weights.empty()) return {};
  Vector m = weights.front().raw;
  for (const auto& w : weights) m = m.cwiseMax(w.raw);
  return m;
}

const OwnerWeights* find_owner(std::span<const OwnerWeights> weights, OwnerId owner) {
  for (const auto& w : weights) {
    if (w.owner == owner) return &w;
  }
  return nullptr;
}

WeightedIndex weight_index(const CompressedIndex& index, const Vector& weights,
                           PartitionId partition) {
  if (static_cast<Eigen::Index>(index.bits.size()) != weights.size()) {
    throw Error("weighted index: dimension mismatch (" + std::to_string(index.bits.size()) +
                " vs " + std::to_string(weights.size()) + ")");
  }
  WeightedIndex w;
  w.doc = index.doc;
  w.owner = index.owner;
  w.partition = partition;
  w.values = Vector::Zero(weights.size());
  for (Eigen::Index t = 0; t < weights.size(); ++t) {
    if (index.bits[static_cast<std::size_t>(t)]) w.values[t] = weights[t];
  }
  return w;
}

std::vector<WeightedIndex> weight_indexes(std::span<const CompressedIndex> indexes,
                                          std::span<const OwnerWeights> weights,
                                          PartitionId partition) {
  std::vector<WeightedIndex> out;
  out.reserve(indexes.size());
  for (const auto& idx : indexes) {
    const auto* w = find_owner(weights, idx.owner);
    if (!w) throw Error("no weights for owner " + std::to_string(idx.owner));
    out.push_back(weight_index(idx, w->normalized, partition));
  }
  return out;
}

}  // namespace mrsm
