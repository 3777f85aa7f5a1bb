#include "mrsm/partitioning.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace mrsm {
namespace {

constexpr int kMaxRounds = 100;
constexpr int kRestarts = 20;

double l1(const std::vector<std::uint8_t>& bits, const std::vector<double>& centre) {
  double d = 0.0;
  for (std::size_t j = 0; j < bits.size(); ++j) d += std::abs(bits[j] - centre[j]);
  return d;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d += std::abs(a[j] - b[j]);
  return d;
}

std::vector<double> as_real(const std::vector<std::uint8_t>& bits) {
  return std::vector<double>(bits.begin(), bits.end());
}

// Component-wise median of 0/1 vectors: majority bit, 0.5 on an even split.
std::vector<double> binary_median(std::span<const BinaryIndex> all,
                                  const std::vector<std::size_t>& members) {
  const std::size_t n = all.front().bits.size();
  std::vector<std::size_t> ones(n, 0);
  for (auto m : members) {
    for (std::size_t j = 0; j < n; ++j) ones[j] += all[m].bits[j];
  }
  std::vector<double> centre(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t twice = 2 * ones[j];
    centre[j] = twice > members.size() ? 1.0 : (twice == members.size() ? 0.5 : 0.0);
  }
  return centre;
}

// Weighted component-wise median; the midpoint when the cumulative weight
// hits exactly half.
std::vector<double> weighted_median(const std::vector<std::vector<double>>& points,
                                    const std::vector<double>& weights,
                                    const std::vector<std::size_t>& members) {
  const std::size_t n = points.front().size();
  double total = 0.0;
  for (auto m : members) total += weights[m];
  std::vector<double> centre(n, 0.0);
  std::vector<std::pair<double, double>> column(members.size());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      column[i] = {points[members[i]][j], weights[members[i]]};
    }
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < column.size(); ++i) {
      acc += column[i].second;
      if (2.0 * acc > total) {
        centre[j] = column[i].first;
        break;
      }
      if (2.0 * acc == total) {
        centre[j] = 0.5 * (column[i].first + column[i + 1].first);
        break;
      }
    }
  }
  return centre;
}

InitialPartition make_initial(std::span<const BinaryIndex> all,
                              const std::vector<std::size_t>& members) {
  InitialPartition p;
  p.owner = all[members.front()].owner;
  const std::size_t n = all.front().bits.size();
  p.representative.assign(n, 0.0);
  for (auto m : members) {
    p.members.push_back(all[m].doc);
    for (std::size_t j = 0; j < n; ++j) p.representative[j] += all[m].bits[j];
  }
  for (auto& v : p.representative) v /= static_cast<double>(members.size());
  return p;
}

struct ClusteringRun {
  std::vector<PartitionId> labels;
  std::vector<std::vector<double>> centroids;
  double objective = std::numeric_limits<double>::infinity();
};

ClusteringRun kmedians_run(const std::vector<std::vector<double>>& points,
                           const std::vector<double>& weights, std::size_t k, Rng& rng) {
  const std::size_t count = points.size();
  ClusteringRun run;

  // k-means++ seeding, probability proportional to weight times L1 distance.
  std::vector<std::size_t> seeds;
  seeds.push_back(std::uniform_int_distribution<std::size_t>(0, count - 1)(rng));
  std::vector<double> nearest(count, std::numeric_limits<double>::infinity());
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      nearest[i] = std::min(nearest[i], weights[i] * l1(points[i], points[seeds.back()]));
      total += nearest[i];
    }
    std::size_t pick = count;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < count; ++i) {
        u -= nearest[i];
        if (u <= 0.0 && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    if (pick == count) {
      // Degenerate: all remaining mass is zero, take the first unused point.
      for (std::size_t i = 0; i < count && pick == count; ++i) {
        if (std::find(seeds.begin(), seeds.end(), i) == seeds.end()) pick = i;
      }
    }
    seeds.push_back(pick);
  }
  for (auto s : seeds) run.centroids.push_back(points[s]);

  run.labels.assign(count, k);
  for (int round = 0; round < kMaxRounds; ++round) {
    std::vector<PartitionId> labels(count);
    std::vector<double> dist(count);
    for (std::size_t i = 0; i < count; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = l1(points[i], run.centroids[c]);
        if (d < best) {
          best = d;
          labels[i] = c;
        }
      }
      dist[i] = weights[i] * best;
    }
    // Refill empty clusters with the worst-fitting point of a shared cluster.
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::size_t> sizes(k, 0);
      for (auto l : labels) ++sizes[l];
      if (sizes[c] > 0) continue;
      std::size_t worst = count;
      for (std::size_t i = 0; i < count; ++i) {
        if (sizes[labels[i]] > 1 && (worst == count || dist[i] > dist[worst])) worst = i;
      }
      if (worst == count) break;
      labels[worst] = c;
      dist[worst] = 0.0;
      run.centroids[c] = points[worst];
    }
    const bool stable = labels == run.labels;
    run.labels = std::move(labels);
    if (stable) break;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < count; ++i) {
        if (run.labels[i] == c) members.push_back(i);
      }
      if (!members.empty()) run.centroids[c] = weighted_median(points, weights, members);
    }
  }
  run.objective = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    run.objective += weights[i] * l1(points[i], run.centroids[run.labels[i]]);
  }
  return run;
}

}  // namespace

std::vector<InitialPartition> local_split(std::span<const BinaryIndex> owner_indexes) {
  if (owner_indexes.empty()) throw Error("local_split needs at least one index vector");
  const std::size_t count = owner_indexes.size();
  std::vector<std::size_t> all(count);
  for (std::size_t i = 0; i < count; ++i) all[i] = i;

  std::size_t far = 0;
  double far_dist = 0.0;
  const auto first = as_real(owner_indexes[0].bits);
  for (std::size_t i = 1; i < count; ++i) {
    const double d = l1(owner_indexes[i].bits, first);
    if (d > far_dist) {
      far_dist = d;
      far = i;
    }
  }
  if (far_dist == 0.0) return {make_initial(owner_indexes, all)};

  std::vector<double> centre_a = first;
  std::vector<double> centre_b = as_real(owner_indexes[far].bits);
  std::vector<int> label(count, -1);
  for (int round = 0; round < kMaxRounds; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < count; ++i) {
      const int l = l1(owner_indexes[i].bits, centre_b) < l1(owner_indexes[i].bits, centre_a);
      if (l != label[i]) {
        label[i] = l;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < count; ++i) (label[i] ? b : a).push_back(i);
    if (a.empty() || b.empty()) break;
    centre_a = binary_median(owner_indexes, a);
    centre_b = binary_median(owner_indexes, b);
  }
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < count; ++i) (label[i] ? b : a).push_back(i);
  std::vector<InitialPartition> out;
  if (!a.empty()) out.push_back(make_initial(owner_indexes, a));
  if (!b.empty()) out.push_back(make_initial(owner_indexes, b));
  return out;
}

GlobalClustering global_cluster(std::span<const InitialPartition> initials, std::size_t s,
                                std::uint64_t seed) {
  if (s == 0 || s > initials.size()) {
    throw Error("partition count s=" + std::to_string(s) + " must lie in [1, " +
                std::to_string(initials.size()) + "]");
  }
  std::vector<std::vector<double>> points;
  points.reserve(initials.size());
  std::vector<double> weights;
  for (const auto& p : initials) {
    if (p.members.empty()) throw Error("initial partition without members");
    points.push_back(p.representative);
    weights.push_back(static_cast<double>(p.members.size()));
  }

  ClusteringRun best;
  for (int restart = 0; restart < kRestarts; ++restart) {
    Rng rng = make_rng(seed, 100 + static_cast<std::uint64_t>(restart));
    auto run = kmedians_run(points, weights, s, rng);
    if (run.objective < best.objective) best = std::move(run);
    if (s == 1) break;
  }
  return GlobalClustering{best.labels, best.centroids, best.objective};
}

PartitionSet::PartitionSet(std::vector<Partition> partitions,
                           std::map<DocId, PartitionId> assignments)
    : partitions_(std::move(partitions)), assignments_(std::move(assignments)) {
  rebuild_homes();
}

void PartitionSet::rebuild_homes() {
  homes_.clear();
  for (PartitionId p = 0; p < partitions_.size(); ++p) {
    const auto& words = partitions_[p].words;
    for (std::size_t d = 0; d < words.size(); ++d) {
      if (!homes_.emplace(words[d], KeywordHome{p, d}).second) {
        throw Error("keyword '" + words[d] + "' assigned to two sub-dictionaries");
      }
    }
  }
}

std::optional<KeywordHome> PartitionSet::home(std::string_view word) const {
  auto it = homes_.find(word);
  if (it == homes_.end()) return std::nullopt;
  return it->second;
}

std::optional<PartitionId> PartitionSet::partition_of(DocId doc) const {
  auto it = assignments_.find(doc);
  if (it == assignments_.end()) return std::nullopt;
  return it->second;
}

std::size_t PartitionSet::add_keywords(PartitionId p, const std::vector<std::string>& words) {
  auto& part = partitions_.at(p);
  const std::size_t first = part.words.size();
  for (const auto& w : words) {
    if (homes_.count(w)) throw Error("keyword '" + w + "' already exists");
    homes_.emplace(w, KeywordHome{p, part.words.size()});
    part.words.push_back(w);
  }
  for (auto& idx : part.indexes) {
    idx.bits.resize(part.words.size(), 0);
    idx.counts.resize(part.words.size(), 0);
  }
  return first;
}

void PartitionSet::add_member(PartitionId p, CompressedIndex index) {
  auto& part = partitions_.at(p);
  if (index.bits.size() != part.words.size()) throw Error("compressed index dimension mismatch");
  if (!assignments_.emplace(index.doc, p).second) {
    throw Error("doc_id " + std::to_string(index.doc) + " already indexed");
  }
  auto pos = std::lower_bound(part.indexes.begin(), part.indexes.end(), index.doc,
                              [](const CompressedIndex& c, DocId d) { return c.doc < d; });
  part.indexes.insert(pos, std::move(index));
}

void PartitionSet::remove_member(DocId doc) {
  auto it = assignments_.find(doc);
  if (it == assignments_.end()) throw Error("unknown doc_id " + std::to_string(doc));
  auto& idx = partitions_[it->second].indexes;
  idx.erase(std::remove_if(idx.begin(), idx.end(),
                           [doc](const CompressedIndex& c) { return c.doc == doc; }),
            idx.end());
  assignments_.erase(it);
}

CompressedIndex compress(const BinaryIndex& index, const Partition& partition,
                         const KeywordDictionary& dict) {
  CompressedIndex c;
  c.doc = index.doc;
  c.owner = index.owner;
  c.bits.assign(partition.words.size(), 0);
  c.counts.assign(partition.words.size(), 0);
  for (std::size_t d = 0; d < partition.words.size(); ++d) {
    auto global = dict.position(partition.words[d]);
    if (!global) continue;
    c.bits[d] = index.bits[*global];
    c.counts[d] = index.counts[*global];
  }
  return c;
}

std::vector<std::uint8_t> scatter(const CompressedIndex& index, const Partition& partition,
                                  const KeywordDictionary& dict) {
  std::vector<std::uint8_t> full(dict.size(), 0);
  for (std::size_t d = 0; d < partition.words.size(); ++d) {
    auto global = dict.position(partition.words[d]);
    if (global) full[*global] = index.bits[d];
  }
  return full;
}

PartitionSet segment_dictionary(const std::map<DocId, PartitionId>& assignments,
                                std::span<const BinaryIndex> indexes,
                                const KeywordDictionary& dict, std::size_t s) {
  if (s == 0) throw Error("partition count must be positive");
  const std::size_t n = dict.size();
  std::vector<std::vector<std::size_t>> freq(s, std::vector<std::size_t>(n, 0));
  for (const auto& idx : indexes) {
    auto it = assignments.find(idx.doc);
    if (it == assignments.end()) throw Error("document " + std::to_string(idx.doc) + " unassigned");
    if (it->second >= s) throw Error("partition id out of range");
    if (idx.bits.size() != n) throw Error("binary index dimension mismatch");
    for (std::size_t j = 0; j < n; ++j) freq[it->second][j] += idx.bits[j];
  }
  std::vector<Partition> parts(s);
  for (std::size_t j = 0; j < n; ++j) {
    PartitionId home = 0;
    for (PartitionId p = 1; p < s; ++p) {
      if (freq[p][j] > freq[home][j]) home = p;
    }
    if (freq[home][j] > 0) parts[home].words.push_back(dict.word(j));
  }
  std::vector<const BinaryIndex*> sorted;
  for (const auto& idx : indexes) sorted.push_back(&idx);
  std::sort(sorted.begin(), sorted.end(),
            [](const BinaryIndex* a, const BinaryIndex* b) { return a->doc < b->doc; });
  for (const auto* idx : sorted) {
    const PartitionId p = assignments.at(idx->doc);
    parts[p].indexes.push_back(compress(*idx, parts[p], dict));
  }
  return PartitionSet(std::move(parts), assignments);
}

PartitionSet cluster_indexes(std::span<const BinaryIndex> indexes, const KeywordDictionary& dict,
                             std::size_t s, std::uint64_t seed, const LocalSplitter& splitter) {
  if (indexes.empty()) throw Error("no index vectors to cluster");
  if (s == 0 || s > indexes.size()) {
    throw Error("partition count s=" + std::to_string(s) + " exceeds the number of documents");
  }
  std::map<OwnerId, std::vector<BinaryIndex>> by_owner;
  for (const auto& idx : indexes) by_owner[idx.owner].push_back(idx);

  std::vector<InitialPartition> initials;
  for (const auto& [owner, list] : by_owner) {
    for (auto& part : splitter(list)) initials.push_back(std::move(part));
  }
  if (s > initials.size()) {
    throw Error("partition count s=" + std::to_string(s) + " exceeds the " +
                std::to_string(initials.size()) + " initial partitions");
  }
  const auto clustering = global_cluster(initials, s, seed);
  std::map<DocId, PartitionId> assignments;
  for (std::size_t i = 0; i < initials.size(); ++i) {
    for (auto doc : initials[i].members) assignments[doc] = clustering.initial_to_partition[i];
  }
  return segment_dictionary(assignments, indexes, dict, s);
}

std::size_t default_partition_count(std::size_t dictionary_size) {
  return std::max<std::size_t>(1, (dictionary_size + 999) / 1000);
}

void write_partitions(std::ostream& out, const PartitionSet& set) {
  out << "mrsm-partitions 1\n";
  out << "partitions " << set.size() << "\n";
  out << "assignments " << set.assignments().size() << "\n";
  for (const auto& [doc, p] : set.assignments()) out << doc << ' ' << p << "\n";
  for (PartitionId p = 0; p < set.size(); ++p) {
    out << "partition " << p << ' ' << set[p].words.size() << "\n";
    for (const auto& w : set[p].words) out << w << "\n";
  }
}

PartitionSet read_partitions(std::istream& in, std::span<const BinaryIndex> indexes,
                             const KeywordDictionary& dict) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "mrsm-partitions") throw Error("not a partition file");
  if (version != 1) throw Error("unsupported partition file version");
  std::size_t s = 0, count = 0;
  if (!(in >> tag >> s) || tag != "partitions") throw Error("partition file: missing count");
  if (!(in >> tag >> count) || tag != "assignments") throw Error("partition file: no assignments");
  std::map<DocId, PartitionId> assignments;
  for (std::size_t i = 0; i < count; ++i) {
    DocId doc;
    PartitionId p;
    if (!(in >> doc >> p) || p >= s) throw Error("partition file: bad assignment row");
    assignments[doc] = p;
  }
  std::vector<Partition> parts(s);
  for (PartitionId p = 0; p < s; ++p) {
    PartitionId id;
    std::size_t words;
    if (!(in >> tag >> id >> words) || tag != "partition" || id != p) {
      throw Error("partition file: bad partition header");
    }
    parts[p].words.resize(words);
    for (auto& w : parts[p].words) {
      if (!(in >> w)) throw Error("partition file: truncated word list");
    }
  }
  std::vector<const BinaryIndex*> sorted;
  for (const auto& idx : indexes) sorted.push_back(&idx);
  std::sort(sorted.begin(), sorted.end(),
            [](const BinaryIndex* a, const BinaryIndex* b) { return a->doc < b->doc; });
  for (const auto* idx : sorted) {
    auto it = assignments.find(idx->doc);
    if (it == assignments.end()) continue;
    parts[it->second].indexes.push_back(compress(*idx, parts[it->second], dict));
  }
  return PartitionSet(std::move(parts), std::move(assignments));
}

}  // namespace mrsm
