#include "mrsm/forest.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include "mrsm/io.hpp"

namespace mrsm {
namespace {

constexpr std::string_view kForestMagic = "MRSMFOR";
constexpr std::uint32_t kForestVersion = 1;

}  // namespace

std::vector<Vector> sample_probes(std::span<const SecureWeightedIndex> indexes,
                                  std::size_t real_dims, std::size_t total_dims,
                                  const ProbeConfig& config) {
  if (config.count == 0) throw Error("probe count R must be at least 1");
  if (config.min_terms == 0 || config.min_terms > config.max_terms) {
    throw Error("probe term range must satisfy 1 <= min_terms <= max_terms");
  }
  if (real_dims > total_dims) throw Error("real dimensions exceed total dimensions");

  std::vector<std::size_t> df(real_dims, 0);
  for (const auto& idx : indexes) {
    for (std::size_t t = 0; t < real_dims; ++t) {
      if (idx.values[static_cast<Eigen::Index>(t)] > 0.0) ++df[t];
    }
  }
  std::vector<std::size_t> ranked;
  for (std::size_t t = 0; t < real_dims; ++t) {
    if (df[t] > 0) ranked.push_back(t);
  }
  if (ranked.empty()) {
    for (std::size_t t = 0; t < real_dims; ++t) ranked.push_back(t);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](std::size_t a, std::size_t b) { return df[a] > df[b]; });

  const auto n = static_cast<Eigen::Index>(total_dims);
  std::vector<Vector> probes(config.count, Vector::Zero(n));
  if (ranked.empty()) return probes;

  std::vector<double> weights(ranked.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), config.zipf);
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  Rng rng = make_rng(config.seed, 0x70b3);
  std::uniform_int_distribution<std::size_t> terms(config.min_terms, config.max_terms);
  for (auto& probe : probes) {
    const std::size_t m = std::min(terms(rng), ranked.size());
    std::set<std::size_t> chosen;
    while (chosen.size() < m) chosen.insert(pick(rng));
    for (auto r : chosen) probe[static_cast<Eigen::Index>(ranked[r])] = 1.0;
  }
  return probes;
}

Vector probe_sum(std::span<const Vector> probes, std::size_t total_dims) {
  Vector total = Vector::Zero(static_cast<Eigen::Index>(total_dims));
  for (const auto& p : probes) {
    if (p.size() != total.size()) throw Error("probe dimension mismatch");
    total += p;
  }
  return total;
}

std::vector<SecureWeightedIndex> order_by_likelihood(std::vector<SecureWeightedIndex> indexes,
                                                     const Vector& probe_total) {
  std::vector<ScoredDoc> keys;
  keys.reserve(indexes.size());
  std::unordered_map<DocId, std::size_t> slot;
  for (std::size_t i = 0; i < indexes.size(); ++i) {
    if (indexes[i].values.size() != probe_total.size()) {
      throw Error("probe dimension does not match index dimension");
    }
    keys.push_back({indexes[i].doc, indexes[i].values.dot(probe_total)});
    slot[indexes[i].doc] = i;
  }
  sort_ranked(keys);
  std::vector<SecureWeightedIndex> out;
  out.reserve(indexes.size());
  for (const auto& k : keys) out.push_back(std::move(indexes[slot.at(k.doc)]));
  return out;
}

// ---------------------------------------------------------------------------
// IndexTree

IndexTree::IndexTree(PartitionId partition, Vector probe_total)
    : partition_(partition), probe_total_(std::move(probe_total)) {}

IndexTree IndexTree::build(PartitionId partition, Vector probe_total, std::vector<Leaf> ordered) {
  IndexTree tree(partition, std::move(probe_total));
  std::vector<int> ids;
  ids.reserve(ordered.size());
  for (auto& leaf : ordered) {
    if (tree.contains(leaf.doc)) {
      throw Error("duplicate document " + std::to_string(leaf.doc) + " in tree");
    }
    ids.push_back(tree.make_leaf(leaf.doc, std::move(leaf.values)));
  }
  UpdateStats stats;
  tree.root_ = tree.assemble(ids, stats);
  if (tree.root_ >= 0) tree.nodes_[static_cast<std::size_t>(tree.root_)].parent = -1;
  tree.built_size_ = ids.size();
  return tree;
}

ScoredDoc IndexTree::key_of(DocId doc, const Vector& values) const {
  return {doc, values.dot(probe_total_)};
}

int IndexTree::allocate() {
  int id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
  } else {
    id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
  }
  nodes_[static_cast<std::size_t>(id)] = TreeNode{};
  nodes_[static_cast<std::size_t>(id)].live = true;
  return id;
}

void IndexTree::release(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  n = TreeNode{};
  free_.push_back(id);
}

int IndexTree::make_leaf(DocId doc, Vector values) {
  if (static_cast<std::size_t>(values.size()) != dim()) {
    throw Error("index dimension " + std::to_string(values.size()) +
                " does not match tree dimension " + std::to_string(dim()));
  }
  const int id = allocate();
  auto& n = nodes_[static_cast<std::size_t>(id)];
  n.last = key_of(doc, values);
  n.v = std::move(values);
  n.doc = doc;
  n.leaves = 1;
  n.height = 0;
  n.min_doc = doc;
  leaf_of_[doc] = id;
  return id;
}

void IndexTree::refresh(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  const auto& l = node(n.left);
  const auto& r = node(n.right);
  n.v = l.v.cwiseMax(r.v);
  n.leaves = l.leaves + r.leaves;
  n.height = 1 + std::max(l.height, r.height);
  n.min_doc = std::min(l.min_doc, r.min_doc);
  n.last = r.last;
}

void IndexTree::refresh_upward(int id, UpdateStats& stats) {
  while (id >= 0) {
    refresh(id);
    stats.touched_ids.push_back(id);
    id = node(id).parent;
  }
}

void IndexTree::replace_child(int parent, int old_child, int new_child) {
  nodes_[static_cast<std::size_t>(new_child)].parent = parent;
  if (parent < 0) {
    root_ = new_child;
    return;
  }
  auto& p = nodes_[static_cast<std::size_t>(parent)];
  if (p.left == old_child) {
    p.left = new_child;
  } else {
    p.right = new_child;
  }
}

int IndexTree::assemble(const std::vector<int>& leaf_ids, UpdateStats& stats) {
  if (leaf_ids.empty()) return -1;
  std::vector<int> level = leaf_ids;
  while (level.size() > 1) {
    std::vector<int> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      const int id = allocate();
      auto& n = nodes_[static_cast<std::size_t>(id)];
      n.left = level[i];
      n.right = level[i + 1];
      nodes_[static_cast<std::size_t>(level[i])].parent = id;
      nodes_[static_cast<std::size_t>(level[i + 1])].parent = id;
      refresh(id);
      stats.touched_ids.push_back(id);
      next.push_back(id);
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level.front();
}

void IndexTree::collect_leaves(int id, std::vector<int>& leaves, std::vector<int>& internals) const {
  std::vector<int> stack{id};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    const auto& n = node(cur);
    if (n.is_leaf()) {
      leaves.push_back(cur);
    } else {
      internals.push_back(cur);
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
}

void IndexTree::rebuild_subtree(int id, UpdateStats& stats) {
  std::vector<int> leaves, internals;
  collect_leaves(id, leaves, internals);
  const int parent = node(id).parent;
  const bool was_left = parent >= 0 && node(parent).left == id;
  for (int i : internals) {
    release(i);
    stats.freed_ids.push_back(i);
  }
  const int top = assemble(leaves, stats);
  nodes_[static_cast<std::size_t>(top)].parent = parent;
  if (parent < 0) {
    root_ = top;
  } else if (was_left) {
    nodes_[static_cast<std::size_t>(parent)].left = top;
  } else {
    nodes_[static_cast<std::size_t>(parent)].right = top;
  }
  refresh_upward(parent, stats);
}

void IndexTree::rebuild_all(UpdateStats& stats) {
  stats.full_rebuild = true;
  built_size_ = size();
  if (root_ < 0 || node(root_).is_leaf()) return;
  rebuild_subtree(root_, stats);
}

void IndexTree::rebalance(UpdateStats& stats) {
  while (root_ >= 0 && height() > depth_bound()) {
    const std::size_t bound = depth_bound();
    int leaf = root_;
    while (!node(leaf).is_leaf()) {
      const auto& n = node(leaf);
      leaf = node(n.left).height >= node(n.right).height ? n.left : n.right;
    }
    int a = node(leaf).parent;
    while (depth(a) + ceil_log2(node(a).leaves) > bound) a = node(a).parent;
    reshape_subtree(a, bound - depth(a), stats);
  }
}

// Rebuilds the subtree under `id` to at most `height` levels over the same
// leaf order, keeping every existing node whose leaf range survives. Such a
// node keeps its vector, so only nodes over new leaf ranges count as touched.
void IndexTree::reshape_subtree(int id, std::size_t height, UpdateStats& stats) {
  std::vector<int> leaves;
  std::map<std::pair<std::size_t, std::size_t>, int> by_range;
  std::map<int, std::pair<std::size_t, std::size_t>> range_of;
  auto index = [&](auto&& self, int cur) -> void {
    const std::size_t lo = leaves.size();
    const auto& n = node(cur);
    if (n.is_leaf()) {
      leaves.push_back(cur);
    } else {
      self(self, n.left);
      self(self, n.right);
    }
    by_range[{lo, leaves.size()}] = cur;
    range_of[cur] = {lo, leaves.size()};
  };
  index(index, id);

  std::set<int> kept;
  auto find = [&](std::size_t lo, std::size_t hi) {
    const auto it = by_range.find({lo, hi});
    return it == by_range.end() ? -1 : it->second;
  };
  auto keep_all = [&](auto&& self, int cur) -> void {
    kept.insert(cur);
    if (!node(cur).is_leaf()) {
      self(self, node(cur).left);
      self(self, node(cur).right);
    }
  };
  auto build = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t h) -> int {
    const int existing = find(lo, hi);
    if (existing >= 0 && node(existing).height <= h) {
      keep_all(keep_all, existing);
      return existing;
    }
    const std::size_t half = std::size_t{1} << (h - 1);
    const std::size_t from = std::max(lo + 1, hi > half ? hi - half : lo + 1);
    const std::size_t to = std::min(hi - 1, lo + half);
    auto fits = [&](std::size_t split) { return split >= from && split <= to; };
    std::size_t split = 0;
    if (existing >= 0 && fits(range_of.at(node(existing).left).second)) {
      split = range_of.at(node(existing).left).second;
    } else {
      // prefer the split that keeps the largest existing piece whole
      std::size_t best = 0;
      for (std::size_t s = from; s <= to; ++s) {
        for (const int piece : {find(lo, s), find(s, hi)}) {
          if (piece < 0 || node(piece).height > h - 1) continue;
          if (node(piece).leaves > best) {
            best = node(piece).leaves;
            split = s;
          }
        }
      }
      if (best == 0) split = std::clamp(lo + (hi - lo + 1) / 2, from, to);
    }
    const int left = self(self, lo, split, h - 1);
    const int right = self(self, split, hi, h - 1);
    int cur = existing;
    if (cur >= 0) {
      kept.insert(cur);
    } else {
      cur = allocate();
      stats.touched_ids.push_back(cur);
    }
    auto& n = nodes_[static_cast<std::size_t>(cur)];
    n.left = left;
    n.right = right;
    nodes_[static_cast<std::size_t>(left)].parent = cur;
    nodes_[static_cast<std::size_t>(right)].parent = cur;
    refresh(cur);
    return cur;
  };

  const int parent = node(id).parent;
  const bool was_left = parent >= 0 && node(parent).left == id;
  // Ranges are fixed up front, so released ids can only be reused by
  // allocate() for ranges that had no node before.
  std::vector<int> stale;
  for (const auto& [cur, range] : range_of) {
    if (!node(cur).is_leaf()) stale.push_back(cur);
  }
  const int top = build(build, 0, leaves.size(), height);
  for (int cur : stale) {
    if (!kept.contains(cur)) {
      release(cur);
      stats.freed_ids.push_back(cur);
    }
  }
  nodes_[static_cast<std::size_t>(top)].parent = parent;
  if (parent < 0) {
    root_ = top;
  } else if (was_left) {
    nodes_[static_cast<std::size_t>(parent)].left = top;
  } else {
    nodes_[static_cast<std::size_t>(parent)].right = top;
  }
  // ancestors keep their leaf sets; only heights change
  for (int cur = parent; cur >= 0; cur = node(cur).parent) refresh(cur);
}

std::size_t IndexTree::depth(int id) const {
  std::size_t d = 0;
  for (int cur = node(id).parent; cur >= 0; cur = node(cur).parent) ++d;
  return d;
}

int IndexTree::first_leaf_after(const ScoredDoc& key) const {
  int cur = root_;
  while (!node(cur).is_leaf()) {
    const auto& n = node(cur);
    cur = ranks_before(key, node(n.left).last) ? n.left : n.right;
  }
  return ranks_before(key, node(cur).last) ? cur : -1;
}

int IndexTree::predecessor(int leaf) const {
  int child = leaf;
  int parent = node(leaf).parent;
  while (parent >= 0 && node(parent).left == child) {
    child = parent;
    parent = node(parent).parent;
  }
  if (parent < 0) return -1;
  int cur = node(parent).left;
  while (!node(cur).is_leaf()) cur = node(cur).right;
  return cur;
}

namespace {

void finalize(UpdateStats& stats, const IndexTree& tree) {
  std::set<int> touched;
  for (int id : stats.touched_ids) {
    if (id >= 0 && static_cast<std::size_t>(id) < tree.arena_size() && tree.node(id).live) {
      touched.insert(id);
    }
  }
  std::set<int> freed;
  for (int id : stats.freed_ids) {
    if (!tree.node(id).live) freed.insert(id);
  }
  stats.touched_ids.assign(touched.begin(), touched.end());
  stats.freed_ids.assign(freed.begin(), freed.end());
  stats.touched = stats.touched_ids.size();
}

}  // namespace

UpdateStats IndexTree::insert(DocId doc, Vector values) {
  if (contains(doc)) throw Error("document " + std::to_string(doc) + " is already indexed");
  UpdateStats stats;
  const int leaf = make_leaf(doc, std::move(values));
  stats.touched_ids.push_back(leaf);
  if (root_ < 0) {
    root_ = leaf;
    built_size_ = 1;
    finalize(stats, *this);
    return stats;
  }

  const ScoredDoc key = node(leaf).last;
  const int successor = first_leaf_after(key);
  int target;
  bool new_on_left;
  if (successor < 0) {
    target = root_;
    while (!node(target).is_leaf()) target = node(target).right;
    new_on_left = false;
  } else {
    const int pred = predecessor(successor);
    if (pred >= 0 && depth(pred) < depth(successor)) {
      target = pred;
      new_on_left = false;
    } else {
      target = successor;
      new_on_left = true;
    }
  }

  const int parent = node(target).parent;
  const int joint = allocate();
  {
    auto& j = nodes_[static_cast<std::size_t>(joint)];
    j.left = new_on_left ? leaf : target;
    j.right = new_on_left ? target : leaf;
  }
  nodes_[static_cast<std::size_t>(target)].parent = joint;
  nodes_[static_cast<std::size_t>(leaf)].parent = joint;
  replace_child(parent, target, joint);
  refresh_upward(joint, stats);

  if (size() >= 2 * built_size_) {
    rebuild_all(stats);
  } else {
    rebalance(stats);
  }
  finalize(stats, *this);
  return stats;
}

UpdateStats IndexTree::erase(DocId doc) {
  const auto it = leaf_of_.find(doc);
  if (it == leaf_of_.end()) throw Error("document " + std::to_string(doc) + " is not indexed");
  UpdateStats stats;
  const int leaf = it->second;
  leaf_of_.erase(it);
  const int parent = node(leaf).parent;
  release(leaf);
  stats.freed_ids.push_back(leaf);
  if (parent < 0) {
    root_ = -1;
    finalize(stats, *this);
    return stats;
  }
  const auto& p = node(parent);
  const int sibling = p.left == leaf ? p.right : p.left;
  const int grand = p.parent;
  replace_child(grand, parent, sibling);
  release(parent);
  stats.freed_ids.push_back(parent);
  refresh_upward(grand, stats);

  if (2 * size() <= built_size_) {
    rebuild_all(stats);
  } else {
    rebalance(stats);
  }
  finalize(stats, *this);
  return stats;
}

std::vector<DocId> IndexTree::leaf_order() const {
  std::vector<DocId> out;
  if (root_ < 0) return out;
  std::vector<int> leaves, internals;
  collect_leaves(root_, leaves, internals);
  for (int id : leaves) out.push_back(node(id).doc);
  return out;
}

std::vector<int> IndexTree::live_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].live) out.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

template <class Tree>
std::uint64_t signature_of(const Tree& tree) {
  std::uint64_t h = 0x5eed;
  if (tree.root() < 0) return h;
  std::vector<int> stack{tree.root()};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const auto& n = tree.node(id);
    if (n.is_leaf()) {
      h = mix_seed(h, 2 * static_cast<std::uint64_t>(n.doc) + 1);
    } else {
      h = mix_seed(h, 0);
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  return h;
}

}  // namespace

std::uint64_t IndexTree::shape_signature() const { return signature_of(*this); }

IndexTree build_tree(PartitionId partition, std::span<const SecureWeightedIndex> indexes,
                     const TreeBuildOptions& options) {
  if (indexes.empty()) {
    throw Error("partition " + std::to_string(partition) + " has no indexes to build a tree from");
  }
  const std::size_t total = static_cast<std::size_t>(indexes.front().values.size());
  const std::size_t real = indexes.front().real_dims;
  for (const auto& idx : indexes) {
    if (static_cast<std::size_t>(idx.values.size()) != total || idx.real_dims != real) {
      throw Error("indexes of one partition must share their dimensions");
    }
  }
  ProbeConfig probes = options.probes;
  probes.seed = mix_seed(options.probes.seed, partition);
  const auto sampled = sample_probes(indexes, real, total, probes);
  Vector total_probe = probe_sum(sampled, total);

  std::vector<SecureWeightedIndex> ordered(indexes.begin(), indexes.end());
  switch (options.order) {
    case LeafOrder::likelihood:
      ordered = order_by_likelihood(std::move(ordered), total_probe);
      break;
    case LeafOrder::random: {
      std::sort(ordered.begin(), ordered.end(),
                [](const auto& a, const auto& b) { return a.doc < b.doc; });
      Rng rng = make_rng(options.seed, 0x0dd + partition);
      std::shuffle(ordered.begin(), ordered.end(), rng);
      break;
    }
    case LeafOrder::grouped_by_owner:
      std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return a.owner != b.owner ? a.owner < b.owner : a.doc < b.doc;
      });
      break;
  }
  std::vector<IndexTree::Leaf> leaves;
  leaves.reserve(ordered.size());
  for (auto& idx : ordered) leaves.push_back({idx.doc, std::move(idx.values)});
  return IndexTree::build(partition, std::move(total_probe), std::move(leaves));
}

Forest build_forest(const std::vector<std::vector<SecureWeightedIndex>>& partitions,
                    const TreeBuildOptions& options) {
  Forest forest;
  forest.trees.reserve(partitions.size());
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    forest.trees.push_back(build_tree(p, partitions[p], options));
  }
  return forest;
}

// ---------------------------------------------------------------------------
// EncryptedTree

void EncryptedTree::encrypt_nodes(const IndexTree& tree, const std::vector<int>& ids,
                                  const PartitionKey& key, Rng& rng) {
  if (ids.empty()) return;
  Matrix columns(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t c = 0; c < ids.size(); ++c) {
    columns.col(static_cast<Eigen::Index>(c)) = tree.node(ids[c]).v;
  }
  auto encrypted = encrypt_columns(columns, key, rng);
  for (std::size_t c = 0; c < ids.size(); ++c) {
    nodes_[static_cast<std::size_t>(ids[c])].e = std::move(encrypted[c]);
  }
}

EncryptedTree EncryptedTree::encrypt(const IndexTree& tree, const PartitionKey& key, Rng& rng) {
  if (key.dim() != tree.dim()) {
    throw Error("key dimension " + std::to_string(key.dim()) + " does not match tree dimension " +
                std::to_string(tree.dim()) + " for partition " + std::to_string(tree.partition()));
  }
  EncryptedTree out;
  out.partition_ = tree.partition();
  out.dim_ = tree.dim();
  UpdateStats all;
  all.touched_ids = tree.live_ids();
  out.apply(tree, all, key, rng);
  return out;
}

void EncryptedTree::apply(const IndexTree& tree, const UpdateStats& stats, const PartitionKey& key,
                          Rng& rng) {
  if (key.dim() != tree.dim()) throw Error("key dimension does not match tree dimension");
  dim_ = tree.dim();
  partition_ = tree.partition();
  nodes_.resize(tree.arena_size());
  for (int id : stats.freed_ids) nodes_[static_cast<std::size_t>(id)] = EncryptedNode{};
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& src = tree.node(static_cast<int>(i));
    auto& dst = nodes_[i];
    dst.live = src.live;
    if (!src.live) {
      dst = EncryptedNode{};
      continue;
    }
    dst.doc = src.doc;
    dst.left = src.left;
    dst.right = src.right;
    dst.min_doc = src.min_doc;
  }
  root_ = tree.root();
  encrypt_nodes(tree, stats.touched_ids, key, rng);
}

std::size_t EncryptedTree::size() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.live && node.is_leaf() ? 1 : 0;
  return n;
}

std::uint64_t EncryptedTree::shape_signature() const { return signature_of(*this); }

void EncryptedTree::write(std::ostream& out) const {
  io::BinaryWriter w(out);
  w.u64(partition_);
  w.u64(dim_);
  w.u64(size());
  if (root_ < 0) return;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const auto& n = node(id);
    if (n.is_leaf()) {
      w.u8(1);
      w.i64(n.doc);
    } else {
      w.u8(2);
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
    w.vector(n.e.c1);
    w.vector(n.e.c2);
  }
}

EncryptedTree EncryptedTree::read(std::istream& in) {
  io::BinaryReader r(in);
  EncryptedTree t;
  t.partition_ = r.u64();
  t.dim_ = r.u64();
  const auto leaves = r.u64();
  if (leaves == 0) return t;
  // Preorder: parents are read before their children, so fill slots from a
  // stack of (node, pending child side).
  std::vector<std::pair<int, int>> open;
  std::uint64_t seen_leaves = 0;
  auto read_node = [&]() {
    const auto tag = r.u8();
    if (tag != 1 && tag != 2) throw Error("forest file: bad node tag");
    EncryptedNode n;
    n.live = true;
    if (tag == 1) {
      n.doc = r.i64();
      n.min_doc = n.doc;
      ++seen_leaves;
    }
    n.e.c1 = r.vector();
    n.e.c2 = r.vector();
    if (static_cast<std::size_t>(n.e.c1.size()) != t.dim_ ||
        static_cast<std::size_t>(n.e.c2.size()) != t.dim_) {
      throw Error("forest file: ciphertext dimension mismatch");
    }
    t.nodes_.push_back(std::move(n));
    return std::pair<int, bool>{static_cast<int>(t.nodes_.size() - 1), tag == 2};
  };
  auto [root, root_internal] = read_node();
  t.root_ = root;
  if (root_internal) open.push_back({root, 0});
  while (!open.empty()) {
    auto& [parent, side] = open.back();
    const int p = parent;
    const int s = side;
    if (s == 2) {
      auto& pn = t.nodes_[static_cast<std::size_t>(p)];
      pn.min_doc = std::min(t.nodes_[static_cast<std::size_t>(pn.left)].min_doc,
                            t.nodes_[static_cast<std::size_t>(pn.right)].min_doc);
      open.pop_back();
      continue;
    }
    ++open.back().second;
    auto [child, internal] = read_node();
    if (s == 0) {
      t.nodes_[static_cast<std::size_t>(p)].left = child;
    } else {
      t.nodes_[static_cast<std::size_t>(p)].right = child;
    }
    if (internal) open.push_back({child, 0});
  }
  if (seen_leaves != leaves) throw Error("forest file: leaf count mismatch");
  return t;
}

EncryptedForest encrypt_forest(const Forest& forest, const SecretKey& key, std::uint64_t seed) {
  if (key.size() != forest.trees.size()) {
    throw Error("key covers " + std::to_string(key.size()) + " partitions but the forest has " +
                std::to_string(forest.trees.size()));
  }
  EncryptedForest out;
  out.trees.reserve(forest.trees.size());
  for (std::size_t p = 0; p < forest.trees.size(); ++p) {
    Rng rng = make_rng(seed, 3000 + p);
    out.trees.push_back(EncryptedTree::encrypt(forest.trees[p], key[p], rng));
  }
  return out;
}

void write_forest(std::ostream& out, const EncryptedForest& forest) {
  io::BinaryWriter w(out);
  io::write_header(w, kForestMagic, kForestVersion);
  w.u64(forest.trees.size());
  for (const auto& t : forest.trees) t.write(out);
}

EncryptedForest read_forest(std::istream& in) {
  io::BinaryReader r(in);
  r.expect_header(kForestMagic, kForestVersion);
  EncryptedForest forest;
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) forest.trees.push_back(EncryptedTree::read(in));
  return forest;
}

// ---------------------------------------------------------------------------
// Search

namespace {

template <class Tree, class Score>
class Gdfs {
 public:
  Gdfs(const Tree& tree, Score score, std::size_t quota, bool record)
      : tree_(tree), score_(std::move(score)), quota_(quota), record_(record) {}

  TreeSearch run() {
    if (quota_ == 0) throw Error("candidate quota must be at least 1");
    if (tree_.root() >= 0) {
      const double s = score_(tree_.root());
      out_.visited = 1;
      visit(tree_.root(), s);
    }
    return std::move(out_);
  }

 private:
  // Threshold is -inf until the quota fills. A subtree whose bound ties the
  // current last candidate can still win on doc id, so it is kept only if
  // it holds a smaller id.
  bool admits(double bound, DocId min_doc) const {
    const auto& c = out_.candidates;
    if (c.size() < quota_) return true;
    const auto& last = c.back();
    if (scores_tied(bound, last.score)) return min_doc < last.doc;
    return bound > last.score;
  }

  void offer(const ScoredDoc& d) {
    auto& c = out_.candidates;
    auto it = c.end();
    while (it != c.begin() && ranks_before(d, *(it - 1))) --it;
    c.insert(it, d);
    if (c.size() > quota_) c.pop_back();
  }

  void visit(int id, double s) {
    const auto& n = tree_.node(id);
    if (!admits(s, n.min_doc)) {
      if (record_) out_.pruned.push_back(id);
      return;
    }
    if (n.is_leaf()) {
      offer({n.doc, s});
      return;
    }
    const double sl = score_(n.left);
    const double sr = score_(n.right);
    out_.visited += 2;
    // Near-equal bounds go left first so ciphertext rounding cannot reorder the walk.
    if (sr > sl && !scores_tied(sr, sl)) {
      visit(n.right, sr);
      visit(n.left, sl);
    } else {
      visit(n.left, sl);
      visit(n.right, sr);
    }
  }

  const Tree& tree_;
  Score score_;
  std::size_t quota_;
  bool record_;
  TreeSearch out_;
};

template <class Tree, class Score>
TreeSearch run_gdfs(const Tree& tree, Score score, std::size_t quota, bool record) {
  return Gdfs<Tree, Score>(tree, std::move(score), quota, record).run();
}

template <class F, class Q>
SearchOutput search_forest(const F& forest, std::span<const std::pair<PartitionId, Q>> queries,
                           std::size_t k, QuotaPolicy policy) {
  if (queries.empty()) throw Error("no partitions selected for search");
  const std::size_t quota = candidate_quota(k, queries.size(), policy);
  std::set<PartitionId> seen;
  SearchOutput out;
  std::vector<ScoredDoc> merged;
  for (const auto& [p, q] : queries) {
    if (p >= forest.trees.size()) throw Error("unknown partition " + std::to_string(p));
    if (!seen.insert(p).second) throw Error("partition " + std::to_string(p) + " selected twice");
    auto r = gdfs_tree(forest.trees[p], q, quota);
    out.visited.push_back(r.visited);
    merged.insert(merged.end(), r.candidates.begin(), r.candidates.end());
  }
  sort_ranked(merged);
  if (merged.size() > k) merged.resize(k);
  out.results = std::move(merged);
  return out;
}

}  // namespace

TreeSearch gdfs_tree(const IndexTree& tree, const Vector& query, std::size_t quota,
                     bool record_pruned) {
  if (static_cast<std::size_t>(query.size()) != tree.dim()) {
    throw Error("query dimension " + std::to_string(query.size()) +
                " does not match tree dimension " + std::to_string(tree.dim()));
  }
  return run_gdfs(
      tree, [&](int id) { return tree.node(id).v.dot(query); }, quota, record_pruned);
}

TreeSearch gdfs_tree(const EncryptedTree& tree, const Trapdoor& trapdoor, std::size_t quota,
                     bool record_pruned) {
  if (static_cast<std::size_t>(trapdoor.t1.size()) != tree.dim()) {
    throw Error("trapdoor dimension does not match tree dimension");
  }
  return run_gdfs(
      tree, [&](int id) { return score(tree.node(id).e, trapdoor); }, quota, record_pruned);
}

std::size_t SearchOutput::total_visited() const {
  std::size_t total = 0;
  for (auto v : visited) total += v;
  return total;
}

std::size_t candidate_quota(std::size_t k, std::size_t t, QuotaPolicy policy) {
  if (k == 0) throw Error("k must be at least 1");
  if (t == 0) throw Error("t must be at least 1");
  return policy == QuotaPolicy::full ? k : (k + t - 1) / t;
}

SearchOutput gdfs_search(const EncryptedForest& forest,
                         std::span<const std::pair<PartitionId, Trapdoor>> trapdoors,
                         std::size_t k, QuotaPolicy policy) {
  return search_forest(forest, trapdoors, k, policy);
}

SearchOutput gdfs_search(const Forest& forest,
                         std::span<const std::pair<PartitionId, Vector>> queries, std::size_t k,
                         QuotaPolicy policy) {
  return search_forest(forest, queries, k, policy);
}

}  // namespace mrsm
