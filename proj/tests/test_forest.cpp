#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "mrsm/forest.hpp"

using namespace mrsm;

namespace {

Vector random_vec(std::size_t dim, Rng& rng, double density = 0.4) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (auto& x : v) {
    if (u(rng) < density) x = u(rng);
  }
  return v;
}

std::vector<IndexTree::Leaf> random_leaves(std::size_t count, std::size_t dim, Rng& rng,
                                           DocId first = 0) {
  std::vector<IndexTree::Leaf> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back({first + static_cast<DocId>(i), random_vec(dim, rng)});
  return out;
}

// Independent top-k: every leaf scored, sorted by score then doc id.
std::vector<DocId> brute_top_k(const std::map<DocId, Vector>& docs, const Vector& q, std::size_t k) {
  std::vector<std::pair<double, DocId>> all;
  for (const auto& [d, v] : docs) all.push_back({-v.dot(q), d});
  std::sort(all.begin(), all.end());
  std::vector<DocId> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

std::vector<DocId> ids(const std::vector<ScoredDoc>& v) {
  std::vector<DocId> out;
  for (const auto& s : v) out.push_back(s.doc);
  return out;
}

void check_structure(const IndexTree& tree) {
  for (int id : tree.live_ids()) {
    const auto& n = tree.node(id);
    if (n.is_leaf()) continue;
    const auto& l = tree.node(n.left);
    const auto& r = tree.node(n.right);
    CHECK(l.parent == id);
    CHECK(r.parent == id);
    CHECK(n.v == l.v.cwiseMax(r.v));
    CHECK(n.leaves == l.leaves + r.leaves);
    CHECK(n.min_doc == std::min(l.min_doc, r.min_doc));
  }
  CHECK(tree.height() <= tree.depth_bound());
}

SecureWeightedIndex secure(DocId doc, OwnerId owner, Vector v) {
  SecureWeightedIndex s;
  s.doc = doc;
  s.owner = owner;
  s.real_dims = static_cast<std::size_t>(v.size());
  s.values = std::move(v);
  return s;
}

}  // namespace

TEST_SUITE("forest") {
  TEST_CASE("likelihood order with one all-ones probe sorts by vector sum") {
    Rng rng(1);
    std::vector<SecureWeightedIndex> idx;
    for (int d = 0; d < 20; ++d) idx.push_back(secure(d, 0, random_vec(6, rng)));
    const auto ordered = order_by_likelihood(idx, Vector::Ones(6));
    for (std::size_t i = 1; i < ordered.size(); ++i) {
      CHECK(ordered[i - 1].values.sum() >= ordered[i].values.sum());
    }
  }

  TEST_CASE("a dominant vector always comes first") {
    Rng rng(2);
    std::vector<SecureWeightedIndex> idx;
    for (int d = 0; d < 30; ++d) idx.push_back(secure(d, 0, random_vec(8, rng) * 0.5));
    idx.push_back(secure(99, 0, Vector::Constant(8, 0.6)));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ProbeConfig cfg;
      cfg.count = 50;
      cfg.seed = seed;
      const auto probes = sample_probes(idx, 8, 8, cfg);
      CHECK(order_by_likelihood(idx, probe_sum(probes, 8)).front().doc == 99);
    }
  }

  TEST_CASE("likelihood order equals the accumulated per-probe score sort") {
    Rng rng(3);
    std::vector<SecureWeightedIndex> idx;
    for (int d = 0; d < 60; ++d) {
      Vector v = Vector::Zero(14);
      v.head(12) = random_vec(12, rng);
      v.tail(2) = random_vec(2, rng);
      auto s = secure(d, d % 4, v);
      s.real_dims = 12;
      idx.push_back(s);
    }
    ProbeConfig cfg;
    cfg.count = 1000;
    cfg.seed = 17;
    const auto probes = sample_probes(idx, 12, 14, cfg);
    REQUIRE(probes.size() == 1000);
    std::vector<std::pair<double, DocId>> oracle;
    for (const auto& s : idx) {
      double acc = 0.0;
      for (const auto& p : probes) acc += s.values.dot(p);
      oracle.push_back({-acc, s.doc});
    }
    std::sort(oracle.begin(), oracle.end());
    const auto ordered = order_by_likelihood(idx, probe_sum(probes, 14));
    for (std::size_t i = 0; i < ordered.size(); ++i) CHECK(ordered[i].doc == oracle[i].second);
    for (const auto& p : probes) {
      CHECK(p.tail(2).isZero());
      const auto terms = (p.array() != 0.0).count();
      CHECK(terms >= 1);
      CHECK(terms <= 3);
    }
  }

  TEST_CASE("small tree shapes") {
    Rng rng(4);
    const auto one = IndexTree::build(0, Vector::Ones(3), random_leaves(1, 3, rng));
    REQUIRE(one.root() >= 0);
    CHECK(one.node(one.root()).is_leaf());

    std::vector<IndexTree::Leaf> basis;
    for (int i = 0; i < 4; ++i) basis.push_back({i, Vector::Unit(4, i)});
    const auto four = IndexTree::build(0, Vector::Ones(4), basis);
    CHECK(four.node(four.root()).v == Vector::Ones(4));
    CHECK(four.height() == 2);
    CHECK(four.leaf_order() == std::vector<DocId>{0, 1, 2, 3});

    const auto five = IndexTree::build(0, Vector::Ones(3), random_leaves(5, 3, rng));
    check_structure(five);
    CHECK(five.size() == 5);
  }

  TEST_CASE("bounds hold for every node on random trees") {
    Rng rng(5);
    std::uniform_int_distribution<std::size_t> size(1, 40);
    for (int trial = 0; trial < 200; ++trial) {
      const auto tree = IndexTree::build(0, Vector::Ones(5), random_leaves(size(rng), 5, rng));
      check_structure(tree);
      const Vector q = random_vec(5, rng, 1.0);
      for (int id : tree.live_ids()) {
        std::vector<int> stack{id};
        const double bound = tree.node(id).v.dot(q);
        while (!stack.empty()) {
          const auto& n = tree.node(stack.back());
          stack.pop_back();
          if (n.is_leaf()) {
            CHECK(bound >= n.v.dot(q));
          } else {
            stack.push_back(n.left);
            stack.push_back(n.right);
          }
        }
      }
    }
  }

  TEST_CASE("GDFS returns the brute-force top-k") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      const auto leaves = random_leaves(50, 8, rng);
      std::map<DocId, Vector> docs;
      for (const auto& l : leaves) docs[l.doc] = l.values;
      const auto tree = IndexTree::build(0, Vector::Ones(8), leaves);
      const Vector q = random_vec(8, rng, 0.5);
      const std::size_t k = 1 + static_cast<std::size_t>(trial % 12);
      CHECK(ids(gdfs_tree(tree, q, k).candidates) == brute_top_k(docs, q, k));
    }
  }

  TEST_CASE("k covering every document returns the full ranking; zero query falls back to ids") {
    Rng rng(7);
    auto leaves = random_leaves(33, 6, rng, 100);
    std::shuffle(leaves.begin(), leaves.end(), rng);
    std::map<DocId, Vector> docs;
    for (const auto& l : leaves) docs[l.doc] = l.values;
    Forest forest;
    forest.trees.push_back(IndexTree::build(0, Vector::Ones(6), leaves));
    const Vector q = random_vec(6, rng, 1.0);
    const std::vector<std::pair<PartitionId, Vector>> plan{{0, q}};
    CHECK(ids(gdfs_search(forest, plan, 33, QuotaPolicy::full).results) == brute_top_k(docs, q, 33));
    const std::vector<std::pair<PartitionId, Vector>> zero{{0, Vector::Zero(6)}};
    CHECK(ids(gdfs_search(forest, zero, 4).results) == std::vector<DocId>{100, 101, 102, 103});
  }

  TEST_CASE("per-tree quota and merge") {
    Rng rng(8);
    Forest forest;
    std::map<DocId, Vector> docs;
    for (PartitionId p = 0; p < 3; ++p) {
      auto leaves = random_leaves(20, 5, rng, static_cast<DocId>(100 * p));
      for (const auto& l : leaves) docs[l.doc] = l.values;
      forest.trees.push_back(IndexTree::build(p, Vector::Ones(5), leaves));
    }
    const Vector q = random_vec(5, rng, 1.0);
    std::vector<std::pair<PartitionId, Vector>> plan{{0, q}, {1, q}, {2, q}};
    CHECK(candidate_quota(10, 3, QuotaPolicy::per_tree) == 4);
    CHECK(candidate_quota(10, 3, QuotaPolicy::full) == 10);
    const auto full = gdfs_search(forest, plan, 10, QuotaPolicy::full);
    CHECK(ids(full.results) == brute_top_k(docs, q, 10));
    CHECK(full.visited.size() == 3);
    const auto quota = gdfs_search(forest, plan, 10);
    CHECK(quota.results.size() == 10);
    // each tree contributes at most its 4 best
    for (PartitionId p = 0; p < 3; ++p) {
      std::size_t from = 0;
      for (auto d : ids(quota.results)) from += (d / 100 == static_cast<DocId>(p)) ? 1 : 0;
      CHECK(from <= 4);
    }
    plan.push_back({1, q});
    CHECK_THROWS_AS(gdfs_search(forest, plan, 10), Error);
    const std::vector<std::pair<PartitionId, Vector>> bad{{7, q}};
    CHECK_THROWS_AS(gdfs_search(forest, bad, 10), Error);
    CHECK_THROWS_AS(gdfs_search(forest, std::span<const std::pair<PartitionId, Vector>>{}, 10), Error);
  }

  TEST_CASE("encrypted forest mirrors the plaintext forest") {
    Rng rng(9);
    Forest forest;
    for (PartitionId p = 0; p < 2; ++p) {
      forest.trees.push_back(
          IndexTree::build(p, Vector::Ones(7), random_leaves(25, 7, rng, static_cast<DocId>(50 * p))));
    }
    const std::vector<std::size_t> dims{7, 7};
    const auto key = keygen(dims, 4);
    const auto enc = encrypt_forest(forest, key, 12);
    for (PartitionId p = 0; p < 2; ++p) {
      CHECK(enc.trees[p].shape_signature() == forest.trees[p].shape_signature());
    }
    for (int i = 0; i < 100; ++i) {
      const Vector q = random_vec(7, rng, 0.6);
      std::vector<std::pair<PartitionId, Vector>> plain{{0, q}, {1, q}};
      std::vector<std::pair<PartitionId, Trapdoor>> doors{{0, make_trapdoor(q, key[0], rng)},
                                                          {1, make_trapdoor(q, key[1], rng)}};
      const auto a = gdfs_search(forest, plain, 8, QuotaPolicy::full);
      const auto b = gdfs_search(enc, doors, 8, QuotaPolicy::full);
      CHECK(ids(a.results) == ids(b.results));
      CHECK(a.visited == b.visited);
    }
  }

  TEST_CASE("identity key gives plaintext scores") {
    Rng rng(10);
    Forest forest;
    forest.trees.push_back(IndexTree::build(0, Vector::Ones(4), random_leaves(9, 4, rng)));
    SecretKey key;
    key.partitions.push_back(identity_key(4));
    const auto enc = encrypt_forest(forest, key, 1);
    const Vector q = random_vec(4, rng, 1.0);
    const auto t = make_trapdoor(q, key[0], rng);
    for (int id : forest.trees[0].live_ids()) {
      CHECK(score(enc.trees[0].node(id).e, t) ==
            doctest::Approx(forest.trees[0].node(id).v.dot(q)).epsilon(1e-14));
    }
  }

  TEST_CASE("forest file round trip") {
    Rng rng(11);
    Forest forest;
    forest.trees.push_back(IndexTree::build(0, Vector::Ones(3), random_leaves(7, 3, rng)));
    forest.trees.push_back(IndexTree::build(1, Vector::Ones(5), random_leaves(4, 5, rng, 20)));
    const std::vector<std::size_t> dims{3, 5};
    const auto enc = encrypt_forest(forest, keygen(dims, 2), 3);
    std::stringstream buf;
    write_forest(buf, enc);
    const auto back = read_forest(buf);
    REQUIRE(back.trees.size() == 2);
    for (PartitionId p = 0; p < 2; ++p) {
      CHECK(back.trees[p].shape_signature() == enc.trees[p].shape_signature());
      std::stringstream again;
      back.trees[p].write(again);
      std::stringstream orig;
      enc.trees[p].write(orig);
      CHECK(again.str() == orig.str());
    }
    std::stringstream junk("MRSMXXX");
    CHECK_THROWS_AS(read_forest(junk), Error);
  }

  TEST_CASE("insert into a one-leaf tree") {
    Rng rng(12);
    auto tree = IndexTree::build(0, Vector::Ones(3), random_leaves(1, 3, rng));
    const Vector v = random_vec(3, rng, 1.0);
    const Vector first = tree.node(tree.root()).v;
    const auto stats = tree.insert(5, v);
    CHECK(tree.size() == 2);
    CHECK(tree.node(tree.root()).v == first.cwiseMax(v));
    CHECK(stats.touched >= 2);
    CHECK_THROWS_AS(tree.insert(5, v), Error);
  }

  TEST_CASE("random insert and erase sequences keep the tree sound and exact") {
    Rng rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto leaves = random_leaves(64, 6, rng);
    std::map<DocId, Vector> docs;
    for (const auto& l : leaves) docs[l.doc] = l.values;
    auto tree = IndexTree::build(0, Vector::Ones(6), leaves);
    DocId next = 1000;
    std::size_t inserts = 0;
    std::size_t touched = 0;
    std::size_t bound_sum = 0;
    for (int step = 0; step < 400; ++step) {
      const bool add = docs.size() < 4 || u(rng) < 0.6;
      if (add) {
        const Vector v = random_vec(6, rng);
        const auto stats = tree.insert(next, v);
        docs[next++] = v;
        if (!stats.full_rebuild) {
          ++inserts;
          touched += stats.touched;
          bound_sum += 2 * (tree.depth_bound() + 1);
        }
      } else {
        auto it = docs.begin();
        std::advance(it, static_cast<long>(u(rng) * static_cast<double>(docs.size())) %
                             static_cast<long>(docs.size()));
        tree.erase(it->first);
        CHECK_FALSE(tree.contains(it->first));
        docs.erase(it);
      }
      CHECK(tree.size() == docs.size());
      CHECK(tree.height() <= tree.depth_bound());
      if (step % 20 == 0) check_structure(tree);
      const Vector q = random_vec(6, rng, 0.7);
      CHECK(ids(gdfs_tree(tree, q, 5).candidates) == brute_top_k(docs, q, 5));
    }
    check_structure(tree);
    // Local reshapes make single inserts expensive; the average stays logarithmic.
    REQUIRE(inserts > 0);
    CHECK(touched <= bound_sum);
  }

  TEST_CASE("erasing the only leaf empties the tree") {
    Rng rng(14);
    auto tree = IndexTree::build(0, Vector::Ones(3), random_leaves(1, 3, rng, 9));
    tree.erase(9);
    CHECK(tree.size() == 0);
    CHECK(tree.root() < 0);
    CHECK(gdfs_tree(tree, Vector::Ones(3), 3).candidates.empty());
    CHECK_THROWS_AS(tree.erase(9), Error);
    tree.insert(4, Vector::Ones(3));
    CHECK(tree.size() == 1);
  }

  TEST_CASE("incremental encrypted updates match the plaintext tree") {
    Rng rng(15);
    auto tree = IndexTree::build(0, Vector::Ones(5), random_leaves(30, 5, rng));
    const std::vector<std::size_t> dims{5};
    const auto key = keygen(dims, 8);
    auto enc = EncryptedTree::encrypt(tree, key[0], rng);
    for (int step = 0; step < 60; ++step) {
      const auto stats = step % 3 == 2 ? tree.erase(static_cast<DocId>(step / 3))
                                        : tree.insert(500 + step, random_vec(5, rng));
      enc.apply(tree, stats, key[0], rng);
      CHECK(enc.shape_signature() == tree.shape_signature());
      const Vector q = random_vec(5, rng, 1.0);
      const auto t = make_trapdoor(q, key[0], rng);
      CHECK(ids(gdfs_tree(enc, t, 6).candidates) == ids(gdfs_tree(tree, q, 6).candidates));
    }
    for (int id : tree.live_ids()) {
      CHECK((decrypt_vector(enc.node(id).e, key[0]) - tree.node(id).v).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("pruned subtrees never hold a final candidate") {
    Rng rng(16);
    for (int trial = 0; trial < 300; ++trial) {
      const auto tree = IndexTree::build(0, Vector::Ones(4), random_leaves(1 + trial % 64, 4, rng));
      const Vector q = random_vec(4, rng, 0.8);
      const auto r = gdfs_tree(tree, q, 3, true);
      const auto found = ids(r.candidates);
      const std::set<DocId> final_ids(found.begin(), found.end());
      for (int id : r.pruned) {
        std::vector<int> stack{id};
        while (!stack.empty()) {
          const auto& n = tree.node(stack.back());
          stack.pop_back();
          if (n.is_leaf()) {
            CHECK_FALSE(final_ids.contains(n.doc));
          } else {
            stack.push_back(n.left);
            stack.push_back(n.right);
          }
        }
      }
    }
  }
}
