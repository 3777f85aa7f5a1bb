#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <type_traits>

#include "mrsm/engine.hpp"
#include "mrsm/synthetic.hpp"

using namespace mrsm;

namespace {

std::vector<Document> toy_corpus() {
  return {
      make_document(1, 1, "cloud cloud storage encryption"),
      make_document(2, 1, "cloud search ranked"),
      make_document(3, 2, "encryption keys matrix matrix"),
      make_document(4, 2, "cloud encryption search search"),
      make_document(5, 2, "tree forest balanced"),
      make_document(6, 3, "forest tree tree pruning"),
      make_document(7, 3, "cloud owner owner"),
      make_document(8, 3, "ranked search pruning"),
      make_document(9, 1, "matrix inverse"),
      make_document(10, 3, "zebra cloud"),
  };
}

PipelineConfig plain_config(std::size_t s) {
  PipelineConfig c;
  c.partitions = s;
  c.pseudo_ratio = 0.0;
  c.sigma = 0.0;
  c.probes.count = 50;
  c.seed = 3;
  return c;
}

UserGrant everything(const Pipeline& p, std::string user = "u") {
  UserGrant g;
  g.user = std::move(user);
  for (PartitionId i = 0; i < p.partitions.size(); ++i) g.partitions.insert(i);
  return g;
}

std::string forest_bytes(const EncryptedForest& f) {
  std::ostringstream out;
  write_forest(out, f);
  return out.str();
}

// Ranking of every indexed document against the padded indexes, straight
// from the vectors with no tree involved.
std::vector<DocId> brute_force(const Pipeline& p, const QueryPlan& plan, std::size_t k) {
  std::vector<ScoredDoc> all;
  for (const auto& [part, q] : plan.vectors) {
    for (const auto& s : p.secure[part]) all.push_back({s.doc, s.values.dot(q)});
  }
  sort_ranked(all);
  if (all.size() > k) all.resize(k);
  return doc_ids(all);
}

SyntheticCorpus small_synthetic(std::size_t docs, std::uint64_t seed) {
  SyntheticCorpusConfig c;
  c.documents = docs;
  c.vocabulary = 600;
  c.owners = 8;
  c.seed = seed;
  return SyntheticCorpus(c);
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("single keyword search on a toy corpus ranks by weight") {
    const auto docs = toy_corpus();
    const auto pipeline = build_pipeline(docs, plain_config(1));
    SearchEngine engine(pipeline);
    engine.register_user(everything(pipeline));
    for (const std::string word : {"cloud", "encryption", "search", "tree", "matrix"}) {
      CAPTURE(word);
      // oracle: owner weight of the keyword for every document holding it
      const auto home = pipeline.partitions.home(word);
      REQUIRE(home);
      std::vector<ScoredDoc> expected;
      for (const auto& d : docs) {
        if (!d.terms.contains(word)) continue;
        for (const auto& w : pipeline.weights[0]) {
          if (w.owner == d.owner) {
            expected.push_back({d.id, w.normalized[static_cast<Eigen::Index>(home->dim)]});
          }
        }
      }
      sort_ranked(expected);
      SearchRequest req;
      req.keywords = KeywordQuery::of({word});
      req.k = expected.size();
      const auto got = engine.query(req, "u");
      CHECK(doc_ids(got.results) == doc_ids(expected));
      for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(got.results[i].score == doctest::Approx(expected[i].score).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("more partitions than initial clusters is an error") {
    auto config = plain_config(50);
    CHECK_THROWS_AS(build_pipeline(toy_corpus(), config), Error);
    config = plain_config(1);
    config.sigma = -1.0;
    CHECK_THROWS_AS(build_pipeline(toy_corpus(), config), Error);
  }

  TEST_CASE("same seed gives a bit-identical encrypted forest") {
    const auto corpus = small_synthetic(120, 2);
    PipelineConfig c;
    c.partitions = 2;
    c.probes.count = 100;
    c.seed = 17;
    const auto a = build_pipeline(corpus.documents(), c);
    const auto b = build_pipeline(corpus.documents(), c);
    CHECK(forest_bytes(a.encrypted) == forest_bytes(b.encrypted));
    c.seed = 18;
    const auto other = build_pipeline(corpus.documents(), c);
    CHECK(forest_bytes(a.encrypted) != forest_bytes(other.encrypted));
  }

  TEST_CASE("authorize allows only granted partitions") {
    UserGrant g{"ann", {}, {1, 2}};
    const std::vector<PartitionId> one{1}, outside{1, 3}, none{};
    CHECK(authorize(g, one));
    CHECK_FALSE(authorize(UserGrant{"bo", {}, {1}}, outside));
    const UserGrant empty{"cy", {}, {}};
    CHECK_FALSE(authorize(empty, one));
    CHECK(authorize(empty, none));

    const std::map<PartitionId, std::set<std::string>> policy{{0, {"staff"}},
                                                              {1, {"staff", "audit"}}};
    const auto staff = grant_by_attributes("d", {"staff"}, policy, 3);
    CHECK(staff.partitions == std::set<PartitionId>{0, 2});
    const auto both = grant_by_attributes("e", {"audit", "staff"}, policy, 3);
    CHECK(both.partitions == std::set<PartitionId>{0, 1, 2});
    CHECK(grant_by_attributes("f", {}, policy, 3).partitions == std::set<PartitionId>{2});
  }

  TEST_CASE("queries: unique keyword, oversized k, unknown words") {
    const auto docs = toy_corpus();
    PipelineConfig c = plain_config(1);
    c.pseudo_ratio = 0.2;
    c.sigma = 0.05;
    SearchEngine engine(build_pipeline(docs, c));
    engine.register_user(everything(engine.pipeline()));

    SearchRequest req;
    req.keywords = KeywordQuery::of({"zebra"});
    req.k = 1;
    auto got = engine.query(req, "u");
    REQUIRE(got.results.size() == 1);
    CHECK(got.results[0].doc == 10);

    req.k = 100;
    got = engine.query(req, "u");
    CHECK(got.results.size() == docs.size());
    CHECK(got.results[0].doc == 10);
    for (std::size_t i = 1; i < got.results.size(); ++i) {
      CHECK_FALSE(ranks_before(got.results[i], got.results[i - 1]));
    }
    CHECK(got.total_visited() > 0);

    req.keywords = KeywordQuery::of({"nonexistent"});
    got = engine.query(req, "u");
    CHECK(got.results.empty());
    CHECK(got.partitions.empty());

    req.keywords.terms = {{"zebra", 1.0}, {"nonexistent", 1.0}};
    req.k = 1;
    got = engine.query(req, "u");
    REQUIRE(got.results.size() == 1);
    CHECK(got.results[0].doc == 10);

    req.keywords.terms = {{"zebra", -1.0}};
    CHECK_THROWS_AS(engine.query(req, "u"), Error);
  }

  TEST_CASE("repeated requests rank alike but use fresh trapdoors") {
    const auto corpus = small_synthetic(150, 4);
    PipelineConfig c;
    c.partitions = 2;
    c.sigma = 0.0;
    c.probes.count = 100;
    const auto pipeline = build_pipeline(corpus.documents(), c);
    REQUIRE(pipeline.noise[0].pseudo_count > 0);
    Rng rng(5);
    for (const auto& query : corpus.sample_queries(10, 1, 3, 6)) {
      const auto p1 = plan_query(pipeline, query, {}, std::nullopt, rng);
      const auto p2 = plan_query(pipeline, query, {}, std::nullopt, rng);
      if (p1.vectors.empty()) continue;
      CHECK(p1.vectors[0].second != p2.vectors[0].second);
      const auto t1 = make_trapdoors(pipeline, p1, rng);
      const auto t2 = make_trapdoors(pipeline, p2, rng);
      CHECK(t1[0].second.t1 != t2[0].second.t1);
      const auto r1 = search_encrypted(pipeline, p1, 10, rng);
      const auto r2 = search_encrypted(pipeline, p1, 10, rng);
      const auto r3 = search_encrypted(pipeline, p2, 10, rng);
      CHECK(doc_ids(r1.results) == doc_ids(r2.results));
      CHECK(doc_ids(r1.results) == doc_ids(r3.results));
    }

    SearchEngine engine(pipeline);
    engine.register_user(everything(pipeline));
    SearchRequest req;
    req.keywords = corpus.sample_queries(1, 2, 2, 7)[0];
    const auto a = engine.query(req, "u");
    const auto b = engine.query(req, "u");
    CHECK(doc_ids(a.results) == doc_ids(b.results));
  }

  TEST_CASE("access is refused outside a grant") {
    const auto corpus = small_synthetic(150, 4);
    PipelineConfig c;
    c.partitions = 2;
    c.probes.count = 100;
    SearchEngine engine(build_pipeline(corpus.documents(), c));
    engine.register_user(UserGrant{"half", {}, {0}});
    SearchRequest req;
    req.keywords = corpus.sample_queries(1, 1, 1, 2)[0];
    req.partitions = {1};
    CHECK_THROWS_AS(engine.query(req, "half"), AccessDenied);
    CHECK_THROWS_AS(engine.query(req, "nobody"), AccessDenied);
    req.partitions = {0};
    CHECK_NOTHROW(engine.query(req, "half"));
    req.partitions = {7};
    CHECK_THROWS_AS(engine.query(req, "half"), Error);
  }

  TEST_CASE("encrypted search equals the plaintext search it wraps") {
    const auto corpus = small_synthetic(200, 8);
    PipelineConfig c;
    c.partitions = 3;
    c.pseudo_ratio = 0.0;
    c.probes.count = 100;
    const auto pipeline = build_pipeline(corpus.documents(), c);
    SearchEngine engine(pipeline);
    engine.register_user(everything(pipeline));
    Rng rng(1);
    for (const auto& query : corpus.sample_queries(30, 1, 3, 12)) {
      SearchRequest req;
      req.keywords = query;
      req.k = 10;
      req.t = 2;
      const auto got = engine.query(req, "u");
      const auto plan = plan_query(pipeline, query, {}, std::size_t{2}, rng);
      const auto plain = search_plain(pipeline, plan, 10);
      CHECK(got.partitions == plan.partitions);
      CHECK(doc_ids(got.results) == doc_ids(plain.results));
      CHECK(got.visited == plain.visited);
    }
  }

  TEST_CASE("inserts and removals match a forest rebuilt from scratch") {
    const auto corpus = small_synthetic(200, 9);
    PipelineConfig c;
    c.partitions = 2;
    c.pseudo_ratio = 0.0;
    c.sigma = 0.0;
    c.probes.count = 100;
    SearchEngine engine(build_pipeline(corpus.documents(), c));
    engine.register_user(everything(engine.pipeline()));

    const auto fresh = corpus.sample_documents(25, 5000, 3);
    std::set<PartitionId> changed;
    for (const auto& d : fresh) {
      const auto out = engine.insert(d);
      changed.insert(out.partition);
      CHECK(out.stats.touched >= 1);
    }
    CHECK_THROWS_AS(engine.insert(fresh[0]), Error);
    for (DocId d = 1; d <= 40; d += 4) engine.remove(d);
    CHECK_THROWS_AS(engine.remove(1), Error);
    CHECK(engine.pipeline().documents() == 200 + 25 - 10);

    const auto& pipeline = engine.pipeline();
    const Forest rebuilt = build_forest(pipeline.secure, tree_options(pipeline.config));
    Rng rng(2);
    for (const auto& query : corpus.sample_queries(40, 1, 3, 13)) {
      SearchRequest req;
      req.keywords = query;
      req.k = 10;
      req.policy = QuotaPolicy::full;
      const auto got = engine.query(req, "u");
      const auto plan = plan_query(pipeline, query, {}, std::nullopt, rng);
      const auto scratch = gdfs_search(rebuilt, plan.vectors, 10, QuotaPolicy::full);
      CHECK(doc_ids(got.results) == doc_ids(scratch.results));
      CHECK(doc_ids(got.results) == brute_force(pipeline, plan, 10));
    }
    // the server copy mirrors the proxy's trees node for node
    for (PartitionId p = 0; p < pipeline.partitions.size(); ++p) {
      CHECK(engine.server().tree(p).shape_signature() == pipeline.forest.trees[p].shape_signature());
    }
  }

  TEST_CASE("new keywords extend one partition and keep old rankings") {
    const auto corpus = small_synthetic(150, 10);
    PipelineConfig c;
    c.partitions = 2;
    c.pseudo_ratio = 0.0;
    c.probes.count = 100;
    SearchEngine engine(build_pipeline(corpus.documents(), c));
    engine.register_user(everything(engine.pipeline()));
    const auto queries = corpus.sample_queries(20, 1, 3, 14);
    std::vector<std::vector<DocId>> before;
    for (const auto& q : queries) {
      SearchRequest req;
      req.keywords = q;
      before.push_back(doc_ids(engine.query(req, "u").results));
    }
    const auto dims = engine.pipeline().total_dims(0);
    engine.extend(0, {"qqnew1", "qqnew2"});
    CHECK(engine.pipeline().total_dims(0) == dims + 2);
    CHECK(engine.pipeline().key[0].dim() == dims + 2);
    CHECK(engine.server().tree(0).dim() == dims + 2);
    CHECK_THROWS_AS(engine.extend(0, {"qqnew1"}), Error);
    CHECK_THROWS_AS(engine.extend(5, {"other"}), Error);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      SearchRequest req;
      req.keywords = queries[i];
      CHECK(doc_ids(engine.query(req, "u").results) == before[i]);
    }

    Document doc = make_document(9000, 1, "qqnew1 qqnew1 qqnew2");
    const auto out = engine.insert(doc);
    CHECK(out.partition == 0);
    SearchRequest req;
    req.keywords = KeywordQuery::of({"qqnew1"});
    req.k = 1;
    const auto got = engine.query(req, "u");
    REQUIRE(got.results.size() == 1);
    CHECK(got.results[0].doc == 9000);
  }

  TEST_CASE("the server holds only ciphertexts") {
    static_assert(!std::is_constructible_v<CloudServer, Pipeline>);
    static_assert(!std::is_constructible_v<CloudServer, SecretKey>);
    static_assert(!std::is_constructible_v<CloudServer, Forest>);
    const auto corpus = small_synthetic(100, 11);
    PipelineConfig c;
    c.partitions = 1;
    c.probes.count = 50;
    const auto pipeline = build_pipeline(corpus.documents(), c);
    SearchEngine engine(pipeline);
    // the proxy handed its ciphertexts over and kept none
    CHECK(engine.pipeline().encrypted.trees.empty());
    const auto& tree = engine.server().tree(0);
    const auto& plain = pipeline.forest.trees[0];
    for (int id : plain.live_ids()) {
      const auto& e = tree.node(id).e;
      CHECK(e.c1.size() == plain.node(id).v.size());
      CHECK((e.c1 - plain.node(id).v).norm() > 1e-6);
      CHECK((e.c2 - plain.node(id).v).norm() > 1e-6);
    }
    PipelineConfig unencrypted = c;
    unencrypted.encrypt = false;
    CHECK_THROWS_AS(SearchEngine(build_pipeline(corpus.documents(), unencrypted)), Error);
  }
}
