#include "mrsm/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace mrsm {
namespace {

constexpr std::uint64_t kClusterSalt = 0xc1;
constexpr std::uint64_t kNoiseSalt = 0x9ad0;
constexpr std::uint64_t kProbeSalt = 0x9b0;
constexpr std::uint64_t kOrderSalt = 0x0d0;
constexpr std::uint64_t kKeySalt = 0x4e7;
constexpr std::uint64_t kEncryptSalt = 0xe1c;
constexpr std::uint64_t kUpdateSalt = 0x5eed0000;
constexpr std::uint64_t kQuerySalt = 0x9e0000;

Rng update_rng(const Pipeline& pipeline) {
  return make_rng(pipeline.config.seed, kUpdateSalt + pipeline.updates);
}

// Pads, builds the forest and encrypts it. Keys are generated only when the
// pipeline has none yet, so a sigma sweep keeps its keys.
void finish_pipeline(Pipeline& pipeline) {
  const std::size_t s = pipeline.partitions.size();
  pipeline.secure.assign(s, {});
  for (PartitionId p = 0; p < s; ++p) {
    pipeline.secure[p] = pad_partition(pipeline.weighted[p], pipeline.noise[p]);
  }
  pipeline.forest = build_forest(pipeline.secure, tree_options(pipeline.config));
  pipeline.encrypted = {};
  if (!pipeline.config.encrypt) return;
  if (pipeline.key.size() == 0) {
    std::vector<std::size_t> dims;
    for (PartitionId p = 0; p < s; ++p) dims.push_back(pipeline.total_dims(p));
    pipeline.key = keygen(dims, mix_seed(pipeline.config.seed, kKeySalt),
                          pipeline.config.key_options);
  }
  pipeline.encrypted =
      encrypt_forest(pipeline.forest, pipeline.key, mix_seed(pipeline.config.seed, kEncryptSalt));
}

template <class T>
void insert_by_doc(std::vector<T>& list, T item) {
  auto pos = std::lower_bound(list.begin(), list.end(), item.doc,
                              [](const T& x, DocId d) { return x.doc < d; });
  list.insert(pos, std::move(item));
}

template <class T>
void erase_by_doc(std::vector<T>& list, DocId doc) {
  list.erase(std::remove_if(list.begin(), list.end(), [doc](const T& x) { return x.doc == doc; }),
             list.end());
}

void check_partition(const Pipeline& pipeline, PartitionId p) {
  if (p >= pipeline.partitions.size()) {
    throw Error("unknown partition " + std::to_string(p) + " (have " +
                std::to_string(pipeline.partitions.size()) + ")");
  }
}

}  // namespace

TreeBuildOptions tree_options(const PipelineConfig& config) {
  TreeBuildOptions options;
  options.order = config.leaf_order;
  options.probes = config.probes;
  options.probes.seed = mix_seed(config.seed, kProbeSalt + config.probes.seed);
  options.seed = mix_seed(config.seed, kOrderSalt);
  return options;
}

Pipeline build_pipeline(std::span<const Document> corpus, const PipelineConfig& config) {
  validate_corpus(corpus);
  if (!(config.pseudo_ratio >= 0.0)) throw Error("pseudo-keyword ratio must be non-negative");
  if (!(config.sigma >= 0.0)) throw Error("sigma must be non-negative");
  Pipeline pipeline;
  pipeline.config = config;
  pipeline.dictionary = KeywordDictionary::build(corpus);
  const auto binary = build_binary_indexes(corpus, pipeline.dictionary);
  const std::size_t s =
      config.partitions ? config.partitions : default_partition_count(pipeline.dictionary.size());
  pipeline.partitions = cluster_indexes(binary, pipeline.dictionary, s,
                                        mix_seed(config.seed, kClusterSalt));

  for (PartitionId p = 0; p < s; ++p) {
    const auto& part = pipeline.partitions[p];
    const std::size_t n = part.words.size();
    pipeline.correlativity.push_back(build_correlativity(part.indexes, n));
    pipeline.weights.push_back(compute_weights(part.indexes, pipeline.correlativity.back()));
    pipeline.max_raw.push_back(max_raw_weight(pipeline.weights.back()));
    pipeline.weighted.push_back(weight_indexes(part.indexes, pipeline.weights.back(), p));
    pipeline.noise.push_back(NoiseModel::for_partition(n, config.pseudo_ratio, config.omega,
                                                       config.sigma,
                                                       mix_seed(config.seed, kNoiseSalt + p)));
    pipeline.noise.back().scale = config.sigma_scale;
  }
  finish_pipeline(pipeline);
  return pipeline;
}

Pipeline with_sigma(const Pipeline& base, double sigma) {
  if (!(sigma >= 0.0)) throw Error("sigma must be non-negative");
  Pipeline out = base;
  out.config.sigma = sigma;
  for (auto& model : out.noise) model.sigma = sigma;
  finish_pipeline(out);
  return out;
}

std::vector<std::pair<PartitionId, Vector>> real_query_vectors(const Pipeline& pipeline,
                                                               const KeywordQuery& query) {
  std::map<PartitionId, Vector> per;
  for (const auto& [word, weight] : query.terms) {
    if (!std::isfinite(weight) || weight < 0.0) {
      throw Error("keyword weight for '" + word + "' must be a non-negative number");
    }
    const auto home = pipeline.partitions.home(word);
    if (!home) continue;
    auto [it, fresh] = per.try_emplace(home->partition);
    if (fresh) it->second = Vector::Zero(static_cast<Eigen::Index>(pipeline.real_dims(home->partition)));
    it->second[static_cast<Eigen::Index>(home->dim)] += weight;
  }
  return {per.begin(), per.end()};
}

QueryPlan plan_query(const Pipeline& pipeline, const KeywordQuery& query,
                     std::span<const PartitionId> explicit_partitions,
                     std::optional<std::size_t> t, Rng& rng) {
  const std::size_t s = pipeline.partitions.size();
  if (t && (*t == 0 || *t > s)) {
    throw Error("t=" + std::to_string(*t) + " must lie in [1, " + std::to_string(s) + "]");
  }
  const auto real = real_query_vectors(pipeline, query);
  QueryPlan plan;
  if (!explicit_partitions.empty()) {
    for (auto p : explicit_partitions) check_partition(pipeline, p);
    plan.partitions.assign(explicit_partitions.begin(), explicit_partitions.end());
  } else {
    std::vector<std::pair<double, PartitionId>> covered;
    for (const auto& [p, v] : real) covered.push_back({v.sum(), p});
    std::stable_sort(covered.begin(), covered.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    if (t && covered.size() > *t) covered.resize(*t);
    for (const auto& c : covered) plan.partitions.push_back(c.second);
    std::sort(plan.partitions.begin(), plan.partitions.end());
  }
  std::uniform_real_distribution<double> alpha(0.0, 1.0);
  for (auto p : plan.partitions) {
    const auto n = static_cast<Eigen::Index>(pipeline.real_dims(p));
    Vector q = Vector::Zero(static_cast<Eigen::Index>(pipeline.total_dims(p)));
    for (const auto& [rp, v] : real) {
      if (rp == p) q.head(n) = v;
    }
    for (Eigen::Index j = n; j < q.size(); ++j) q[j] = alpha(rng);
    plan.vectors.push_back({p, std::move(q)});
  }
  return plan;
}

std::vector<ScoredDoc> exact_ranking(const Pipeline& pipeline, const KeywordQuery& query) {
  const auto real = real_query_vectors(pipeline, query);
  std::vector<ScoredDoc> out;
  out.reserve(pipeline.documents());
  for (PartitionId p = 0; p < pipeline.partitions.size(); ++p) {
    const Vector* q = nullptr;
    for (const auto& [rp, v] : real) {
      if (rp == p) q = &v;
    }
    for (const auto& w : pipeline.weighted[p]) out.push_back({w.doc, q ? w.values.dot(*q) : 0.0});
  }
  sort_ranked(out);
  return out;
}

SearchOutput search_plain(const Pipeline& pipeline, const QueryPlan& plan, std::size_t k,
                          QuotaPolicy policy) {
  if (plan.vectors.empty()) return {};
  return gdfs_search(pipeline.forest, plan.vectors, k, policy);
}

std::vector<std::pair<PartitionId, Trapdoor>> make_trapdoors(const Pipeline& pipeline,
                                                             const QueryPlan& plan, Rng& rng) {
  if (pipeline.key.size() != pipeline.partitions.size()) {
    throw Error("pipeline was built without keys");
  }
  std::vector<std::pair<PartitionId, Trapdoor>> out;
  for (const auto& [p, q] : plan.vectors) out.push_back({p, make_trapdoor(q, pipeline.key[p], rng)});
  return out;
}

SearchOutput search_encrypted(const Pipeline& pipeline, const QueryPlan& plan, std::size_t k,
                              Rng& rng, QuotaPolicy policy) {
  if (plan.vectors.empty()) return {};
  if (pipeline.encrypted.trees.size() != pipeline.partitions.size()) {
    throw Error("pipeline holds no encrypted forest");
  }
  const auto trapdoors = make_trapdoors(pipeline, plan, rng);
  return gdfs_search(pipeline.encrypted, trapdoors, k, policy);
}

InsertOutcome insert_document(Pipeline& pipeline, const Document& doc) {
  if (pipeline.partitions.partition_of(doc.id)) {
    throw Error("doc_id " + std::to_string(doc.id) + " is already indexed");
  }
  if (doc.terms.empty()) throw Error("doc_id " + std::to_string(doc.id) + " has no terms");

  InsertOutcome outcome;
  std::vector<std::size_t> occurrences(pipeline.partitions.size(), 0);
  for (const auto& [term, count] : doc.terms) {
    if (const auto home = pipeline.partitions.home(term)) {
      occurrences[home->partition] += count;
    } else {
      ++outcome.ignored_terms;
    }
  }
  const PartitionId p = static_cast<PartitionId>(
      std::max_element(occurrences.begin(), occurrences.end()) - occurrences.begin());
  outcome.partition = p;

  const auto& part = pipeline.partitions[p];
  const std::size_t n = part.words.size();
  CompressedIndex c;
  c.doc = doc.id;
  c.owner = doc.owner;
  c.bits.assign(n, 0);
  c.counts.assign(n, 0);
  for (const auto& [term, count] : doc.terms) {
    const auto home = pipeline.partitions.home(term);
    if (home && home->partition == p) {
      c.bits[home->dim] = 1;
      c.counts[home->dim] = count;
    }
  }

  Vector weights;
  if (const auto* owner = find_owner(pipeline.weights[p], doc.owner)) {
    weights = owner->normalized;
  } else {
    Vector tf(static_cast<Eigen::Index>(n));
    for (std::size_t d = 0; d < n; ++d) tf[static_cast<Eigen::Index>(d)] = c.counts[d];
    const Vector raw = pipeline.correlativity[p] * tf;
    const Vector& top = pipeline.max_raw[p];
    weights = Vector::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index d = 0; d < weights.size(); ++d) {
      if (top[d] > 0.0) {
        weights[d] = std::min(1.0, raw[d] / top[d]);
      } else if (raw[d] > 0.0) {
        weights[d] = 1.0;
      }
    }
  }

  auto weighted = weight_index(c, weights, p);
  auto secure = pad_index(weighted, pipeline.noise[p]);
  Vector values = secure.values;
  pipeline.partitions.add_member(p, std::move(c));
  insert_by_doc(pipeline.weighted[p], std::move(weighted));
  insert_by_doc(pipeline.secure[p], std::move(secure));
  outcome.stats = pipeline.forest.trees[p].insert(doc.id, std::move(values));
  ++pipeline.updates;
  if (pipeline.encrypted.trees.size() == pipeline.forest.trees.size()) {
    Rng rng = update_rng(pipeline);
    pipeline.encrypted.trees[p].apply(pipeline.forest.trees[p], outcome.stats, pipeline.key[p], rng);
  }
  return outcome;
}

RemoveOutcome remove_document(Pipeline& pipeline, DocId doc) {
  const auto p = pipeline.partitions.partition_of(doc);
  if (!p) throw Error("doc_id " + std::to_string(doc) + " is not indexed");
  RemoveOutcome outcome;
  outcome.partition = *p;
  pipeline.partitions.remove_member(doc);
  erase_by_doc(pipeline.weighted[*p], doc);
  erase_by_doc(pipeline.secure[*p], doc);
  outcome.stats = pipeline.forest.trees[*p].erase(doc);
  ++pipeline.updates;
  if (pipeline.encrypted.trees.size() == pipeline.forest.trees.size()) {
    Rng rng = update_rng(pipeline);
    pipeline.encrypted.trees[*p].apply(pipeline.forest.trees[*p], outcome.stats, pipeline.key[*p],
                                       rng);
  }
  return outcome;
}

void extend_keywords(Pipeline& pipeline, PartitionId p, const std::vector<std::string>& words) {
  check_partition(pipeline, p);
  if (words.empty()) throw Error("no keywords to add");
  std::set<std::string> fresh;
  for (const auto& w : words) {
    if (pipeline.partitions.home(w)) throw Error("keyword '" + w + "' already exists");
    if (!fresh.insert(w).second) throw Error("keyword '" + w + "' listed twice");
  }
  const auto old_n = static_cast<Eigen::Index>(pipeline.real_dims(p));
  const auto z = static_cast<Eigen::Index>(words.size());
  const auto n = old_n + z;
  pipeline.partitions.add_keywords(p, words);

  Matrix corr = Matrix::Identity(n, n);
  corr.topLeftCorner(old_n, old_n) = pipeline.correlativity[p];
  pipeline.correlativity[p] = std::move(corr);
  auto grow = [&](Vector& v, double fill) {
    Vector g = Vector::Constant(n, fill);
    g.head(old_n) = v;
    v = std::move(g);
  };
  for (auto& w : pipeline.weights[p]) {
    grow(w.doc_frequency, 0.0);
    grow(w.alpha, 0.0);
    grow(w.akp, 0.0);
    grow(w.raw, 0.0);
    grow(w.normalized, 1.0);
  }
  grow(pipeline.max_raw[p], 0.0);
  for (auto& w : pipeline.weighted[p]) grow(w.values, 0.0);
  pipeline.secure[p] = pad_partition(pipeline.weighted[p], pipeline.noise[p]);

  // Same leaf order; the stored probe set gains zero entries for the new
  // keywords, which keeps every existing probe score unchanged.
  const auto& old_tree = pipeline.forest.trees[p];
  const Vector& old_probe = old_tree.probe_total();
  Vector probe = Vector::Zero(n + static_cast<Eigen::Index>(pipeline.noise[p].pseudo_count));
  probe.head(old_n) = old_probe.head(old_n);
  probe.tail(static_cast<Eigen::Index>(pipeline.noise[p].pseudo_count)) =
      old_probe.tail(static_cast<Eigen::Index>(pipeline.noise[p].pseudo_count));
  std::map<DocId, const SecureWeightedIndex*> by_doc;
  for (const auto& s : pipeline.secure[p]) by_doc[s.doc] = &s;
  std::vector<IndexTree::Leaf> leaves;
  for (DocId d : old_tree.leaf_order()) leaves.push_back({d, by_doc.at(d)->values});
  pipeline.forest.trees[p] = IndexTree::build(p, std::move(probe), std::move(leaves));

  ++pipeline.updates;
  if (pipeline.key.size() == pipeline.partitions.size()) {
    pipeline.key.partitions[p] =
        extend_key(pipeline.key[p], words.size(), mix_seed(pipeline.config.seed, pipeline.updates),
                   pipeline.config.key_options);
    if (pipeline.encrypted.trees.size() == pipeline.forest.trees.size()) {
      Rng rng = update_rng(pipeline);
      pipeline.encrypted.trees[p] = EncryptedTree::encrypt(pipeline.forest.trees[p], pipeline.key[p], rng);
    }
  }
}

UserGrant grant_by_attributes(const std::string& user, std::set<std::string> attributes,
                              const std::map<PartitionId, std::set<std::string>>& policy,
                              std::size_t partition_count) {
  UserGrant grant;
  grant.user = user;
  grant.attributes = std::move(attributes);
  for (PartitionId p = 0; p < partition_count; ++p) {
    const auto it = policy.find(p);
    const bool allowed =
        it == policy.end() || std::includes(grant.attributes.begin(), grant.attributes.end(),
                                            it->second.begin(), it->second.end());
    if (allowed) grant.partitions.insert(p);
  }
  return grant;
}

bool authorize(const UserGrant& grant, std::span<const PartitionId> requested) {
  return std::all_of(requested.begin(), requested.end(),
                     [&](PartitionId p) { return grant.partitions.contains(p); });
}

std::size_t SearchResult::total_visited() const {
  std::size_t total = 0;
  for (auto v : visited) total += v;
  return total;
}

SearchOutput CloudServer::search(std::span<const std::pair<PartitionId, Trapdoor>> trapdoors,
                                 std::size_t k, QuotaPolicy policy) const {
  if (trapdoors.empty()) return {};
  return gdfs_search(forest_, trapdoors, k, policy);
}

void CloudServer::replace_tree(PartitionId p, EncryptedTree tree) {
  forest_.trees.at(p) = std::move(tree);
}

SearchEngine::SearchEngine(Pipeline pipeline) : pipeline_(std::move(pipeline)) {
  if (pipeline_.encrypted.trees.size() != pipeline_.partitions.size()) {
    throw Error("search engine needs a pipeline built with encryption");
  }
  server_ = CloudServer(std::move(pipeline_.encrypted));
  pipeline_.encrypted = {};
}

void SearchEngine::register_user(UserGrant grant) {
  const std::string user = grant.user;
  grants_[user] = std::move(grant);
}

SearchResult SearchEngine::query(const SearchRequest& request, const std::string& user) {
  const auto start = std::chrono::steady_clock::now();
  const auto grant = grants_.find(user);
  if (grant == grants_.end()) throw AccessDenied("unknown user '" + user + "'");
  Rng rng = make_rng(pipeline_.config.seed, kQuerySalt + queries_++);
  const auto plan = plan_query(pipeline_, request.keywords, request.partitions, request.t, rng);
  if (!authorize(grant->second, plan.partitions)) {
    throw AccessDenied("user '" + user + "' is not granted every requested partition");
  }
  SearchResult result;
  result.partitions = plan.partitions;
  if (!plan.vectors.empty()) {
    const auto trapdoors = make_trapdoors(pipeline_, plan, rng);
    auto out = server_.search(trapdoors, request.k, request.policy);
    result.results = std::move(out.results);
    result.visited = std::move(out.visited);
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void SearchEngine::push_tree(PartitionId p, const UpdateStats& stats) {
  EncryptedTree tree = server_.tree(p);
  Rng rng = update_rng(pipeline_);
  tree.apply(pipeline_.forest.trees[p], stats, pipeline_.key[p], rng);
  server_.replace_tree(p, std::move(tree));
}

InsertOutcome SearchEngine::insert(const Document& doc) {
  auto outcome = insert_document(pipeline_, doc);
  push_tree(outcome.partition, outcome.stats);
  return outcome;
}

RemoveOutcome SearchEngine::remove(DocId doc) {
  auto outcome = remove_document(pipeline_, doc);
  push_tree(outcome.partition, outcome.stats);
  return outcome;
}

void SearchEngine::extend(PartitionId p, const std::vector<std::string>& words) {
  extend_keywords(pipeline_, p, words);
  Rng rng = update_rng(pipeline_);
  server_.replace_tree(p, EncryptedTree::encrypt(pipeline_.forest.trees[p], pipeline_.key[p], rng));
}

}  // namespace mrsm
