#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mrsm/equilibrium.hpp"
#include "mrsm/eval.hpp"
#include "mrsm/padding.hpp"
#include "mrsm/synthetic.hpp"

using namespace mrsm;

namespace {

std::vector<WeightedIndex> random_weighted(std::size_t count, std::size_t dims,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<WeightedIndex> out;
  for (std::size_t i = 0; i < count; ++i) {
    WeightedIndex w;
    w.doc = static_cast<DocId>(i);
    w.values = Vector(static_cast<Eigen::Index>(dims));
    for (auto& x : w.values) x = u(rng) < 0.3 ? u(rng) : 0.0;
    out.push_back(std::move(w));
  }
  return out;
}

NoiseModel model(std::size_t u, std::size_t omega, double sigma, NoiseModel::Scale scale) {
  NoiseModel m;
  m.pseudo_count = u;
  m.active = omega;
  m.sigma = sigma;
  m.scale = scale;
  m.seed = 99;
  return m;
}

}  // namespace

TEST_SUITE("padding") {
  TEST_CASE("default model sizes") {
    const auto m = NoiseModel::for_partition(95, 0.1, std::nullopt, 0.05, 1);
    CHECK(m.pseudo_count == 10);
    CHECK(m.active == 5);
    CHECK(NoiseModel::for_partition(95, 0.1, 3, 0.05, 1).active == 3);
    CHECK_THROWS_AS(NoiseModel::for_partition(95, 0.1, 11, 0.05, 1), Error);
    CHECK_THROWS_AS(NoiseModel::for_partition(95, -0.1, std::nullopt, 0.05, 1), Error);
  }

  TEST_CASE("sigma zero pads zeros and U zero is the identity") {
    const auto w = random_weighted(50, 20, 1);
    for (const auto& s : pad_partition(w, model(6, 3, 0.0, NoiseModel::Scale::per_entry))) {
      CHECK(s.values.size() == 26);
      CHECK(s.values.tail(6).isZero());
    }
    const auto same = pad_partition(w, model(0, 0, 0.3, NoiseModel::Scale::per_entry));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(same[i].values == w[i].values);
  }

  TEST_CASE("per-entry noise has the requested spread") {
    const auto w = random_weighted(1000, 10, 2);
    const auto padded = pad_partition(w, model(20, 10, 0.05, NoiseModel::Scale::per_entry));
    std::vector<double> eps;
    for (const auto& s : padded) {
      for (Eigen::Index j = 10; j < s.values.size(); ++j) {
        if (s.values[j] != 0.0) eps.push_back(s.values[j]);
      }
    }
    CHECK(eps.size() == 10000);
    const double mean = std::accumulate(eps.begin(), eps.end(), 0.0) / static_cast<double>(eps.size());
    double var = 0.0;
    for (double e : eps) var += (e - mean) * (e - mean);
    const double sd = std::sqrt(var / static_cast<double>(eps.size() - 1));
    CHECK(std::abs(sd - 0.05) <= 0.005);
  }

  TEST_CASE("aggregate noise spreads sigma over the active entries") {
    const auto w = random_weighted(2000, 10, 3);
    const auto m = model(20, 9, 0.05, NoiseModel::Scale::aggregate);
    CHECK(m.entry_sigma() == doctest::Approx(0.05 / 3.0));
    std::vector<double> sums;
    for (const auto& s : pad_partition(w, m)) sums.push_back(s.values.tail(20).sum());
    double var = 0.0;
    for (double x : sums) var += x * x;
    CHECK(std::abs(std::sqrt(var / static_cast<double>(sums.size())) - 0.05) <= 0.005);
  }

  TEST_CASE("padding keeps the real prefix, places omega entries and is per document") {
    const auto w = random_weighted(200, 15, 4);
    const auto m = model(12, 5, 0.05, NoiseModel::Scale::per_entry);
    const auto padded = pad_partition(w, m);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(padded[i].real_dims == 15);
      CHECK(padded[i].values.head(15) == w[i].values);
      const auto tail = padded[i].values.tail(12);
      CHECK((tail.array() != 0.0).count() == 5);
      CHECK(tail.maxCoeff() <= 1.0);
      CHECK(tail.minCoeff() >= -1.0);
      CHECK(pad_index(w[i], m).values == padded[i].values);
    }
    // draws scale linearly with sigma
    auto doubled = m;
    doubled.sigma = 0.1;
    const auto twice = pad_index(w[7], doubled);
    CHECK((twice.values.tail(12) - 2.0 * padded[7].values.tail(12)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("uniform to normal moments") {
    const auto a = uniform_to_normal(0.0, 0.1, 3);
    CHECK(a.mean == 0.0);
    CHECK(a.variance == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(uniform_to_normal(0.2, 0.0, 4).variance == 0.0);
    CHECK(uniform_to_normal(0.2, 0.0, 4).mean == doctest::Approx(0.8));
    CHECK(std::sqrt(uniform_to_normal(0.0, std::sqrt(3.0) * 0.05, 1).variance) ==
          doctest::Approx(0.05).epsilon(1e-12));
    CHECK_THROWS_AS(uniform_to_normal(0.0, 0.1, 0), Error);
  }

  TEST_CASE("discriminator accuracy") {
    Rng rng(12);
    std::normal_distribution<double> n(0.5, 0.1);
    std::vector<double> a, b, shifted;
    for (int i = 0; i < 2000; ++i) {
      a.push_back(n(rng));
      b.push_back(n(rng));
    }
    for (double x : b) shifted.push_back(x + 10.0);
    CHECK(std::abs(distinguishability(a, b) - 0.5) <= 0.05);
    CHECK(distinguishability(shifted, b) >= 0.95);
    CHECK_THROWS_AS(distinguishability(std::vector<double>{1.0}, std::vector<double>{}), Error);
  }

  TEST_CASE("noise optimisation reports the brute-force argmax") {
    SyntheticCorpusConfig c;
    c.documents = 200;
    c.vocabulary = 500;
    c.seed = 21;
    const SyntheticCorpus corpus(c);
    PipelineConfig pc;
    pc.partitions = 2;
    pc.encrypt = false;
    const Pipeline base = build_pipeline(corpus.documents(), pc);
    const auto queries = corpus.sample_queries(30, 1, 3, 2);
    EquilibriumConfig ec;
    ec.grid = parse_grid("0:0.3:0.1");
    ec.k = 20;
    const auto report = optimize_noise(base, queries, ec);
    REQUIRE(report.rows.size() == 4);
    std::size_t best = 0;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const auto& r = report.rows[i];
      const double x = 100.0 * r.precision, y = 100.0 * r.rank_privacy;
      CHECK(r.f == x * x / 95.0 + y * y / 80.0);
      if (r.f > report.rows[best].f) best = i;
    }
    CHECK(report.best == best);
    // sigma 0 with pseudo entries still returns the exact top-k (noise is zero)
    CHECK(report.rows[0].precision == 1.0);
    CHECK(report.rows[0].rank_privacy == 0.0);
    CHECK(report.rows[3].precision < 1.0);
    CHECK(optimize_noise(base, queries, ec).rows[2].f == report.rows[2].f);
  }

  TEST_CASE("grid parsing") {
    const auto g = parse_grid("0.01:0.2:0.01");
    REQUIRE(g.size() == 20);
    CHECK(g.front() == 0.01);
    CHECK(g[4] == 0.05);
    CHECK(g.back() == 0.2);
    CHECK_THROWS_AS(parse_grid("0.1:0.05:0.01"), Error);
    CHECK_THROWS_AS(parse_grid("0.1:0.2"), Error);
    CHECK_THROWS_AS(parse_grid("a:b:c"), Error);
  }
}
