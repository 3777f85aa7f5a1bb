#include "mrsm/equilibrium.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <unordered_map>

#include "mrsm/eval.hpp"

namespace mrsm {
namespace {

double parse_number(std::string_view text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("bad number '" + std::string(text) + "' in grid");
  }
  return value;
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  const auto a = text.find(':');
  const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  if (b == std::string_view::npos) throw Error("grid must look like lo:hi:step");
  const double lo = parse_number(text.substr(0, a));
  const double hi = parse_number(text.substr(a + 1, b - a - 1));
  const double step = parse_number(text.substr(b + 1));
  if (!(step > 0.0) || !(lo >= 0.0) || !(hi >= lo)) {
    throw Error("grid needs 0 <= lo <= hi and step > 0");
  }
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) {
    grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return grid;
}

std::size_t argmax_f(std::span<const EquilibriumRow> rows) {
  if (rows.empty()) throw Error("no equilibrium rows");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].f > rows[best].f) best = i;
  }
  return best;
}

EquilibriumReport optimize_noise(const Pipeline& base, std::span<const KeywordQuery> queries,
                                 const EquilibriumConfig& config) {
  if (config.grid.empty()) throw Error("sigma grid is empty");
  if (queries.empty()) throw Error("no queries to evaluate");
  if (config.k == 0) throw Error("k must be at least 1");
  const std::size_t k = config.k;

  std::vector<std::vector<ScoredDoc>> exact;
  exact.reserve(queries.size());
  for (const auto& q : queries) exact.push_back(exact_ranking(base, q));

  std::vector<PartitionId> every;
  for (PartitionId p = 0; p < base.partitions.size(); ++p) every.push_back(p);

  EquilibriumReport report;
  for (const double sigma : config.grid) {
    const Pipeline pipeline = with_sigma(base, sigma);
    std::unordered_map<DocId, const SecureWeightedIndex*> padded;
    for (const auto& part : pipeline.secure) {
      for (const auto& s : part) padded.emplace(s.doc, &s);
    }

    double precision_sum = 0.0;
    double privacy_sum = 0.0;
    std::vector<double> padded_scores;
    std::vector<double> plain_scores;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      Rng rng = make_rng(config.seed, i);
      const auto plan = plan_query(pipeline, queries[i], every, std::nullopt, rng);
      const auto result = pipeline.config.encrypt
                              ? search_encrypted(pipeline, plan, k, rng, QuotaPolicy::full)
                              : search_plain(pipeline, plan, k, QuotaPolicy::full);
      const auto retrieved = doc_ids(result.results);
      const auto truth = exact_top_k(exact[i], k);
      const auto ranking = doc_ids(exact[i]);
      precision_sum += precision(retrieved, truth, k);
      privacy_sum += rank_privacy(retrieved, ranking, k);

      for (std::size_t r = 0; r < std::min(k, exact[i].size()); ++r) {
        const auto* s = padded.at(exact[i][r].doc);
        const Vector* q = nullptr;
        for (const auto& [p, v] : plan.vectors) {
          if (p == s->partition) q = &v;
        }
        padded_scores.push_back(s->values.dot(*q));
        plain_scores.push_back(exact[i][r].score);
      }
    }

    EquilibriumRow row;
    row.sigma = sigma;
    row.precision = precision_sum / static_cast<double>(queries.size());
    row.rank_privacy = privacy_sum / static_cast<double>(queries.size());
    row.f = equilibrium_score(100.0 * row.precision, 100.0 * row.rank_privacy);
    row.discriminator_accuracy = distinguishability(padded_scores, plain_scores, config.seed);
    report.rows.push_back(row);
  }
  report.best = argmax_f(report.rows);
  return report;
}

void write_equilibrium_csv(std::ostream& out, const EquilibriumReport& report) {
  out << "sigma,precision,rank_privacy,f,discriminator_accuracy,argmax\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out << r.sigma << ',' << r.precision << ',' << r.rank_privacy << ',' << r.f << ','
        << r.discriminator_accuracy << ',' << (i == report.best ? 1 : 0) << '\n';
  }
}

}  // namespace mrsm
