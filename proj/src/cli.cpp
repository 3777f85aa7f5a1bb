#include "mrsm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "mrsm/equilibrium.hpp"
#include "mrsm/eval.hpp"
#include "mrsm/run_store.hpp"
#include "mrsm/synthetic.hpp"

namespace mrsm::cli {
namespace {

namespace fs = std::filesystem;

struct PipelineFlags {
  std::size_t s = 0;
  double u_ratio = 0.1;
  std::size_t omega = 0;
  double sigma = 0.05;
  std::string sigma_scale = "aggregate";
  std::size_t r = 1000;
  std::size_t probe_min_terms = 1;
  std::size_t probe_max_terms = 3;
  double probe_zipf = 2.0;
  std::uint64_t probe_seed = 0;
  std::string leaf_order = "mlsb";
  std::uint64_t seed = 1;
  double condition_cap = 1e6;

  void attach(CLI::App& app) {
    app.add_option("--s", s, "partitions (0: one per thousand keywords)");
    app.add_option("--U-ratio", u_ratio, "pseudo keywords per real keyword")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--omega", omega, "active pseudo entries per index (0: half of U)");
    app.add_option("--sigma", sigma, "noise standard deviation")->check(CLI::NonNegativeNumber);
    app.add_option("--sigma-scale", sigma_scale, "aggregate or per-entry")
        ->check(CLI::IsMember({"aggregate", "per-entry"}));
    app.add_option("--R", r, "probe queries per tree")->check(CLI::PositiveNumber);
    app.add_option("--probe-min-terms", probe_min_terms)->check(CLI::PositiveNumber);
    app.add_option("--probe-max-terms", probe_max_terms)->check(CLI::PositiveNumber);
    app.add_option("--probe-zipf", probe_zipf)->check(CLI::NonNegativeNumber);
    app.add_option("--probe-seed", probe_seed);
    app.add_option("--leaf-order", leaf_order, "mlsb, random or grouped")
        ->check(CLI::IsMember({"mlsb", "random", "grouped"}));
    app.add_option("--seed", seed, "pipeline seed");
    app.add_option("--condition-cap", condition_cap)->check(CLI::PositiveNumber);
  }

  PipelineConfig config() const {
    Settings settings;
    settings["s"] = std::to_string(s);
    std::ostringstream num;
    num << std::setprecision(17);
    auto put = [&](const char* key, double v) {
      num.str("");
      num << v;
      settings[key] = num.str();
    };
    put("U-ratio", u_ratio);
    if (omega > 0) settings["omega"] = std::to_string(omega);
    put("sigma", sigma);
    settings["sigma-scale"] = sigma_scale;
    settings["R"] = std::to_string(r);
    settings["probe-min-terms"] = std::to_string(probe_min_terms);
    settings["probe-max-terms"] = std::to_string(probe_max_terms);
    put("probe-zipf", probe_zipf);
    settings["probe-seed"] = std::to_string(probe_seed);
    settings["leaf-order"] = leaf_order;
    settings["seed"] = std::to_string(seed);
    put("condition-cap", condition_cap);
    return config_from(settings);
  }
};

struct SyntheticFlags {
  std::size_t documents = 0;
  std::size_t vocabulary = 2000;
  std::size_t owners = 20;
  std::size_t topics = 4;
  std::uint64_t seed = 1;

  void attach(CLI::App& app) {
    app.add_option("--synthetic-docs", documents, "generate a synthetic corpus of this size");
    app.add_option("--synthetic-vocab", vocabulary)->check(CLI::PositiveNumber);
    app.add_option("--synthetic-owners", owners)->check(CLI::PositiveNumber);
    app.add_option("--synthetic-topics", topics)->check(CLI::PositiveNumber);
    app.add_option("--synthetic-seed", seed);
  }

  SyntheticCorpus make() const {
    SyntheticCorpusConfig c;
    c.documents = documents;
    c.vocabulary = vocabulary;
    c.owners = owners;
    c.topics = topics;
    c.seed = seed;
    return SyntheticCorpus(c);
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

// "neural,network" or "neural:2,network" (weight after the colon).
KeywordQuery parse_keywords(const std::string& text) {
  KeywordQuery q;
  for (const auto& item : split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      q.terms.emplace_back(item, 1.0);
    } else {
      q.terms.emplace_back(item.substr(0, colon), std::stod(item.substr(colon + 1)));
    }
  }
  if (q.terms.empty()) throw Error("no keywords given");
  return q;
}

std::vector<KeywordQuery> read_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::vector<KeywordQuery> out;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_keywords(line));
  }
  return out;
}

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

SearchEngine engine_for(const Run& run) {
  SearchEngine engine(run.pipeline);
  UserGrant grant;
  grant.user = "operator";
  for (PartitionId p = 0; p < run.pipeline.partitions.size(); ++p) grant.partitions.insert(p);
  engine.register_user(std::move(grant));
  return engine;
}

struct Options {
  PipelineFlags pipeline;
  SyntheticFlags synthetic;
  std::string corpus;
  std::string out_dir;
  std::string run_dir;
  std::string keywords;
  std::string partitions;
  std::string policy = "per-tree";
  std::size_t k = 10;
  std::size_t t = 0;
  std::size_t tune_k = 100;
  std::string grid = "0.01:0.2:0.01";
  std::string queries_file;
  std::size_t query_count = 100;
  std::uint64_t query_seed = 11;
  std::string csv;
  std::string csv_dir = ".";
  std::vector<std::string> benches;
  double holdout = 0.1;
  std::string insert_file;
  std::vector<DocId> remove_ids;
  std::optional<PartitionId> extend_partition;
  std::string extend_words;
  bool words = false;
};

void cmd_build(Options& o, std::ostream& out) {
  std::vector<Document> corpus;
  if (!o.corpus.empty()) {
    corpus = load_corpus(o.corpus);
  } else if (o.synthetic.documents > 0) {
    corpus = o.synthetic.make().documents();
  } else {
    throw Error("build needs --corpus or --synthetic-docs");
  }
  const fs::path dir = o.out_dir.empty() ? default_run_dir() : fs::path(o.out_dir);
  const Run run = create_run(dir, corpus, o.pipeline.config());
  const auto& p = run.pipeline;
  out << "run " << dir.string() << ": " << p.documents() << " documents, " << p.dictionary.size()
      << " keywords, " << p.partitions.size() << " partitions\n";
}

void cmd_search(Options& o, std::ostream& out) {
  const Run run = open_run(o.run_dir.empty() ? default_run_dir() : fs::path(o.run_dir));
  SearchEngine engine = engine_for(run);
  SearchRequest request;
  request.keywords = parse_keywords(o.keywords);
  request.k = o.k;
  if (o.t > 0) request.t = o.t;
  for (const auto& id : split_list(o.partitions)) request.partitions.push_back(std::stoul(id));
  request.policy = o.policy == "full" ? QuotaPolicy::full : QuotaPolicy::per_tree;
  const auto result = engine.query(request, "operator");
  out << "rank\tdoc_id\tscore\n" << std::setprecision(10);
  for (std::size_t i = 0; i < result.results.size(); ++i) {
    out << i + 1 << '\t' << result.results[i].doc << '\t' << result.results[i].score << '\n';
  }
  out << "# partitions";
  for (auto p : result.partitions) out << ' ' << p;
  out << "; visited " << result.total_visited() << " nodes\n";
}

void cmd_tune(Options& o, std::ostream& out) {
  const fs::path dir = o.run_dir.empty() ? default_run_dir() : fs::path(o.run_dir);
  const Run run = open_run(dir);
  const auto queries =
      o.queries_file.empty()
          ? sample_workload(run.pipeline, o.query_count, 1, 3, 1.0, o.query_seed)
          : read_queries(o.queries_file);
  EquilibriumConfig config;
  config.grid = parse_grid(o.grid);
  config.k = o.tune_k;
  config.seed = o.query_seed;
  const auto report = optimize_noise(run.pipeline, queries, config);
  const fs::path csv = o.csv.empty() ? dir / "fig3_equilibrium.csv" : fs::path(o.csv);
  auto file = open_csv(csv);
  write_equilibrium_csv(file, report);
  const auto& best = report.optimum();
  out << "wrote " << csv.string() << "; best sigma " << best.sigma << " (precision "
      << best.precision << ", rank privacy " << best.rank_privacy << ", f " << best.f << ")\n";
}

void cmd_bench(Options& o, std::ostream& out) {
  std::vector<Document> corpus;
  std::vector<KeywordQuery> queries;
  PipelineConfig config = o.pipeline.config();
  if (!o.run_dir.empty()) {
    const Run run = open_run(o.run_dir);
    config = run.pipeline.config;
    corpus = load_corpus((fs::path(o.run_dir) / "corpus.jsonl").string());
    queries = sample_workload(run.pipeline, o.query_count, 1, 3, 1.0, o.query_seed);
  } else if (o.synthetic.documents > 0) {
    const auto synthetic = o.synthetic.make();
    corpus = synthetic.documents();
    queries = synthetic.sample_queries(o.query_count, 1, 3, o.query_seed);
  } else {
    throw Error("bench needs --run or --synthetic-docs");
  }
  if (!o.queries_file.empty()) queries = read_queries(o.queries_file);
  const fs::path dir(o.csv_dir);
  auto wants = [&](const char* name) {
    return o.benches.empty() || std::find(o.benches.begin(), o.benches.end(), name) != o.benches.end();
  };
  if (wants("tree-speed")) {
    const auto rows = bench_tree_orders(corpus, config, queries, o.k);
    auto file = open_csv(dir / "fig4_tree_speed.csv");
    write_tree_speed_csv(file, rows);
    write_tree_speed_csv(out, rows);
  }
  if (wants("scaling")) {
    if (config.partitions == 0) config.partitions = 4;
    const auto rows = bench_forest_vs_tree(corpus, config, queries, o.k);
    auto file = open_csv(dir / "fig5_scaling.csv");
    write_scaling_csv(file, rows);
    write_scaling_csv(out, rows);
  }
  if (wants("update")) {
    const auto held = std::max<std::size_t>(
        1, static_cast<std::size_t>(o.holdout * static_cast<double>(corpus.size())));
    if (held >= corpus.size()) throw Error("corpus too small to hold out insert documents");
    const std::vector<Document> base(corpus.begin(), corpus.end() - static_cast<long>(held));
    const std::vector<Document> inserts(corpus.end() - static_cast<long>(held), corpus.end());
    const UpdateReport report = bench_update(base, config, inserts);
    auto file = open_csv(dir / "update_cost.csv");
    write_update_csv(file, std::span(&report, 1));
    write_update_csv(out, std::span(&report, 1));
  }
}

void cmd_update(Options& o, std::ostream& out) {
  Run run = open_run(o.run_dir.empty() ? default_run_dir() : fs::path(o.run_dir));
  bool any = false;
  if (!o.insert_file.empty()) {
    for (const auto& doc : load_corpus(o.insert_file)) {
      const auto r = run_insert(run, doc);
      out << "insert " << doc.id << " -> partition " << r.partition << ", " << r.stats.touched
          << " nodes re-encrypted" << (r.stats.full_rebuild ? " (full rebuild)" : "") << '\n';
    }
    any = true;
  }
  for (DocId id : o.remove_ids) {
    const auto r = run_remove(run, id);
    out << "remove " << id << " <- partition " << r.partition << ", " << r.stats.touched
        << " nodes re-encrypted" << (r.stats.full_rebuild ? " (full rebuild)" : "") << '\n';
    any = true;
  }
  if (o.extend_partition) {
    const auto words = split_list(o.extend_words);
    run_extend(run, *o.extend_partition, words);
    out << "extend partition " << *o.extend_partition << " by " << words.size()
        << " keywords; partition re-keyed and re-encrypted\n";
    any = true;
  }
  if (!any) throw Error("update needs --insert, --remove or --extend-partition");
}

void cmd_inspect(Options& o, std::ostream& out) {
  const Run run = open_run(o.run_dir.empty() ? default_run_dir() : fs::path(o.run_dir));
  const auto& p = run.pipeline;
  out << "documents " << p.documents() << "\nkeywords " << p.dictionary.size() << "\npartitions "
      << p.partitions.size() << "\nupdates " << run.log.size() << '\n';
  out << "partition\tdocuments\towners\tkeywords\tpseudo\tomega\ttree_height\n";
  for (PartitionId i = 0; i < p.partitions.size(); ++i) {
    out << i << '\t' << p.partitions[i].indexes.size() << '\t' << p.weights[i].size() << '\t'
        << p.real_dims(i) << '\t' << p.noise[i].pseudo_count << '\t' << p.noise[i].active << '\t'
        << p.forest.trees[i].height() << '\n';
  }
  if (o.words) {
    for (PartitionId i = 0; i < p.partitions.size(); ++i) {
      out << "# partition " << i << '\n';
      for (const auto& w : p.partitions[i].words) out << w << '\n';
    }
  }
}

// Moves the settings of `--config FILE` into the argument list as
// --key=value, skipping keys the command line already sets.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (!path) return out;
  const std::vector<std::string> given = out;
  for (const auto& [key, value] : read_settings(*path)) {
    const std::string flag = "--" + key;
    const bool set = std::any_of(given.begin(), given.end(), [&](const std::string& a) {
      return a == flag || a.starts_with(flag + "=");
    });
    if (!set) out.push_back(flag + "=" + value);
  }
  return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Multi-owner encrypted ranked keyword search", "mrsm");
  app.require_subcommand(1);
  Options o;

  auto* build = app.add_subcommand("build", "corpus -> encrypted forest and keys");
  std::string config_file;
  build->add_option("--config", config_file, "key=value settings file; flags win");
  build->add_option("--corpus", o.corpus, "JSON-lines corpus")->check(CLI::ExistingFile);
  build->add_option("--out", o.out_dir, "run directory (default $MRSM_OUT_DIR or ./run)");
  o.pipeline.attach(*build);
  o.synthetic.attach(*build);

  auto* search = app.add_subcommand("search", "keywords -> ranked doc ids");
  search->add_option("--run", o.run_dir);
  search->add_option("--keywords", o.keywords, "comma separated, word[:weight]")->required();
  search->add_option("--k", o.k)->check(CLI::PositiveNumber);
  search->add_option("--t", o.t, "partitions to search (0: every covering one)");
  search->add_option("--partitions", o.partitions, "explicit comma separated partition ids");
  search->add_option("--policy", o.policy)->check(CLI::IsMember({"per-tree", "full"}));

  auto* tune = app.add_subcommand("tune", "sigma sweep -> equilibrium CSV");
  tune->add_option("--run", o.run_dir);
  tune->add_option("--grid", o.grid, "lo:hi:step");
  tune->add_option("--k", o.tune_k)->check(CLI::PositiveNumber);
  tune->add_option("--queries", o.queries_file, "one keyword list per line");
  tune->add_option("--query-count", o.query_count)->check(CLI::PositiveNumber);
  tune->add_option("--query-seed", o.query_seed);
  tune->add_option("--csv", o.csv, "output (default <run>/fig3_equilibrium.csv)");

  auto* bench = app.add_subcommand("bench", "leaf order, forest scaling and update benchmarks");
  bench->add_option("--config", config_file, "key=value settings file; flags win");
  bench->add_option("--run", o.run_dir, "benchmark this run's corpus and settings");
  bench->add_option("--only", o.benches, "tree-speed, scaling, update")
      ->check(CLI::IsMember({"tree-speed", "scaling", "update"}));
  bench->add_option("--k", o.k)->check(CLI::PositiveNumber);
  bench->add_option("--queries", o.queries_file);
  bench->add_option("--query-count", o.query_count)->check(CLI::PositiveNumber);
  bench->add_option("--query-seed", o.query_seed);
  bench->add_option("--csv-dir", o.csv_dir);
  bench->add_option("--holdout", o.holdout, "share of the corpus inserted in the update bench")
      ->check(CLI::Range(0.0, 0.5));
  o.pipeline.attach(*bench);
  o.synthetic.attach(*bench);

  auto* update = app.add_subcommand("update", "insert, remove or add keywords");
  update->add_option("--run", o.run_dir);
  update->add_option("--insert", o.insert_file, "JSON-lines documents")->check(CLI::ExistingFile);
  update->add_option("--remove", o.remove_ids, "doc ids")->delimiter(',');
  update->add_option("--extend-partition", o.extend_partition);
  update->add_option("--keywords", o.extend_words, "new keywords, comma separated");

  auto* inspect = app.add_subcommand("inspect", "partition and dictionary statistics");
  inspect->add_option("--run", o.run_dir);
  inspect->add_flag("--words", o.words, "dump every sub-dictionary");

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  try {
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (build->parsed()) cmd_build(o, out);
    if (search->parsed()) cmd_search(o, out);
    if (tune->parsed()) cmd_tune(o, out);
    if (bench->parsed()) cmd_bench(o, out);
    if (update->parsed()) cmd_update(o, out);
    if (inspect->parsed()) cmd_inspect(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace mrsm::cli
