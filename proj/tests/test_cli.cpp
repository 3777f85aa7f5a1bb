#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "mrsm/cli.hpp"
#include "mrsm/equilibrium.hpp"
#include "mrsm/eval.hpp"
#include "mrsm/run_store.hpp"
#include "mrsm/synthetic.hpp"

using namespace mrsm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh scratch directory removed on scope exit.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name)
      : dir(fs::temp_directory_path() / ("mrsm_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

SyntheticCorpus cli_corpus() {
  SyntheticCorpusConfig c;
  c.documents = 160;
  c.vocabulary = 700;
  c.owners = 8;
  c.seed = 21;
  return SyntheticCorpus(c);
}

std::string write_corpus_file(const Scratch& s) {
  const auto path = s / "docs.jsonl";
  std::ofstream out(path);
  write_corpus(out, cli_corpus().documents());
  return path;
}

std::vector<std::vector<std::string>> table_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream l(line);
    for (std::string cell; std::getline(l, cell, '\t');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream l(line);
    for (std::string cell; std::getline(l, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const std::vector<std::string> kSmall{"--s", "2", "--R", "100", "--seed", "5"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("build writes the run artifacts") {
    Scratch s("build");
    const auto corpus = write_corpus_file(s);
    const auto r = run_cli(with({"build", "--corpus", corpus, "--sigma", "0.05", "--out", s / "run"},
                                kSmall));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("160 documents") != std::string::npos);
    for (const char* f : {"run.conf", "corpus.jsonl", "keys.bin", "forest.enc", "dictionary.txt",
                          "partitions.txt"}) {
      CHECK(fs::exists(s.dir / "run" / f));
    }
    const auto settings = read_settings(s.dir / "run" / "run.conf");
    CHECK(settings.at("s") == "2");
    CHECK(settings.at("seed") == "5");

    const auto inspect = run_cli({"inspect", "--run", s / "run"});
    CHECK(inspect.code == 0);
    CHECK(inspect.out.find("documents 160") != std::string::npos);
  }

  TEST_CASE("search prints the engine's ranking") {
    Scratch s("search");
    const auto corpus = write_corpus_file(s);
    REQUIRE(run_cli(with({"build", "--corpus", corpus, "--out", s / "run"}, kSmall)).code == 0);
    const Run run = open_run(s.dir / "run");
    const auto query = sample_workload(run.pipeline, 1, 2, 2, 1.0, 3)[0];
    const std::string keywords = query.terms[0].first + "," + query.terms[1].first;

    const auto r = run_cli({"search", "--run", s / "run", "--keywords", keywords, "--k", "10",
                            "--t", "2"});
    REQUIRE(r.code == 0);
    const auto rows = table_rows(r.out);
    REQUIRE(rows.size() >= 2);
    CHECK(rows[0] == std::vector<std::string>{"rank", "doc_id", "score"});

    // oracle: the same request straight through the engine
    SearchEngine engine(run.pipeline);
    UserGrant grant{"me", {}, {0, 1}};
    engine.register_user(grant);
    SearchRequest req;
    req.keywords = KeywordQuery::of({query.terms[0].first, query.terms[1].first});
    req.k = 10;
    req.t = 2;
    const auto expected = engine.query(req, "me");
    REQUIRE(rows.size() == expected.results.size() + 1);
    for (std::size_t i = 0; i < expected.results.size(); ++i) {
      CHECK(rows[i + 1][0] == std::to_string(i + 1));
      CHECK(std::stoll(rows[i + 1][1]) == expected.results[i].doc);
      CHECK(std::stod(rows[i + 1][2]) ==
            doctest::Approx(expected.results[i].score).epsilon(1e-8));
    }
    CHECK(r.out.find("visited") != std::string::npos);
  }

  TEST_CASE("tune marks the argmax row of the noise sweep") {
    Scratch s("tune");
    const auto corpus = write_corpus_file(s);
    REQUIRE(run_cli(with({"build", "--corpus", corpus, "--out", s / "run"}, kSmall)).code == 0);
    const auto r = run_cli({"tune", "--run", s / "run", "--grid", "0.01:0.2:0.05", "--k", "20",
                            "--query-count", "15", "--csv", s / "eq.csv"});
    REQUIRE(r.code == 0);
    const auto rows = csv_rows(s / "eq.csv");
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == std::vector<std::string>{"sigma", "precision", "rank_privacy", "f",
                                              "discriminator_accuracy", "argmax"});

    const Run run = open_run(s.dir / "run");
    EquilibriumConfig config;
    config.grid = parse_grid("0.01:0.2:0.05");
    config.k = 20;
    config.seed = 11;
    const auto report =
        optimize_noise(run.pipeline, sample_workload(run.pipeline, 15, 1, 3, 1.0, 11), config);
    int marked = 0;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const auto& row = rows[i + 1];
      CHECK(std::stod(row[0]) == doctest::Approx(report.rows[i].sigma));
      CHECK(std::stod(row[1]) == doctest::Approx(report.rows[i].precision));
      CHECK(std::stod(row[3]) == doctest::Approx(report.rows[i].f));
      if (row[5] == "1") {
        ++marked;
        CHECK(i == report.best);
      }
    }
    CHECK(marked == 1);
  }

  TEST_CASE("updates persist across invocations") {
    Scratch s("update");
    const auto corpus = write_corpus_file(s);
    REQUIRE(run_cli(with({"build", "--corpus", corpus, "--out", s / "run"}, kSmall)).code == 0);
    {
      std::ofstream out(s / "new.jsonl");
      write_corpus(out, cli_corpus().sample_documents(3, 50000, 4));
    }
    auto r = run_cli({"update", "--run", s / "run", "--insert", s / "new.jsonl", "--remove", "1,2"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("insert 50000") != std::string::npos);
    CHECK(r.out.find("remove 2") != std::string::npos);
    r = run_cli({"update", "--run", s / "run", "--extend-partition", "0", "--keywords", "zzq1"});
    REQUIRE(r.code == 0);

    const Run run = open_run(s.dir / "run");
    CHECK(run.log.size() == 6);
    CHECK(run.pipeline.documents() == 161);
    CHECK(run.pipeline.partitions.home("zzq1"));
    CHECK(run_cli({"update", "--run", s / "run", "--remove", "1"}).code == 1);
  }

  TEST_CASE("bad input exits 2 for usage errors and 1 for runtime errors") {
    Scratch s("errors");
    auto r = run_cli({"frobnicate"});
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
    r = run_cli({"build", "--no-such-flag", "1"});
    CHECK(r.code == 2);
    r = run_cli({"search", "--run", s / "run"});  // --keywords is required
    CHECK(r.code == 2);
    r = run_cli({"search", "--run", s / "missing", "--keywords", "a"});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: ", 0) == 0);
    r = run_cli({"build", "--out", s / "run"});
    CHECK(r.code == 1);
    r = run_cli({"build", "--corpus", s / "absent.jsonl"});
    CHECK(r.code == 2);
    r = run_cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("build") != std::string::npos);
  }

  TEST_CASE("config file supplies settings and flags override it") {
    Scratch s("config");
    const auto corpus = write_corpus_file(s);
    {
      std::ofstream conf(s / "my.conf");
      conf << "# defaults\ns=3\nseed=9\nR=100\nsigma=0.07\n";
    }
    REQUIRE(run_cli({"build", "--config", s / "my.conf", "--corpus", corpus, "--seed", "4",
                     "--out", s / "run"})
                .code == 0);
    const auto settings = read_settings(s.dir / "run" / "run.conf");
    CHECK(settings.at("s") == "3");
    CHECK(settings.at("seed") == "4");
    CHECK(std::stod(settings.at("sigma")) == 0.07);
    CHECK(run_cli({"build", "--config", s / "nope.conf", "--corpus", corpus}).code == 1);
  }

  TEST_CASE("the output directory defaults to MRSM_OUT_DIR") {
    Scratch s("env");
    const auto corpus = write_corpus_file(s);
    ::setenv("MRSM_OUT_DIR", (s / "envrun").c_str(), 1);
    const auto r = run_cli(with({"build", "--corpus", corpus}, kSmall));
    const auto searched = run_cli({"search", "--keywords", "anything"});
    ::unsetenv("MRSM_OUT_DIR");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(s.dir / "envrun" / "forest.enc"));
    CHECK(searched.code == 0);
  }
}
