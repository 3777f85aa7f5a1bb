#include "mrsm/run_store.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mrsm {
namespace fs = std::filesystem;

namespace {

constexpr const char* kConf = "run.conf";
constexpr const char* kCorpus = "corpus.jsonl";
constexpr const char* kLog = "updates.log";
constexpr const char* kKeys = "keys.bin";
constexpr const char* kForest = "forest.enc";
constexpr const char* kDictionary = "dictionary.txt";
constexpr const char* kPartitions = "partitions.txt";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_value(const Settings& settings, const std::string& key, T fallback) {
  const auto it = settings.find(key);
  if (it == settings.end()) return fallback;
  T value{};
  const auto& text = it->second;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("bad value '" + text + "' for " + key);
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

const char* order_name(LeafOrder order) {
  switch (order) {
    case LeafOrder::likelihood: return "mlsb";
    case LeafOrder::random: return "random";
    case LeafOrder::grouped_by_owner: return "grouped";
  }
  return "mlsb";
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string forest_bytes(const EncryptedForest& forest) {
  std::ostringstream out(std::ios::binary);
  write_forest(out, forest);
  return out.str();
}

void apply_line(Pipeline& pipeline, const std::string& line) {
  std::istringstream in(line);
  std::string verb;
  in >> verb;
  if (verb == "insert") {
    std::string json;
    std::getline(in, json);
    insert_document(pipeline, document_from_json(trim(json)));
  } else if (verb == "remove") {
    DocId doc = 0;
    if (!(in >> doc)) throw Error("bad update line: " + line);
    remove_document(pipeline, doc);
  } else if (verb == "extend") {
    PartitionId p = 0;
    if (!(in >> p)) throw Error("bad update line: " + line);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    extend_keywords(pipeline, p, words);
  } else {
    throw Error("bad update line: " + line);
  }
}

void append_log(Run& run, std::string line) {
  std::ofstream out(run.dir / kLog, std::ios::app);
  if (!out) throw Error("cannot append to " + (run.dir / kLog).string());
  out << line << '\n';
  run.log.push_back(std::move(line));
}

}  // namespace

Settings read_settings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  Settings settings;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw Error(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    settings[trim(text.substr(0, eq))] = trim(text.substr(eq + 1));
  }
  return settings;
}

void write_settings(const fs::path& path, const Settings& settings) {
  auto out = open_out(path);
  for (const auto& [key, value] : settings) out << key << '=' << value << '\n';
}

Settings settings_of(const PipelineConfig& config) {
  Settings s;
  s["s"] = std::to_string(config.partitions);
  s["U-ratio"] = format_double(config.pseudo_ratio);
  if (config.omega) s["omega"] = std::to_string(*config.omega);
  s["sigma"] = format_double(config.sigma);
  s["sigma-scale"] =
      config.sigma_scale == NoiseModel::Scale::aggregate ? "aggregate" : "per-entry";
  s["R"] = std::to_string(config.probes.count);
  s["probe-min-terms"] = std::to_string(config.probes.min_terms);
  s["probe-max-terms"] = std::to_string(config.probes.max_terms);
  s["probe-zipf"] = format_double(config.probes.zipf);
  s["probe-seed"] = std::to_string(config.probes.seed);
  s["leaf-order"] = order_name(config.leaf_order);
  s["seed"] = std::to_string(config.seed);
  s["condition-cap"] = format_double(config.key_options.condition_cap);
  return s;
}

PipelineConfig config_from(const Settings& settings) {
  PipelineConfig c;
  c.partitions = parse_value(settings, "s", c.partitions);
  c.pseudo_ratio = parse_value(settings, "U-ratio", c.pseudo_ratio);
  if (settings.contains("omega")) c.omega = parse_value<std::size_t>(settings, "omega", 0);
  c.sigma = parse_value(settings, "sigma", c.sigma);
  if (const auto it = settings.find("sigma-scale"); it != settings.end()) {
    if (it->second == "aggregate") {
      c.sigma_scale = NoiseModel::Scale::aggregate;
    } else if (it->second == "per-entry") {
      c.sigma_scale = NoiseModel::Scale::per_entry;
    } else {
      throw Error("sigma-scale must be aggregate or per-entry");
    }
  }
  c.probes.count = parse_value(settings, "R", c.probes.count);
  c.probes.min_terms = parse_value(settings, "probe-min-terms", c.probes.min_terms);
  c.probes.max_terms = parse_value(settings, "probe-max-terms", c.probes.max_terms);
  c.probes.zipf = parse_value(settings, "probe-zipf", c.probes.zipf);
  c.probes.seed = parse_value(settings, "probe-seed", c.probes.seed);
  if (const auto it = settings.find("leaf-order"); it != settings.end()) {
    if (it->second == "mlsb") {
      c.leaf_order = LeafOrder::likelihood;
    } else if (it->second == "random") {
      c.leaf_order = LeafOrder::random;
    } else if (it->second == "grouped") {
      c.leaf_order = LeafOrder::grouped_by_owner;
    } else {
      throw Error("leaf-order must be mlsb, random or grouped");
    }
  }
  c.seed = parse_value(settings, "seed", c.seed);
  c.key_options.condition_cap = parse_value(settings, "condition-cap", c.key_options.condition_cap);
  c.encrypt = true;
  return c;
}

void save_artifacts(const Run& run) {
  const auto& p = run.pipeline;
  {
    auto out = open_out(run.dir / kKeys, true);
    write_key(out, p.key);
  }
  {
    auto out = open_out(run.dir / kForest, true);
    write_forest(out, p.encrypted);
  }
  {
    auto out = open_out(run.dir / kDictionary);
    write_dictionary(out, p.dictionary);
  }
  {
    auto out = open_out(run.dir / kPartitions);
    write_partitions(out, p.partitions);
  }
}

Run create_run(const fs::path& dir, const std::vector<Document>& corpus,
               const PipelineConfig& config) {
  PipelineConfig c = config;
  c.encrypt = true;
  Run run;
  run.dir = dir;
  run.pipeline = build_pipeline(corpus, c);
  fs::create_directories(dir);
  write_settings(dir / kConf, settings_of(c));
  {
    auto out = open_out(dir / kCorpus);
    write_corpus(out, corpus);
  }
  open_out(dir / kLog);
  save_artifacts(run);
  return run;
}

Run open_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("no run directory at " + dir.string());
  Run run;
  run.dir = dir;
  const auto corpus = load_corpus((dir / kCorpus).string());
  run.pipeline = build_pipeline(corpus, config_from(read_settings(dir / kConf)));
  if (std::ifstream log(dir / kLog); log) {
    for (std::string line; std::getline(log, line);) {
      if (trim(line).empty()) continue;
      apply_line(run.pipeline, line);
      run.log.push_back(line);
    }
  }
  std::ifstream stored(dir / kForest, std::ios::binary);
  if (!stored) throw Error("cannot read " + (dir / kForest).string());
  std::ostringstream bytes;
  bytes << stored.rdbuf();
  if (bytes.str() != forest_bytes(run.pipeline.encrypted)) {
    throw Error(dir.string() + ": " + kForest + " does not match the replayed build");
  }
  return run;
}

InsertOutcome run_insert(Run& run, const Document& doc) {
  auto outcome = insert_document(run.pipeline, doc);
  append_log(run, "insert " + document_to_json(doc));
  save_artifacts(run);
  return outcome;
}

RemoveOutcome run_remove(Run& run, DocId doc) {
  auto outcome = remove_document(run.pipeline, doc);
  append_log(run, "remove " + std::to_string(doc));
  save_artifacts(run);
  return outcome;
}

void run_extend(Run& run, PartitionId p, const std::vector<std::string>& words) {
  extend_keywords(run.pipeline, p, words);
  std::string line = "extend " + std::to_string(p);
  for (const auto& w : words) line += " " + w;
  append_log(run, std::move(line));
  save_artifacts(run);
}

fs::path default_run_dir() {
  if (const char* env = std::getenv("MRSM_OUT_DIR"); env && *env) return env;
  return "run";
}

}  // namespace mrsm
