#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mrsm/engine.hpp"

namespace mrsm {

// Flat key=value settings; '#' starts a comment line.
using Settings = std::map<std::string, std::string>;

Settings read_settings(const std::filesystem::path& path);
void write_settings(const std::filesystem::path& path, const Settings& settings);

Settings settings_of(const PipelineConfig& config);
PipelineConfig config_from(const Settings& settings);

// A build directory. The corpus copy, run.conf and updates.log determine the
// pipeline completely; keys.bin, forest.enc, dictionary.txt and
// partitions.txt are the artifacts handed out to the key holder, the server
// and the operator.
struct Run {
  std::filesystem::path dir;
  Pipeline pipeline;
  std::vector<std::string> log;  // one update per line
};

Run create_run(const std::filesystem::path& dir, const std::vector<Document>& corpus,
               const PipelineConfig& config);

// Rebuilds from the corpus, replays the log and checks the result against
// forest.enc byte for byte.
Run open_run(const std::filesystem::path& dir);

// Applies one update, appends it to the log and rewrites the artifacts.
InsertOutcome run_insert(Run& run, const Document& doc);
RemoveOutcome run_remove(Run& run, DocId doc);
void run_extend(Run& run, PartitionId p, const std::vector<std::string>& words);

void save_artifacts(const Run& run);

// $MRSM_OUT_DIR when set, else "run".
std::filesystem::path default_run_dir();

}  // namespace mrsm
