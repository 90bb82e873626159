#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcc/chunking.hpp"
#include "dcc/model.hpp"

namespace dcc {

struct DataConfig {
  /// Evaluation datasets (split 80/10/10 for probing, tuning and testing).
  std::size_t single_hop = 600;
  std::size_t multi_hop = 600;
  std::size_t min_len = 64;
  std::size_t max_len = 128;
  int chain_len = 2;
  /// Separate corpus used only to train the transformer, per task family.
  std::size_t model_corpus = 20000;
  double insufficient_fraction = 0.0;
  /// Curriculum share of shortened training contexts (see CorpusOptions).
  double short_view_fraction = 0.5;
  std::size_t short_view_extra = 3;
};

struct ProbeConfig {
  int epochs = 300;
  double lr = 0.01;
  double train_fraction = 0.8;
  std::size_t heads = 5;
};

struct EnsembleConfig {
  std::size_t pool = 8;
  std::size_t select = 4;
  int folds = 5;
};

struct EvalConfig {
  std::vector<double> tau_grid{0.5, 0.7, 0.9, 0.99};
  /// Subset of cutoff, full, static, bm25, oracle.
  std::vector<std::string> policies{"cutoff", "full", "static", "bm25", "oracle"};
  double static_keep = 0.8;
  std::size_t bm25_k = 8;
  int max_answer_tokens = 4;
  /// Largest validation accuracy loss (vs. full context) accepted when tuning tau.
  double tune_tolerance = 0.01;
  /// Strategies for the chunking comparison table.
  std::vector<ChunkingSpec> chunking_table{
      ChunkingSpec::boundary(2), ChunkingSpec::percent(0.01), ChunkingSpec::percent(0.05),
      ChunkingSpec::percent(0.10), ChunkingSpec::percent(0.20)};
  /// Training tasks per strategy in the chunking table (0: all).
  std::size_t table_train_tasks = 240;
  /// Fresh held-out tasks per family for the full-context competence check.
  std::size_t competence_tasks = 200;
  /// Include measured wall time in traces and reports (breaks byte-identity).
  bool timing = false;
};

struct RunConfig {
  std::uint64_t seed = 7;
  ModelConfig model;
  TrainHyper train;
  DataConfig data;
  ChunkingSpec chunking = ChunkingSpec::percent(0.10);
  ProbeConfig probe;
  EnsembleConfig ensemble;
  EvalConfig eval;
  std::string out = "out";

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses a JSON config. Missing keys take defaults; unknown keys, type
/// mismatches and out-of-range values throw ConfigError (with the line for
/// syntax errors). An empty document yields all defaults.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");

/// Throws ConfigError naming the path when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every field; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

}  // namespace dcc
