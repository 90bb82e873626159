#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dcc/chunking.hpp"
#include "dcc/model.hpp"
#include "dcc/sufficiency.hpp"
#include "dcc/tasks.hpp"

namespace dcc {

struct CutoffConfig {
  double tau = 0.9;
  ChunkingSpec chunking;
  /// Must equal the ensemble's head set when non-empty.
  std::vector<HeadTap> taps;
  int max_answer_tokens = 4;
};

struct StepRecord {
  std::size_t chunk_index = 0;  // 1-based
  double confidence = 0;
  int decision = 0;
};

/// Per-phase cost: context forwarding, classifier scoring, generation.
struct PhaseCost {
  double context = 0;
  double classifier = 0;
  double generation = 0;

  double total() const noexcept { return context + classifier + generation; }
};

struct CutoffTrace {
  std::string task_id;
  std::string policy;
  std::string setting;  // policy parameter echo, e.g. "keep=0.8"
  double tau = -1;
  std::vector<StepRecord> steps;
  std::size_t k = 0;  // chunks consumed (m when nothing fired)
  std::size_t m = 0;
  std::size_t context_tokens = 0;    // context tokens forwarded
  std::size_t generated_tokens = 0;
  std::size_t tokens_processed = 0;  // context_tokens + generated_tokens
  std::size_t tokens_full = 0;       // full context length + generated_tokens
  bool correct = false;
  PhaseCost flops;    // analytic, deterministic
  PhaseCost seconds;  // measured wall time
};

struct AnswerResult {
  std::string task_id;
  std::string policy;
  std::vector<int> generated;
  bool exact_match = false;
};

struct Episode {
  AnswerResult answer;
  CutoffTrace trace;
};

/// Generated tokens up to (excluding) the first END equal the gold answer.
bool exact_match(std::span<const int> generated, std::span<const int> answer);

/// Dynamic cutoff: forward the query header, then chunk deltas with cache
/// reuse; after each chunk score the ensemble on the tapped heads and stop at
/// the first confidence >= tau. The answer is generated from the reused
/// cache (the whole context when nothing fired). Throws ConfigError when
/// config.taps disagrees with the ensemble heads.
Episode run_cutoff(const Transformer& model, const EnsembleModel& ensemble,
                   const TaskInstance& task, const CutoffConfig& config);

/// Whole context in a single pass.
Episode run_full(const Transformer& model, const TaskInstance& task, int max_answer_tokens = 4);

/// Keeps the first round(rho * len) context tokens; rho in (0, 1].
Episode run_static_truncate(const Transformer& model, const TaskInstance& task, double rho,
                            int max_answer_tokens = 4);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// BM25 score of every chunk against the query terms (unique terms),
/// idf = ln((N - n + 0.5) / (n + 0.5) + 1).
std::vector<double> bm25_scores(std::span<const std::vector<int>> chunks,
                                std::span<const int> query, const Bm25Params& params = {});

/// Indices of the k highest-scoring chunks (ties to the earlier chunk),
/// returned in original order.
std::vector<std::size_t> bm25_top_k(std::span<const double> scores, std::size_t k);

/// Keeps the k_docs best BM25 chunks in original order.
Episode run_bm25_topk(const Transformer& model, const TaskInstance& task,
                      const ChunkingSpec& chunking, std::size_t k_docs,
                      int max_answer_tokens = 4);

/// Stops at the first chunk whose gold label is 1.
Episode run_oracle(const Transformer& model, const TaskInstance& task,
                   const ChunkingSpec& chunking, int max_answer_tokens = 4);

/// Analytic multiply-add count of one forward call.
double forward_flops(const ModelConfig& cfg, std::size_t offset, std::size_t n_new,
                     std::size_t logits_rows);

/// One JSON object per line: {task_id, policy, setting, tau, k, m,
/// confidences[], decisions[], context_tokens, generated[], tokens_processed,
/// tokens_full, correct, phase_flops, [phase_seconds]}.
std::string episode_to_json_line(const Episode& episode, bool include_wall_time);
/// Throws FormatError for malformed records.
Episode episode_from_json_line(const std::string& line);

}  // namespace dcc
