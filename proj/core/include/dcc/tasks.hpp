#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcc/model.hpp"

namespace dcc {

struct ChunkPlan;

/// One synthetic retrieval instance. The context is a stream of three-token
/// statements `key slot SEP`; `slot` is a value token for a terminal fact and
/// a key token for an intermediate chain link.
struct TaskInstance {
  std::string id;
  std::vector<int> context;
  std::vector<int> query;
  std::vector<int> answer;
  /// Index of the last token of the latest fact needed for the answer.
  std::size_t gold_end = 0;
  int hops = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

/// Inclusive range of context lengths, sampled uniformly per instance.
struct LengthRange {
  std::size_t min_len = 0;
  std::size_t max_len = 0;
};

inline constexpr std::size_t kStatementLen = 3;
inline constexpr std::size_t kMinContextLen = 32;

/// Single-passage needle tasks: every statement maps a distinct key to a
/// value; the queried statement sits at a uniform slot. Instance i uses the
/// seed derive_seed(seed, i).
std::vector<TaskInstance> gen_single_hop(std::size_t n, std::size_t ctx_len, std::uint64_t seed);
std::vector<TaskInstance> gen_single_hop(std::size_t n, LengthRange lengths, std::uint64_t seed);

/// Dependent key-value chains key1 -> key2 -> ... -> value among distractor
/// chains of the same length. The latest link sits at a uniform slot; the
/// other links are spread uniformly before it. The answer is the chain's
/// slots in order (key2 .. value), so each answer token needs one lookup.
std::vector<TaskInstance> gen_multi_hop_kv(std::size_t n, std::size_t ctx_len, int chain_len,
                                           std::uint64_t seed);
std::vector<TaskInstance> gen_multi_hop_kv(std::size_t n, LengthRange lengths, int chain_len,
                                           std::uint64_t seed);

/// Per-chunk sufficiency: 1 for the chunk holding gold_end and every later
/// chunk, 0 before it.
std::vector<int> derive_labels(const TaskInstance& task, const ChunkPlan& plan);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Shuffled 80/10/10 split (floors for train and validation). Needs >= 10 tasks.
DatasetSplit split_dataset(const std::vector<TaskInstance>& tasks, std::uint64_t seed);

/// Tasks whose ids are listed, in list order.
std::vector<TaskInstance> select_tasks(const std::vector<TaskInstance>& tasks,
                                       const std::vector<std::string>& ids);

// Prompt layout -------------------------------------------------------------
//
//   [BOS QRY q.. SEP] context [QRY q.. ANS] answer.. END
//
// The query header is forwarded before the context so that per-chunk
// activations are conditioned on the question; the query is repeated after
// the (possibly truncated) context to open the answer.

std::vector<int> query_header(const TaskInstance& task);
std::vector<int> answer_prompt(const TaskInstance& task);

/// Full supervised sequence over `context` (any prefix or selection of the
/// task context) ending in `answer` + END.
TrainingSequence make_training_sequence(const TaskInstance& task, const std::vector<int>& context,
                                        const std::vector<int>& answer);

struct CorpusOptions {
  /// Fraction of sequences whose context is cut before gold_end and whose
  /// answer is NONE.
  double insufficient_fraction = 0.0;
  /// Fraction of sufficient sequences whose context is shortened to the
  /// statements the answer needs plus up to `short_view_extra` random
  /// distractors, in original order. Short views let the model learn the
  /// lookup before it has to find it in a long context.
  double short_view_fraction = 0.0;
  std::size_t short_view_extra = 3;
};

/// Indices of the statements on the query's chain, in chain order. The
/// first maps the query key; each next one maps the previous slot.
std::vector<std::size_t> chain_statements(const TaskInstance& task);

std::vector<TrainingSequence> build_training_corpus(const std::vector<TaskInstance>& tasks,
                                                    const CorpusOptions& options,
                                                    std::uint64_t seed);

// Dataset files: one JSON object per line with fields
// {id, context, query, answer, gold_end, hops, seed}.

std::string task_to_json_line(const TaskInstance& task);
TaskInstance task_from_json_line(const std::string& line);
void save_dataset(const std::vector<TaskInstance>& tasks, const std::filesystem::path& path);
std::vector<TaskInstance> load_dataset(const std::filesystem::path& path);
/// FNV-1a over the canonical serialization, as 16 hex digits.
std::string dataset_fingerprint(const std::vector<TaskInstance>& tasks);

struct GoldStats {
  double mean = 0;
  double stddev = 0;
  double min = 0;
  double max = 0;
};

/// Statistics of gold_end / len(context) over a dataset.
GoldStats gold_location_stats(const std::vector<TaskInstance>& tasks);

}  // namespace dcc
