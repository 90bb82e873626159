#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dcc/cutoff.hpp"

namespace dcc {

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Standard precision/recall/F1 of binary predictions. Precision (recall) is
/// 0 when nothing is predicted (present); F1 is 0 when both are 0. Throws
/// ContractError for empty or mismatched inputs.
PrecisionRecall f1(std::span<const int> predicted, std::span<const int> gold);

/// Highest recall over all score thresholds whose precision is >= p. The
/// sweep covers every unique score plus predict-nothing; 0 when no
/// threshold qualifies. Throws UndefinedMetricError unless both classes occur.
double recall_at_precision(std::span<const double> scores, std::span<const int> gold, double p);

/// Sum of tokens_full over sum of tokens_processed.
double token_reduction(std::span<const CutoffTrace> traces);

/// "1.33x"
std::string format_factor(double factor);

/// Fraction of exact-match answers. Throws ContractError when empty.
double accuracy(std::span<const AnswerResult> results);

/// Mean confidence per chunk index over every trace that scored that index.
/// Entry j covers chunk j+1; length = longest trace.
struct ConfidencePoint {
  std::size_t chunk_index = 0;
  double mean_confidence = 0;
  std::size_t count = 0;
};
std::vector<ConfidencePoint> confidence_curve(std::span<const CutoffTrace> traces);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Reports

/// Outcome of one policy at one threshold over a task set.
struct PolicyRun {
  std::string policy;  // "cutoff", "full", "static", "bm25", "oracle"
  double tau = -1;     // cutoff threshold; -1 when not applicable
  std::string setting; // policy parameter echo, e.g. "rho=0.8"
  std::vector<AnswerResult> results;
  std::vector<CutoffTrace> traces;
};

struct MetricsRow {
  std::string policy;
  double tau = -1;
  std::string setting;
  std::size_t n = 0;
  double accuracy = 0;
  double token_reduction = 1;
  double mean_cutoff_fraction = 1;  // mean k/m
  double mean_steps = 0;            // classifier evaluations per task
  double classifier_f1 = -1;        // -1: not applicable
  double recall_at_90p = -1;
  double recall_at_95p = -1;
  double recall_at_98p = -1;
  double context_flops = 0;
  double classifier_flops = 0;
  double generation_flops = 0;
  double context_seconds = 0;
  double classifier_seconds = 0;
  double generation_seconds = 0;
};

/// Classifier metrics are computed over every scored chunk in the traces
/// against `labels_by_task` (task id -> per-chunk labels).
MetricsRow summarize(const PolicyRun& run,
                     const std::map<std::string, std::vector<int>>& labels_by_task);

struct ReportInputs {
  std::vector<MetricsRow> rows;
  std::vector<ConfidencePoint> confidence;
  /// Echoed verbatim into the summary for reproducibility.
  std::map<std::string, std::string> provenance;
  bool include_wall_time = false;
};

/// Writes summary.json, metrics.tsv, frontier.tsv, confidence_curve.tsv and
/// cost_vs_cutoff.tsv under `dir`. Byte-identical for identical inputs.
void emit_report(const ReportInputs& inputs, const std::filesystem::path& dir);

}  // namespace dcc
