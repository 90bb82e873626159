#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcc/config.hpp"
#include "dcc/tasks.hpp"

namespace dcc {

/// End-to-end experiment over one output directory. Every stage reads its
/// inputs from files written by earlier stages, so running the stages one
/// by one produces the same tree as all().
///
///   data/        single_hop.jsonl multi_hop.jsonl split.json stats.json
///   model/       model.bin loss_curve.tsv competence.json
///   probe/       heads.tsv control_heads.tsv selected.json
///   classifier/  ensemble.json validation.json
///   sweep/       tuned_tau.json validation_traces.jsonl test_traces.jsonl + report
///   run/         traces.jsonl run.json
///   eval/        report + chunking_table.tsv confidence_trend.json
///
/// Randomness is derived from config.seed through named sub-streams.
class Pipeline {
 public:
  using Logger = std::function<void(const std::string&)>;

  explicit Pipeline(RunConfig config, Logger log = {});

  const RunConfig& config() const noexcept { return config_; }
  std::filesystem::path root() const { return config_.out; }

  void gen_data();
  void train_model();
  void probe();
  void train_classifier();
  /// Cutoff over the tau grid on validation and test; picks the smallest tau
  /// whose validation accuracy stays within tune_tolerance of full context.
  void sweep_tau();
  /// Evaluates `policies` (config.eval.policies when empty) on the test
  /// split. The cutoff threshold is `tau`, else the tuned one.
  void run(std::optional<double> tau = std::nullopt, std::vector<std::string> policies = {});
  void eval();
  void all();

  /// Tasks of one split ("train", "validation", "test") from data/.
  std::vector<TaskInstance> split_tasks(const std::string& split) const;

 private:
  void log(const std::string& msg) const;

  RunConfig config_;
  Logger log_;
};

}  // namespace dcc
