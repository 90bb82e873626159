#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "dcc/errors.hpp"
#include "dcc/metrics.hpp"

namespace dcc {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Fixed-precision numbers keep the JSON byte-stable across runs.
nlohmann::ordered_json fixed(double v) { return nlohmann::ordered_json::parse(num(v)); }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::ordered_json row_json(const MetricsRow& r, bool wall) {
  nlohmann::ordered_json j = {
      {"policy", r.policy},
      {"tau", fixed(r.tau)},
      {"setting", r.setting},
      {"n", r.n},
      {"accuracy", fixed(r.accuracy)},
      {"token_reduction", fixed(r.token_reduction)},
      {"token_reduction_label", format_factor(r.token_reduction)},
      {"mean_cutoff_fraction", fixed(r.mean_cutoff_fraction)},
      {"mean_steps", fixed(r.mean_steps)},
      {"classifier_f1", fixed(r.classifier_f1)},
      {"recall_at_90p", fixed(r.recall_at_90p)},
      {"recall_at_95p", fixed(r.recall_at_95p)},
      {"recall_at_98p", fixed(r.recall_at_98p)},
      {"phase_flops",
       {{"context", fixed(r.context_flops)},
        {"classifier", fixed(r.classifier_flops)},
        {"generation", fixed(r.generation_flops)}}},
  };
  if (wall) {
    j["phase_seconds"] = {{"context", fixed(r.context_seconds)},
                          {"classifier", fixed(r.classifier_seconds)},
                          {"generation", fixed(r.generation_seconds)}};
  }
  return j;
}

}  // namespace

void emit_report(const ReportInputs& inputs, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const bool wall = inputs.include_wall_time;

  nlohmann::ordered_json summary;
  nlohmann::ordered_json prov = nlohmann::ordered_json::object();
  for (const auto& [k, v] : inputs.provenance) prov[k] = v;
  summary["provenance"] = prov;
  summary["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : inputs.rows) summary["rows"].push_back(row_json(r, wall));
  summary["confidence_curve"] = nlohmann::ordered_json::array();
  for (const auto& p : inputs.confidence) {
    summary["confidence_curve"].push_back(
        {{"chunk_index", p.chunk_index}, {"mean_confidence", fixed(p.mean_confidence)},
         {"count", p.count}});
  }
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  std::string tsv =
      "policy\ttau\tsetting\tn\taccuracy\ttoken_reduction\tmean_cutoff_fraction\tmean_steps"
      "\tclassifier_f1\trecall_at_90p\trecall_at_95p\trecall_at_98p\n";
  for (const auto& r : inputs.rows) {
    tsv += r.policy + "\t" + num(r.tau) + "\t" + r.setting + "\t" + std::to_string(r.n) + "\t" +
           num(r.accuracy) + "\t" + num(r.token_reduction) + "\t" + num(r.mean_cutoff_fraction) +
           "\t" + num(r.mean_steps) + "\t" + num(r.classifier_f1) + "\t" + num(r.recall_at_90p) +
           "\t" + num(r.recall_at_95p) + "\t" + num(r.recall_at_98p) + "\n";
  }
  write_file(dir / "metrics.tsv", tsv);

  std::vector<const MetricsRow*> frontier;
  for (const auto& r : inputs.rows) frontier.push_back(&r);
  std::stable_sort(frontier.begin(), frontier.end(), [](const MetricsRow* a, const MetricsRow* b) {
    return a->token_reduction < b->token_reduction;
  });
  std::string fr = "policy\ttau\tsetting\ttoken_reduction\taccuracy\n";
  for (const auto* r : frontier) {
    fr += r->policy + "\t" + num(r->tau) + "\t" + r->setting + "\t" + num(r->token_reduction) +
          "\t" + num(r->accuracy) + "\n";
  }
  write_file(dir / "frontier.tsv", fr);

  std::string cc = "chunk_index\tmean_confidence\tcount\n";
  for (const auto& p : inputs.confidence) {
    cc += std::to_string(p.chunk_index) + "\t" + num(p.mean_confidence) + "\t" +
          std::to_string(p.count) + "\n";
  }
  write_file(dir / "confidence_curve.tsv", cc);

  std::string cost = "policy\ttau\tsetting\tmean_cutoff_fraction\tcontext_flops\tclassifier_flops"
                     "\tgeneration_flops\ttotal_flops";
  cost += wall ? "\tcontext_seconds\tclassifier_seconds\tgeneration_seconds\n" : "\n";
  for (const auto& r : inputs.rows) {
    cost += r.policy + "\t" + num(r.tau) + "\t" + r.setting + "\t" + num(r.mean_cutoff_fraction) +
            "\t" + num(r.context_flops) + "\t" + num(r.classifier_flops) + "\t" +
            num(r.generation_flops) + "\t" +
            num(r.context_flops + r.classifier_flops + r.generation_flops);
    if (wall) {
      cost += "\t" + num(r.context_seconds) + "\t" + num(r.classifier_seconds) + "\t" +
              num(r.generation_seconds);
    }
    cost += "\n";
  }
  write_file(dir / "cost_vs_cutoff.tsv", cost);
}

}  // namespace dcc
