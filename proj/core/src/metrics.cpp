#include "dcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dcc/errors.hpp"

namespace dcc {

namespace {

void check_pair(std::span<const int> a, std::span<const int> b) {
  if (a.empty()) throw ContractError("metric over an empty set");
  if (a.size() != b.size()) throw ContractError("metric inputs differ in length");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1)) {
      throw ContractError("labels must be 0 or 1");
    }
  }
}

std::vector<double> ranks_of(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) r[order[t]] = 0.5 * static_cast<double>(i + 1 + j);
    i = j;
  }
  return r;
}

}  // namespace

PrecisionRecall f1(std::span<const int> predicted, std::span<const int> gold) {
  check_pair(predicted, gold);
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    tp += predicted[i] & gold[i];
    fp += predicted[i] & (1 - gold[i]);
    fn += (1 - predicted[i]) & gold[i];
  }
  PrecisionRecall pr;
  pr.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  pr.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double s = pr.precision + pr.recall;
  pr.f1 = s > 0 ? 2 * pr.precision * pr.recall / s : 0.0;
  return pr;
}

double recall_at_precision(std::span<const double> scores, std::span<const int> gold, double p) {
  if (scores.size() != gold.size()) throw ContractError("recall_at_precision: size mismatch");
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("precision target must be in [0, 1]");
  const auto positives = static_cast<double>(std::count(gold.begin(), gold.end(), 1));
  if (positives == 0 || positives == static_cast<double>(gold.size())) {
    throw UndefinedMetricError("recall_at_precision needs both classes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return scores[a] > scores[b]; });
  double tp = 0, fp = 0, best = 0;
  for (std::size_t i = 0; i < order.size();) {
    // Threshold at this score: everything >= it is predicted positive.
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (gold[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    if (tp / (tp + fp) >= p) best = std::max(best, tp / positives);
    i = j;
  }
  return best;
}

double token_reduction(std::span<const CutoffTrace> traces) {
  if (traces.empty()) throw ContractError("token_reduction over no traces");
  double full = 0, processed = 0;
  for (const auto& t : traces) {
    full += static_cast<double>(t.tokens_full);
    processed += static_cast<double>(t.tokens_processed);
  }
  if (processed <= 0) throw ContractError("token_reduction: nothing processed");
  return full / processed;
}

std::string format_factor(double factor) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fx", factor);
  return buf;
}

double accuracy(std::span<const AnswerResult> results) {
  if (results.empty()) throw ContractError("accuracy over no results");
  const auto ok = std::count_if(results.begin(), results.end(),
                                [](const AnswerResult& r) { return r.exact_match; });
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

std::vector<ConfidencePoint> confidence_curve(std::span<const CutoffTrace> traces) {
  std::vector<ConfidencePoint> curve;
  for (const auto& t : traces) {
    for (const auto& s : t.steps) {
      if (s.chunk_index == 0) throw ContractError("chunk indices are 1-based");
      if (curve.size() < s.chunk_index) curve.resize(s.chunk_index);
      auto& pt = curve[s.chunk_index - 1];
      pt.mean_confidence += s.confidence;
      ++pt.count;
    }
  }
  for (std::size_t i = 0; i < curve.size(); ++i) {
    curve[i].chunk_index = i + 1;
    if (curve[i].count > 0) curve[i].mean_confidence /= static_cast<double>(curve[i].count);
  }
  return curve;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("spearman needs >= 2 pairs");
  const auto ra = ranks_of(a);
  const auto rb = ranks_of(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) throw UndefinedMetricError("spearman of a constant series");
  return sab / std::sqrt(saa * sbb);
}

MetricsRow summarize(const PolicyRun& run,
                     const std::map<std::string, std::vector<int>>& labels_by_task) {
  if (run.traces.size() != run.results.size()) throw ContractError("summarize: traces != results");
  MetricsRow row;
  row.policy = run.policy;
  row.tau = run.tau;
  row.setting = run.setting;
  row.n = run.results.size();
  row.accuracy = accuracy(run.results);
  row.token_reduction = token_reduction(run.traces);

  const double n = static_cast<double>(row.n);
  double fraction = 0, steps = 0;
  std::vector<int> decisions, gold;
  std::vector<double> confidences;
  for (const auto& t : run.traces) {
    const double len = static_cast<double>(t.tokens_full - t.generated_tokens);
    fraction += len > 0 ? static_cast<double>(t.context_tokens) / len : 1.0;
    steps += static_cast<double>(t.steps.size());
    row.context_flops += t.flops.context / n;
    row.classifier_flops += t.flops.classifier / n;
    row.generation_flops += t.flops.generation / n;
    row.context_seconds += t.seconds.context / n;
    row.classifier_seconds += t.seconds.classifier / n;
    row.generation_seconds += t.seconds.generation / n;
    if (t.steps.empty()) continue;
    const auto it = labels_by_task.find(t.task_id);
    if (it == labels_by_task.end()) continue;
    for (const auto& s : t.steps) {
      if (s.chunk_index > it->second.size()) throw ContractError("trace longer than its labels");
      decisions.push_back(s.decision);
      confidences.push_back(s.confidence);
      gold.push_back(it->second[s.chunk_index - 1]);
    }
  }
  row.mean_cutoff_fraction = fraction / n;
  row.mean_steps = steps / n;
  if (!gold.empty()) {
    row.classifier_f1 = f1(decisions, gold).f1;
    const auto pos = std::count(gold.begin(), gold.end(), 1);
    if (pos > 0 && pos < static_cast<long>(gold.size())) {
      row.recall_at_90p = recall_at_precision(confidences, gold, 0.90);
      row.recall_at_95p = recall_at_precision(confidences, gold, 0.95);
      row.recall_at_98p = recall_at_precision(confidences, gold, 0.98);
    }
  }
  return row;
}

}  // namespace dcc
