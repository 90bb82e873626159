#include "dcc/cutoff.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <set>

#include "dcc/errors.hpp"

namespace dcc {

namespace {

using Clock = std::chrono::steady_clock;

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double classifier_flops(const EnsembleModel& ensemble) {
  double total = 0;
  for (const auto& m : ensemble.members) {
    if (const auto* l = std::get_if<LogisticModel>(&m.model)) {
      total += 4.0 * static_cast<double>(l->weights.size());
    } else {
      total += 2.0 * std::get<TreeSpec>(m.spec).max_depth;
    }
  }
  return total;
}

// Shared episode plumbing: header, context feeding, answer generation.
class EpisodeRunner {
 public:
  EpisodeRunner(const Transformer& model, const TaskInstance& task, std::string policy)
      : model_(model), task_(task), cache_(model.make_cache()) {
    ep_.answer.task_id = task.id;
    ep_.answer.policy = policy;
    ep_.trace.task_id = task.id;
    ep_.trace.policy = std::move(policy);
    const auto header = query_header(task);
    const auto t0 = Clock::now();
    model_.forward(header, cache_, {}, LogitsMode::none);
    ep_.trace.seconds.context += seconds_since(t0);
    ep_.trace.flops.context += forward_flops(model_.config(), 0, header.size(), 0);
  }

  ForwardOutput feed(std::span<const int> tokens, std::span<const HeadTap> taps = {}) {
    const std::size_t offset = cache_.cached_len;
    const auto t0 = Clock::now();
    auto out = model_.forward(tokens, cache_, taps, LogitsMode::none);
    ep_.trace.seconds.context += seconds_since(t0);
    ep_.trace.flops.context += forward_flops(model_.config(), offset, tokens.size(), 0);
    ep_.trace.context_tokens += tokens.size();
    return out;
  }

  CutoffTrace& trace() { return ep_.trace; }

  Episode finish(int max_answer_tokens) {
    if (max_answer_tokens < 1) throw ParameterError("max_answer_tokens must be >= 1");
    const auto prompt = answer_prompt(task_);
    const std::size_t offset = cache_.cached_len;
    const auto t0 = Clock::now();
    auto generated = model_.generate(cache_, prompt, max_answer_tokens);
    ep_.trace.seconds.generation += seconds_since(t0);

    const auto& cfg = model_.config();
    auto& fl = ep_.trace.flops.generation;
    fl += forward_flops(cfg, offset, prompt.size(), 1);
    for (std::size_t pos = offset + prompt.size(); pos < cache_.cached_len; ++pos) {
      fl += forward_flops(cfg, pos, 1, 1);
    }

    auto& tr = ep_.trace;
    tr.generated_tokens = generated.size();
    tr.tokens_processed = tr.context_tokens + tr.generated_tokens;
    tr.tokens_full = task_.context.size() + tr.generated_tokens;
    ep_.answer.exact_match = exact_match(generated, task_.answer);
    ep_.answer.generated = std::move(generated);
    tr.correct = ep_.answer.exact_match;
    return std::move(ep_);
  }

 private:
  const Transformer& model_;
  const TaskInstance& task_;
  KvCache cache_;
  Episode ep_;
};

}  // namespace

double forward_flops(const ModelConfig& cfg, std::size_t offset, std::size_t n_new,
                     std::size_t logits_rows) {
  const double d = cfg.d_model;
  const double n = static_cast<double>(n_new);
  const double o = static_cast<double>(offset);
  const double projections = 4.0 * n * d * d;
  const double ffn = 2.0 * n * d * cfg.d_ff;
  const double attention = 2.0 * d * (n * o + n * (n + 1) / 2);
  const double head = static_cast<double>(logits_rows) * d * cfg.vocab_size;
  return 2.0 * (cfg.n_layers * (projections + ffn + attention) + head);
}

bool exact_match(std::span<const int> generated, std::span<const int> answer) {
  const auto end = std::find(generated.begin(), generated.end(), vocab::kEnd);
  return std::equal(generated.begin(), end, answer.begin(), answer.end());
}

Episode run_cutoff(const Transformer& model, const EnsembleModel& ensemble,
                   const TaskInstance& task, const CutoffConfig& config) {
  if (!config.taps.empty() && config.taps != ensemble.heads) {
    throw ConfigError("tapped heads differ from the heads the classifier was trained on");
  }
  const std::size_t expected =
      ensemble.heads.size() * static_cast<std::size_t>(model.config().d_head());
  if (ensemble.feature_width() != expected) {
    throw ConfigError("classifier expects " + std::to_string(ensemble.feature_width()) +
                      " features but the heads provide " + std::to_string(expected));
  }
  decide(0.0, config.tau);
  config.chunking.validate();

  EpisodeRunner run(model, task, "cutoff");
  auto& tr = run.trace();
  tr.tau = config.tau;
  const auto plan = plan_chunks(task.context.size(), config.chunking, task.context);
  tr.m = plan.num_chunks();
  tr.k = tr.m;
  const double clf_flops = classifier_flops(ensemble);
  const std::span<const int> ctx(task.context);
  std::vector<float> features;
  for (std::size_t i = 1; i <= plan.num_chunks(); ++i) {
    const auto r = delta(plan, i);
    auto out = run.feed(ctx.subspan(r.begin, r.size()), ensemble.heads);
    const auto t0 = Clock::now();
    features.clear();
    for (const auto& h : ensemble.heads) {
      const auto& f = out.taps.at(h);
      features.insert(features.end(), f.begin(), f.end());
    }
    const double s = ensemble.confidence(features);
    const int d = decide(s, config.tau);
    tr.seconds.classifier += seconds_since(t0);
    tr.flops.classifier += clf_flops;
    tr.steps.push_back({i, s, d});
    if (d == 1) {
      tr.k = i;
      break;
    }
  }
  return run.finish(config.max_answer_tokens);
}

Episode run_full(const Transformer& model, const TaskInstance& task, int max_answer_tokens) {
  EpisodeRunner run(model, task, "full");
  run.feed(task.context);
  run.trace().k = run.trace().m = 1;
  return run.finish(max_answer_tokens);
}

Episode run_static_truncate(const Transformer& model, const TaskInstance& task, double rho,
                            int max_answer_tokens) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("truncation ratio must be in (0, 1]");
  const std::size_t len = task.context.size();
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(rho * static_cast<double>(len))), 1, len);
  EpisodeRunner run(model, task, "static");
  run.trace().setting = "keep=" + format_number(rho);
  run.feed(std::span<const int>(task.context).first(keep));
  run.trace().k = run.trace().m = 1;
  return run.finish(max_answer_tokens);
}

std::vector<double> bm25_scores(std::span<const std::vector<int>> chunks,
                                std::span<const int> query, const Bm25Params& params) {
  if (chunks.empty()) throw ContractError("bm25: no chunks");
  const double n_docs = static_cast<double>(chunks.size());
  double avgdl = 0;
  for (const auto& c : chunks) avgdl += static_cast<double>(c.size());
  avgdl /= n_docs;
  const std::set<int> terms(query.begin(), query.end());
  std::vector<double> scores(chunks.size(), 0.0);
  for (int t : terms) {
    double df = 0;
    for (const auto& c : chunks) df += std::find(c.begin(), c.end(), t) != c.end() ? 1 : 0;
    const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const double tf = static_cast<double>(std::count(chunks[i].begin(), chunks[i].end(), t));
      if (tf == 0) continue;
      const double dl = static_cast<double>(chunks[i].size());
      scores[i] += idf * tf * (params.k1 + 1) /
                   (tf + params.k1 * (1 - params.b + params.b * dl / avgdl));
    }
  }
  return scores;
}

std::vector<std::size_t> bm25_top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

Episode run_bm25_topk(const Transformer& model, const TaskInstance& task,
                      const ChunkingSpec& chunking, std::size_t k_docs, int max_answer_tokens) {
  if (k_docs == 0) throw ParameterError("k_docs must be >= 1");
  chunking.validate();
  const auto plan = plan_chunks(task.context.size(), chunking, task.context);
  std::vector<std::vector<int>> chunks;
  for (std::size_t i = 1; i <= plan.num_chunks(); ++i) {
    const auto r = delta(plan, i);
    chunks.emplace_back(task.context.begin() + r.begin, task.context.begin() + r.end);
  }
  const auto keep = bm25_top_k(bm25_scores(chunks, task.query), k_docs);
  std::vector<int> selected;
  for (std::size_t i : keep) selected.insert(selected.end(), chunks[i].begin(), chunks[i].end());

  EpisodeRunner run(model, task, "bm25");
  run.trace().setting = "k=" + std::to_string(k_docs);
  run.feed(selected);
  run.trace().m = plan.num_chunks();
  run.trace().k = keep.size();
  return run.finish(max_answer_tokens);
}

Episode run_oracle(const Transformer& model, const TaskInstance& task,
                   const ChunkingSpec& chunking, int max_answer_tokens) {
  chunking.validate();
  const auto plan = plan_chunks(task.context.size(), chunking, task.context);
  const auto labels = derive_labels(task, plan);
  EpisodeRunner run(model, task, "oracle");
  auto& tr = run.trace();
  tr.m = plan.num_chunks();
  tr.k = tr.m;
  const std::span<const int> ctx(task.context);
  for (std::size_t i = 1; i <= plan.num_chunks(); ++i) {
    const auto r = delta(plan, i);
    run.feed(ctx.subspan(r.begin, r.size()));
    const int label = labels[i - 1];
    tr.steps.push_back({i, static_cast<double>(label), label});
    if (label == 1) {
      tr.k = i;
      break;
    }
  }
  return run.finish(max_answer_tokens);
}

std::string episode_to_json_line(const Episode& episode, bool include_wall_time) {
  using json = nlohmann::ordered_json;
  const auto& trace = episode.trace;
  json conf = json::array();
  json dec = json::array();
  for (const auto& s : trace.steps) {
    conf.push_back(s.confidence);
    dec.push_back(s.decision);
  }
  json j = {
      {"task_id", trace.task_id},
      {"policy", trace.policy},
      {"setting", trace.setting},
      {"tau", trace.tau},
      {"k", trace.k},
      {"m", trace.m},
      {"confidences", conf},
      {"decisions", dec},
      {"context_tokens", trace.context_tokens},
      {"generated", episode.answer.generated},
      {"tokens_processed", trace.tokens_processed},
      {"tokens_full", trace.tokens_full},
      {"correct", trace.correct},
      {"phase_flops",
       {{"context", trace.flops.context},
        {"classifier", trace.flops.classifier},
        {"generation", trace.flops.generation}}},
  };
  if (include_wall_time) {
    j["phase_seconds"] = {{"context", trace.seconds.context},
                          {"classifier", trace.seconds.classifier},
                          {"generation", trace.seconds.generation}};
  }
  return j.dump();
}

Episode episode_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Episode ep;
    auto& t = ep.trace;
    t.task_id = j.at("task_id").get<std::string>();
    t.policy = j.at("policy").get<std::string>();
    t.setting = j.at("setting").get<std::string>();
    t.tau = j.at("tau").get<double>();
    t.k = j.at("k").get<std::size_t>();
    t.m = j.at("m").get<std::size_t>();
    const auto conf = j.at("confidences").get<std::vector<double>>();
    const auto dec = j.at("decisions").get<std::vector<int>>();
    if (conf.size() != dec.size()) throw FormatError("confidences and decisions differ in length");
    for (std::size_t i = 0; i < conf.size(); ++i) t.steps.push_back({i + 1, conf[i], dec[i]});
    t.context_tokens = j.at("context_tokens").get<std::size_t>();
    ep.answer.generated = j.at("generated").get<std::vector<int>>();
    t.generated_tokens = ep.answer.generated.size();
    t.tokens_processed = j.at("tokens_processed").get<std::size_t>();
    t.tokens_full = j.at("tokens_full").get<std::size_t>();
    t.correct = j.at("correct").get<bool>();
    const auto& fl = j.at("phase_flops");
    t.flops = {fl.at("context").get<double>(), fl.at("classifier").get<double>(),
               fl.at("generation").get<double>()};
    if (const auto it = j.find("phase_seconds"); it != j.end()) {
      t.seconds = {it->at("context").get<double>(), it->at("classifier").get<double>(),
                   it->at("generation").get<double>()};
    }
    ep.answer.task_id = t.task_id;
    ep.answer.policy = t.policy;
    ep.answer.exact_match = t.correct;
    return ep;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trace record: ") + e.what());
  }
}

}  // namespace dcc
