#include "dcc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "dcc/cutoff.hpp"
#include "dcc/errors.hpp"
#include "dcc/metrics.hpp"
#include "dcc/random.hpp"
#include "dcc/sufficiency.hpp"

namespace dcc {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

ojson fixed(double v) { return ojson::parse(num(v)); }

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string() + " (run the earlier stages first)");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

void write_episodes(const fs::path& path, const std::vector<Episode>& episodes, bool wall) {
  std::string text;
  for (const auto& e : episodes) text += episode_to_json_line(e, wall) + "\n";
  write_text(path, text);
}

std::vector<Episode> read_episodes(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Episode> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(episode_from_json_line(line));
  }
  return out;
}

ojson heads_json(const std::vector<HeadTap>& heads) {
  ojson j = ojson::array();
  for (const auto& h : heads) j.push_back({h.layer, h.head});
  return j;
}

std::vector<HeadTap> heads_from(const nlohmann::json& j) {
  std::vector<HeadTap> out;
  for (const auto& h : j) out.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
  return out;
}

std::map<std::string, std::vector<int>> labels_by_task(const std::vector<TaskInstance>& tasks,
                                                        const ChunkingSpec& chunking) {
  std::map<std::string, std::vector<int>> out;
  for (const auto& t : tasks) {
    out[t.id] = derive_labels(t, plan_chunks(t.context.size(), chunking, t.context));
  }
  return out;
}

PolicyRun to_policy_run(const std::string& policy, double tau, const std::string& setting,
                        const std::vector<Episode>& episodes) {
  PolicyRun run{policy, tau, setting, {}, {}};
  for (const auto& e : episodes) {
    run.results.push_back(e.answer);
    run.traces.push_back(e.trace);
  }
  return run;
}

double full_accuracy(const Transformer& model, const std::vector<TaskInstance>& tasks,
                     int max_answer) {
  std::size_t ok = 0;
  for (const auto& t : tasks) ok += run_full(model, t, max_answer).answer.exact_match ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(tasks.size());
}

/// Ensemble confidence at every chunk of every task (no early stop).
struct ChunkScores {
  std::vector<CutoffTrace> traces;  // one per task, every chunk scored
  std::vector<double> scores;
  std::vector<int> labels;
};

ChunkScores score_all_chunks(const Transformer& model, const EnsembleModel& ensemble,
                             const std::vector<TaskInstance>& tasks, const ChunkingSpec& chunking,
                             double tau) {
  const auto set = collect_activations(model, tasks, chunking, ensemble.heads);
  const Tensor x = feature_matrix(set, ensemble.heads);
  ChunkScores out;
  std::map<std::string, std::size_t> trace_of;
  for (std::size_t r = 0; r < set.examples.size(); ++r) {
    const auto& ex = set.examples[r];
    const double s = ensemble.confidence(x.row(r));
    out.scores.push_back(s);
    out.labels.push_back(ex.label);
    auto [it, fresh] = trace_of.emplace(ex.task_id, out.traces.size());
    if (fresh) {
      out.traces.emplace_back();
      out.traces.back().task_id = ex.task_id;
    }
    out.traces[it->second].steps.push_back({ex.chunk_index, s, decide(s, tau)});
  }
  return out;
}

// Config without the output directory, so trees written to different
// places stay comparable.
std::string config_echo(const RunConfig& c) {
  auto j = ojson::parse(serialize_config(c));
  j.erase("out");
  return j.dump();
}

EnsembleOptions ensemble_options(const RunConfig& c) {
  return {c.ensemble.pool, c.ensemble.select, c.ensemble.folds, derive_seed(c.seed, "ensemble")};
}

}  // namespace

Pipeline::Pipeline(RunConfig config, Logger log) : config_(std::move(config)), log_(std::move(log)) {
  config_.validate();
}

void Pipeline::log(const std::string& msg) const {
  if (log_) log_(msg);
}

std::vector<TaskInstance> Pipeline::split_tasks(const std::string& split) const {
  const fs::path data = root() / "data";
  auto tasks = load_dataset(data / "single_hop.jsonl");
  auto multi = load_dataset(data / "multi_hop.jsonl");
  tasks.insert(tasks.end(), multi.begin(), multi.end());
  const auto j = read_json(data / "split.json");
  if (!j.contains(split)) throw ContractError("unknown split '" + split + "'");
  return select_tasks(tasks, j.at(split).get<std::vector<std::string>>());
}

// ---------------------------------------------------------------------------

void Pipeline::gen_data() {
  const auto& c = config_;
  const fs::path dir = ensure_dir(root() / "data");
  const LengthRange lengths{c.data.min_len, c.data.max_len};
  const auto single = gen_single_hop(c.data.single_hop, lengths, derive_seed(c.seed, "data/single"));
  const auto multi = c.data.multi_hop == 0
                         ? std::vector<TaskInstance>{}
                         : gen_multi_hop_kv(c.data.multi_hop, lengths, c.data.chain_len,
                                            derive_seed(c.seed, "data/multi"));
  save_dataset(single, dir / "single_hop.jsonl");
  save_dataset(multi, dir / "multi_hop.jsonl");

  // Split each family separately so both appear in every split.
  DatasetSplit split;
  for (const auto& [family, stream] : {std::pair{&single, "split/single"}, {&multi, "split/multi"}}) {
    if (family->empty()) continue;
    const auto s = split_dataset(*family, derive_seed(c.seed, stream));
    split.train.insert(split.train.end(), s.train.begin(), s.train.end());
    split.validation.insert(split.validation.end(), s.validation.begin(), s.validation.end());
    split.test.insert(split.test.end(), s.test.begin(), s.test.end());
  }
  write_json(dir / "split.json",
             {{"train", split.train}, {"validation", split.validation}, {"test", split.test}});

  ojson stats = ojson::object();
  for (const auto& [name, family] :
       {std::pair<std::string, const std::vector<TaskInstance>*>{"single_hop", &single},
        {"multi_hop", &multi}}) {
    if (family->empty()) continue;
    const auto g = gold_location_stats(*family);
    std::size_t chunks = 0, sufficient = 0;
    for (const auto& t : *family) {
      const auto labels = derive_labels(t, plan_chunks(t.context.size(), c.chunking, t.context));
      chunks += labels.size();
      sufficient += static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    }
    stats[name] = {{"n", family->size()},
                   {"fingerprint", dataset_fingerprint(*family)},
                   {"gold_mean", fixed(g.mean)},
                   {"gold_std", fixed(g.stddev)},
                   {"gold_min", fixed(g.min)},
                   {"gold_max", fixed(g.max)},
                   {"chunking", c.chunking.label()},
                   {"sufficient_fraction",
                    fixed(static_cast<double>(sufficient) / static_cast<double>(chunks))}};
  }
  write_json(dir / "stats.json", stats);
  log("gen-data: " + std::to_string(single.size()) + " single-hop, " +
      std::to_string(multi.size()) + " multi-hop tasks");
}

void Pipeline::train_model() {
  const auto& c = config_;
  const fs::path dir = ensure_dir(root() / "model");
  const LengthRange lengths{c.data.min_len, c.data.max_len};

  // The model corpus is drawn from its own streams, disjoint from the
  // evaluation datasets.
  std::vector<TaskInstance> tasks;
  if (c.data.single_hop > 0) {
    tasks = gen_single_hop(c.data.model_corpus, lengths, derive_seed(c.seed, "corpus/single"));
  }
  if (c.data.multi_hop > 0) {
    const auto m = gen_multi_hop_kv(c.data.model_corpus, lengths, c.data.chain_len,
                                    derive_seed(c.seed, "corpus/multi"));
    tasks.insert(tasks.end(), m.begin(), m.end());
  }
  CorpusOptions options;
  options.insufficient_fraction = c.data.insufficient_fraction;
  options.short_view_fraction = c.data.short_view_fraction;
  options.short_view_extra = c.data.short_view_extra;
  const auto corpus = build_training_corpus(tasks, options, derive_seed(c.seed, "corpus"));

  ModelConfig mc = c.model;
  mc.seed = derive_seed(c.seed, "model");
  Transformer model(mc);
  TrainHyper hyper = c.train;
  hyper.seed = derive_seed(c.seed, "train");
  const int every = std::max(1, hyper.steps / 20);
  const auto report = train(model, corpus, hyper, [&](int step, double loss) {
    if (step % every == 0) log("train-model: step " + std::to_string(step) + " loss " + num(loss));
  });
  save_checkpoint(model, dir / "model.bin");

  std::string curve = "step\tloss\n";
  for (std::size_t i = 0; i < report.loss_curve.size(); ++i) {
    curve += std::to_string(i) + "\t" + num(report.loss_curve[i]) + "\n";
  }
  write_text(dir / "loss_curve.tsv", curve);

  // Full-context competence on fresh tasks from unused streams.
  ojson comp = {{"n_per_family", c.eval.competence_tasks}};
  if (c.data.single_hop > 0) {
    comp["single_hop"] = fixed(full_accuracy(
        model, gen_single_hop(c.eval.competence_tasks, lengths, derive_seed(c.seed, "competence/single")),
        c.eval.max_answer_tokens));
  }
  if (c.data.multi_hop > 0) {
    comp["multi_hop"] = fixed(full_accuracy(
        model,
        gen_multi_hop_kv(c.eval.competence_tasks, lengths, c.data.chain_len,
                         derive_seed(c.seed, "competence/multi")),
        c.eval.max_answer_tokens));
  }
  write_json(dir / "competence.json", comp);
  log("train-model: competence " + comp.dump());
}

void Pipeline::probe() {
  const auto& c = config_;
  const fs::path dir = ensure_dir(root() / "probe");
  const auto model = load_checkpoint(root() / "model" / "model.bin");
  const auto train_tasks = split_tasks("train");
  ProbeOptions options{c.probe.epochs, c.probe.lr, c.probe.train_fraction,
                       derive_seed(c.seed, "probe")};

  const auto scores = probe_all_heads(model, train_tasks, c.chunking, options);
  write_head_heatmap(scores, dir / "heads.tsv");

  // Same architecture, untrained weights.
  ModelConfig control_cfg = model.config();
  control_cfg.seed = derive_seed(c.seed, "control");
  const Transformer control(control_cfg);
  const auto control_scores = probe_all_heads(control, train_tasks, c.chunking, options);
  write_head_heatmap(control_scores, dir / "control_heads.tsv");

  auto best = [](const std::vector<HeadScore>& s) {
    double b = 0;
    for (const auto& h : s) b = std::max(b, h.validation_f1);
    return b;
  };
  const auto selected = select_heads(scores, c.probe.heads);
  write_json(dir / "selected.json", {{"heads", heads_json(selected)},
                                     {"best_f1", fixed(best(scores))},
                                     {"control_best_f1", fixed(best(control_scores))}});
  log("probe: best head F1 " + num(best(scores)) + ", control " + num(best(control_scores)));
}

void Pipeline::train_classifier() {
  const auto& c = config_;
  const fs::path dir = ensure_dir(root() / "classifier");
  const auto model = load_checkpoint(root() / "model" / "model.bin");
  const auto heads = heads_from(read_json(root() / "probe" / "selected.json").at("heads"));
  const auto train_tasks = split_tasks("train");
  const auto val_tasks = split_tasks("validation");

  const auto train_set = collect_activations(model, train_tasks, c.chunking, heads);
  const Tensor x = feature_matrix(train_set, heads);
  const auto y = labels_of(train_set);
  const auto ensemble = build_ensemble(x, y, heads, ensemble_options(c));
  save_ensemble(ensemble, dir / "ensemble.json");

  // Validation: ensemble vs. a probe on the best single head, both trained
  // on the train split and thresholded at 0.5.
  const auto val_set = collect_activations(model, val_tasks, c.chunking, heads);
  const Tensor vx = feature_matrix(val_set, heads);
  const auto vy = labels_of(val_set);
  std::vector<int> ens_pred(vy.size());
  for (std::size_t r = 0; r < vy.size(); ++r) ens_pred[r] = decide(ensemble.confidence(vx.row(r)), 0.5);
  const double ens_f1 = f1(ens_pred, vy).f1;

  const std::vector<HeadTap> best{heads.front()};
  ProbeOptions popts{c.probe.epochs, c.probe.lr, c.probe.train_fraction,
                     derive_seed(c.seed, "probe")};
  const auto probe = train_probe(feature_matrix(train_set, best), y, feature_matrix(val_set, best),
                                 vy, popts);

  std::vector<double> aucs;
  double selected_auc = 0;
  ojson pool = ojson::array();
  for (const auto& p : ensemble.pool) {
    aucs.push_back(p.cv_auc);
    pool.push_back({{"name", p.name}, {"cv_auc", fixed(p.cv_auc)}, {"selected", p.selected}});
  }
  for (const auto& m : ensemble.members) selected_auc += m.cv_auc / static_cast<double>(ensemble.size());
  std::sort(aucs.begin(), aucs.end());
  const std::size_t n = aucs.size();
  const double median = n % 2 ? aucs[n / 2] : 0.5 * (aucs[n / 2 - 1] + aucs[n / 2]);

  write_json(dir / "validation.json",
             {{"ensemble_f1", fixed(ens_f1)},
              {"best_probe_head", {best.front().layer, best.front().head}},
              {"best_probe_f1", fixed(probe.validation_f1)},
              {"selected_mean_cv_auc", fixed(selected_auc)},
              {"pool_median_cv_auc", fixed(median)},
              {"pool", pool},
              {"train_examples", y.size()},
              {"validation_examples", vy.size()}});
  log("train-classifier: ensemble F1 " + num(ens_f1) + ", best probe F1 " +
      num(probe.validation_f1));
}

void Pipeline::sweep_tau() {
  const auto& c = config_;
  const fs::path dir = ensure_dir(root() / "sweep");
  const auto model = load_checkpoint(root() / "model" / "model.bin");
  const auto ensemble = load_ensemble(root() / "classifier" / "ensemble.json");
  const auto val_tasks = split_tasks("validation");
  const auto test_tasks = split_tasks("test");
  const int max_answer = c.eval.max_answer_tokens;

  std::vector<double> grid = c.eval.tau_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<Episode> val_eps, test_eps;
  const auto val_full_start = val_eps.size();
  for (const auto& t : val_tasks) val_eps.push_back(run_full(model, t, max_answer));
  std::vector<AnswerResult> full_results;
  for (std::size_t i = val_full_start; i < val_eps.size(); ++i) full_results.push_back(val_eps[i].answer);
  const double full_acc = accuracy(full_results);

  const auto test_labels = labels_by_task(test_tasks, c.chunking);
  std::vector<MetricsRow> rows;
  ojson grid_json = ojson::array();
  std::optional<double> tuned;
  for (double tau : grid) {
    CutoffConfig cc{tau, c.chunking, ensemble.heads, max_answer};
    std::vector<Episode> v, t;
    for (const auto& task : val_tasks) v.push_back(run_cutoff(model, ensemble, task, cc));
    for (const auto& task : test_tasks) t.push_back(run_cutoff(model, ensemble, task, cc));
    const auto vrun = to_policy_run("cutoff", tau, "", v);
    const double vacc = accuracy(vrun.results);
    const double vred = token_reduction(vrun.traces);
    grid_json.push_back({{"tau", fixed(tau)},
                         {"validation_accuracy", fixed(vacc)},
                         {"validation_token_reduction", fixed(vred)}});
    if (!tuned && vacc >= full_acc - c.eval.tune_tolerance - 1e-12) tuned = tau;
    rows.push_back(summarize(to_policy_run("cutoff", tau, "", t), test_labels));
    val_eps.insert(val_eps.end(), v.begin(), v.end());
    test_eps.insert(test_eps.end(), t.begin(), t.end());
  }
  // No grid value keeps accuracy: fall back to the most conservative one.
  const double tau = tuned.value_or(grid.back());

  write_episodes(dir / "validation_traces.jsonl", val_eps, c.eval.timing);
  write_episodes(dir / "test_traces.jsonl", test_eps, c.eval.timing);
  write_json(dir / "tuned_tau.json", {{"tau", fixed(tau)},
                                      {"within_tolerance", tuned.has_value()},
                                      {"tolerance", fixed(c.eval.tune_tolerance)},
                                      {"full_validation_accuracy", fixed(full_acc)},
                                      {"grid", grid_json}});

  ReportInputs report;
  report.rows = std::move(rows);
  report.provenance = {{"split", "test"}, {"seed", std::to_string(c.seed)}};
  report.include_wall_time = c.eval.timing;
  emit_report(report, dir);
  log("sweep-tau: tuned tau " + num(tau));
}

void Pipeline::run(std::optional<double> tau, std::vector<std::string> policies) {
  const auto& c = config_;
  const fs::path dir = ensure_dir(root() / "run");
  if (policies.empty()) policies = c.eval.policies;
  static const std::set<std::string> known{"cutoff", "full", "static", "bm25", "oracle"};
  for (const auto& p : policies) {
    if (!known.count(p)) throw ConfigError("unknown policy '" + p + "'");
  }
  const bool needs_cutoff = std::count(policies.begin(), policies.end(), "cutoff") > 0;
  double threshold = -1;
  if (needs_cutoff) {
    threshold = tau ? *tau : read_json(root() / "sweep" / "tuned_tau.json").at("tau").get<double>();
    decide(0.0, threshold);
  }

  const auto model = load_checkpoint(root() / "model" / "model.bin");
  const auto test_tasks = split_tasks("test");
  const int max_answer = c.eval.max_answer_tokens;
  std::optional<EnsembleModel> ensemble;
  if (needs_cutoff) ensemble = load_ensemble(root() / "classifier" / "ensemble.json");

  std::vector<Episode> episodes;
  for (const auto& p : policies) {
    for (const auto& t : test_tasks) {
      if (p == "cutoff") {
        CutoffConfig cc{threshold, c.chunking, ensemble->heads, max_answer};
        episodes.push_back(run_cutoff(model, *ensemble, t, cc));
      } else if (p == "full") {
        episodes.push_back(run_full(model, t, max_answer));
      } else if (p == "static") {
        episodes.push_back(run_static_truncate(model, t, c.eval.static_keep, max_answer));
      } else if (p == "bm25") {
        episodes.push_back(run_bm25_topk(model, t, c.chunking, c.eval.bm25_k, max_answer));
      } else {
        episodes.push_back(run_oracle(model, t, c.chunking, max_answer));
      }
    }
  }
  write_episodes(dir / "traces.jsonl", episodes, c.eval.timing);
  write_json(dir / "run.json", {{"tau", fixed(threshold)},
                                {"policies", policies},
                                {"tasks", test_tasks.size()}});
  log("run: " + std::to_string(episodes.size()) + " episodes");
}

void Pipeline::eval() {
  const auto& c = config_;
  const fs::path dir = ensure_dir(root() / "eval");
  const auto model = load_checkpoint(root() / "model" / "model.bin");
  const auto ensemble = load_ensemble(root() / "classifier" / "ensemble.json");
  const auto test_tasks = split_tasks("test");
  const auto labels = labels_by_task(test_tasks, c.chunking);
  const auto episodes = read_episodes(root() / "run" / "traces.jsonl");
  const double tau = read_json(root() / "sweep" / "tuned_tau.json").at("tau").get<double>();

  // Group in first-seen order of (policy, tau, setting).
  std::vector<std::tuple<std::string, double, std::string>> keys;
  std::map<std::tuple<std::string, double, std::string>, std::vector<Episode>> groups;
  for (const auto& e : episodes) {
    const auto key = std::make_tuple(e.trace.policy, e.trace.tau, e.trace.setting);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(e);
  }
  ReportInputs report;
  for (const auto& key : keys) {
    const auto& [policy, t, setting] = key;
    report.rows.push_back(summarize(to_policy_run(policy, t, setting, groups[key]), labels));
  }

  const auto all_chunks = score_all_chunks(model, ensemble, test_tasks, c.chunking, tau);
  report.confidence = confidence_curve(all_chunks.traces);
  report.provenance = {
      {"seed", std::to_string(c.seed)},
      {"dataset_single_hop", dataset_fingerprint(load_dataset(root() / "data" / "single_hop.jsonl"))},
      {"dataset_multi_hop", dataset_fingerprint(load_dataset(root() / "data" / "multi_hop.jsonl"))},
      {"classifier_fingerprint", ensemble.data_fingerprint},
      {"tau", num(tau)},
      {"config", config_echo(c)},
  };
  report.include_wall_time = c.eval.timing;
  emit_report(report, dir);

  std::vector<double> index, mean;
  for (const auto& p : report.confidence) {
    index.push_back(static_cast<double>(p.chunk_index));
    mean.push_back(p.mean_confidence);
  }
  ojson trend = {{"points", report.confidence.size()}};
  try {
    trend["spearman"] = fixed(spearman(index, mean));
  } catch (const UndefinedMetricError&) {
    trend["spearman"] = nullptr;
  }
  write_json(dir / "confidence_trend.json", trend);

  // Chunking comparison: one ensemble per strategy on the same heads.
  auto table_tasks = split_tasks("train");
  if (c.eval.table_train_tasks > 0 && table_tasks.size() > c.eval.table_train_tasks) {
    Rng rng(derive_seed(c.seed, "table"));
    rng.shuffle(std::span<TaskInstance>(table_tasks));
    table_tasks.resize(c.eval.table_train_tasks);
  }
  std::string table =
      "strategy\tclassifier_f1\trecall_at_90p\taccuracy\tmean_steps\tmean_chunks\ttoken_reduction\n";
  for (const auto& spec : c.eval.chunking_table) {
    const auto set = collect_activations(model, table_tasks, spec, ensemble.heads);
    const auto ens = build_ensemble(feature_matrix(set, ensemble.heads), labels_of(set),
                                    ensemble.heads, ensemble_options(c));
    const auto scored = score_all_chunks(model, ens, test_tasks, spec, tau);
    std::vector<int> pred;
    for (double s : scored.scores) pred.push_back(decide(s, tau));
    const double f = f1(pred, scored.labels).f1;
    double r90 = -1;
    try {
      r90 = recall_at_precision(scored.scores, scored.labels, 0.90);
    } catch (const UndefinedMetricError&) {
    }
    std::vector<Episode> eps;
    CutoffConfig cc{tau, spec, ens.heads, c.eval.max_answer_tokens};
    for (const auto& t : test_tasks) eps.push_back(run_cutoff(model, ens, t, cc));
    const auto pr = to_policy_run("cutoff", tau, spec.label(), eps);
    const auto row = summarize(pr, {});
    double chunks = 0;
    for (const auto& e : eps) chunks += static_cast<double>(e.trace.m);
    chunks /= static_cast<double>(eps.size());
    table += spec.label() + "\t" + num(f) + "\t" + num(r90) + "\t" + num(row.accuracy) + "\t" +
             num(row.mean_steps) + "\t" + num(chunks) + "\t" + num(row.token_reduction) + "\n";
    log("eval: chunking " + spec.label() + " done");
  }
  write_text(dir / "chunking_table.tsv", table);
  log("eval: report written to " + dir.string());
}

void Pipeline::all() {
  gen_data();
  train_model();
  probe();
  train_classifier();
  sweep_tau();
  run();
  eval();
}

}  // namespace dcc
