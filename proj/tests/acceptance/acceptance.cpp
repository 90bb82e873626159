// Acceptance suite: runs the default pipeline (reusing finished stages when
// the config is unchanged) and prints one PASS/FAIL line per criterion.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dcc/config.hpp"
#include "dcc/cutoff.hpp"
#include "dcc/errors.hpp"
#include "dcc/metrics.hpp"
#include "dcc/pipeline.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dcc;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

struct Verdict {
  enum Kind { pass, fail, flag } kind = fail;
  std::string detail;
};

Verdict check(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

// ---------------------------------------------------------------------------
// Pipeline driver with per-stage caching

struct Stage {
  const char* name;
  const char* marker;  // last file the stage writes
  std::function<void(Pipeline&)> run;
};

class Runner {
 public:
  Runner(RunConfig cfg, bool fresh) : pipe_(cfg, [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); }) {
    const fs::path root = pipe_.root();
    // The key leaves out the work path, so relative and absolute --work agree.
    RunConfig key = cfg;
    key.out.clear();
    const auto echo = serialize_config(key);
    const fs::path stamp = root / "acceptance_config.json";
    if (fresh || !fs::exists(stamp) || slurp(stamp) != echo) {
      fs::remove_all(root);
      fs::create_directories(root);
      write_file(stamp, echo);
    }
    timing_path_ = root / "acceptance_timing.json";
    if (fs::exists(timing_path_)) timing_ = read_json(timing_path_);
  }

  void run_all() {
    const std::vector<Stage> stages{
        {"gen-data", "data/stats.json", [](Pipeline& p) { p.gen_data(); }},
        {"train-model", "model/competence.json", [](Pipeline& p) { p.train_model(); }},
        {"probe", "probe/selected.json", [](Pipeline& p) { p.probe(); }},
        {"train-classifier", "classifier/validation.json", [](Pipeline& p) { p.train_classifier(); }},
        {"sweep-tau", "sweep/tuned_tau.json", [](Pipeline& p) { p.sweep_tau(); }},
        {"run", "run/run.json", [](Pipeline& p) { p.run(); }},
        {"eval", "eval/chunking_table.tsv", [](Pipeline& p) { p.eval(); }},
    };
    bool stale = false;
    for (const auto& s : stages) {
      stale = stale || !fs::exists(pipe_.root() / s.marker) || !timing_.contains(s.name);
      if (!stale) {
        std::fprintf(stderr, "%s: cached (%.1f s)\n", s.name, seconds(s.name));
        continue;
      }
      std::fprintf(stderr, "%s: running\n", s.name);
      const auto t0 = Clock::now();
      s.run(pipe_);
      timing_[s.name] = since(t0);
      write_file(timing_path_, timing_.dump(2));
    }
  }

  double seconds(const std::string& stage) const { return timing_.value(stage, -1.0); }
  Pipeline& pipeline() { return pipe_; }
  fs::path root() const { return pipe_.root(); }

 private:
  Pipeline pipe_;
  fs::path timing_path_;
  json timing_ = json::object();
};

// ---------------------------------------------------------------------------
// Criteria

// Random models (L 2-4, H 4-8), random sequences up to 256 tokens and random
// partitions: chunked cached forwarding against one pass.
Verdict cache_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(4242);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    ModelConfig cfg;
    cfg.n_layers = static_cast<int>(rng.uniform_int(2, 4));
    cfg.n_heads = rng.uniform() < 0.5 ? 4 : 8;
    cfg.d_model = cfg.n_heads * 8;
    cfg.d_ff = 2 * cfg.d_model;
    cfg.max_positions = 256;
    cfg.seed = rng.next_u64();
    const Transformer model(cfg);
    const auto heads = all_heads(cfg);

    const auto len = static_cast<std::size_t>(rng.uniform_int(1, 256));
    std::vector<int> tokens(len);
    for (auto& t : tokens) t = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.vocab_size)));
    std::vector<std::size_t> cuts{0, len};
    const auto n_cuts = rng.uniform_index(std::min<std::uint64_t>(len, 16));
    for (std::uint64_t i = 0; i < n_cuts; ++i) cuts.push_back(1 + rng.uniform_index(len - 1));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto single = model.make_cache();
    const auto ref = model.forward(tokens, single, heads, LogitsMode::last);
    auto cache = model.make_cache();
    ForwardOutput out;
    for (std::size_t c = 1; c < cuts.size(); ++c) {
      out = model.forward(std::span<const int>(tokens).subspan(cuts[c - 1], cuts[c] - cuts[c - 1]), cache, heads,
                          LogitsMode::last);
    }
    for (std::size_t j = 0; j < ref.logits.size(); ++j)
      worst = std::max(worst, double(std::abs(ref.logits[j] - out.logits[j])));
    for (const auto& h : heads)
      for (std::size_t j = 0; j < ref.taps.at(h).size(); ++j)
        worst = std::max(worst, double(std::abs(ref.taps.at(h)[j] - out.taps.at(h)[j])));
  }
  const double secs = since(t0);
  return check(worst <= 1e-4 && secs < 60, "50 random (model, sequence, partition) triples, max |diff| " +
                                               fmt("%.2e", worst) + ", " + fmt("%.1f s", secs));
}

Verdict competence(Runner& r) {
  const auto c = read_json(r.root() / "model" / "competence.json");
  const double single = c.value("single_hop", 0.0);
  const double multi = c.value("multi_hop", 0.0);
  const double secs = r.seconds("train-model");
  return check(single >= 0.95 && multi >= 0.85 && secs <= 1800,
               "single-hop " + fmt("%.3f", single) + " (>= 0.95), 2-hop " + fmt("%.3f", multi) +
                   " (>= 0.85), training " + fmt("%.0f s", secs) + " (<= 1800)");
}

Verdict probe_gap(Runner& r) {
  const auto s = read_json(r.root() / "probe" / "selected.json");
  const double best = s.at("best_f1").get<double>();
  const double control = s.at("control_best_f1").get<double>();
  return check(best >= 0.85 && best - control >= 0.15,
               "best head F1 " + fmt("%.3f", best) + ", control " + fmt("%.3f", control) + ", gap " +
                   fmt("%.3f", best - control));
}

Verdict ensemble_quality(Runner& r) {
  const auto v = read_json(r.root() / "classifier" / "validation.json");
  const double ens = v.at("ensemble_f1").get<double>();
  const double probe = v.at("best_probe_f1").get<double>();
  const double sel = v.at("selected_mean_cv_auc").get<double>();
  const double med = v.at("pool_median_cv_auc").get<double>();
  return check(ens >= probe - 0.02 && sel >= med,
               "ensemble F1 " + fmt("%.3f", ens) + " vs best probe " + fmt("%.3f", probe) +
                   ", selected CV AUC " + fmt("%.3f", sel) + " vs pool median " + fmt("%.3f", med));
}

std::vector<Episode> read_episodes(const fs::path& p) {
  std::vector<Episode> eps;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) eps.push_back(episode_from_json_line(line));
  return eps;
}

Verdict efficiency(Runner& r) {
  const double tau = read_json(r.root() / "sweep" / "tuned_tau.json").at("tau").get<double>();
  std::map<std::string, std::vector<CutoffTrace>> traces;
  std::map<std::string, std::vector<AnswerResult>> results;
  for (const auto& e : read_episodes(r.root() / "run" / "traces.jsonl")) {
    traces[e.trace.policy].push_back(e.trace);
    results[e.trace.policy].push_back(e.answer);
  }
  if (!traces.count("cutoff") || !traces.count("full")) return check(false, "run lacks cutoff or full traces");
  const double red = token_reduction(traces["cutoff"]);
  const double drop = accuracy(results["full"]) - accuracy(results["cutoff"]);
  return check(red >= 1.2 && drop <= 0.02,
               "tau " + fmt("%.2f", tau) + " (tuned on validation): reduction " + format_factor(red) +
                   " (>= 1.2x), accuracy drop " + fmt("%.1f", 100 * drop) + " points (<= 2)");
}

Verdict monotone_k(Runner& r) {
  std::map<std::string, std::vector<std::pair<double, std::size_t>>> by_task;
  for (const auto& e : read_episodes(r.root() / "sweep" / "test_traces.jsonl")) {
    by_task[e.trace.task_id].push_back({e.trace.tau, e.trace.k});
  }
  std::size_t violations = 0;
  for (auto& [id, ks] : by_task) {
    std::sort(ks.begin(), ks.end());
    for (std::size_t i = 1; i < ks.size(); ++i) violations += ks[i].second < ks[i - 1].second;
  }
  const std::size_t grid = by_task.empty() ? 0 : by_task.begin()->second.size();
  return check(by_task.size() >= 100 && grid >= 2 && violations == 0,
               std::to_string(by_task.size()) + " test tasks x " + std::to_string(grid) + " tau values, " +
                   std::to_string(violations) + " decreases");
}

Verdict metric_oracles() {
  Rng rng(20241);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(11);
    std::vector<double> s(n);
    std::vector<int> y(n), p(n);
    do {
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.uniform_index(6)) / 5.0;
        y[i] = rng.uniform() < 0.5;
        p[i] = rng.uniform() < 0.5;
      }
    } while (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0);
    const auto a = f1(p, y);
    const auto b = oracle::f1(p, y);
    mismatches += a.f1 != b.f1 || a.precision != b.precision || a.recall != b.recall;
    mismatches += auc(s, y) != oracle::auc(s, y);
    for (double prec : {0.5, 0.9, 0.95})
      mismatches += recall_at_precision(s, y, prec) != oracle::recall_at_precision(s, y, prec);
  }
  return check(mismatches == 0, "1000 instances (n <= 12), " + std::to_string(mismatches) + " mismatches");
}

Verdict label_stats(Runner& r) {
  const auto stats = read_json(r.root() / "data" / "stats.json");
  bool ok = true;
  std::string detail;
  for (const char* fam : {"single_hop", "multi_hop"}) {
    const auto& s = stats.at(fam);
    const double mean = s.at("gold_mean").get<double>();
    const double sd = s.at("gold_std").get<double>();
    const double suf = s.at("sufficient_fraction").get<double>();
    const auto n = s.at("n").get<std::size_t>();
    ok = ok && n >= 600 && mean >= 0.45 && mean <= 0.55 && sd >= 0.20 && sd <= 0.30 && suf >= 0.45 &&
         suf <= 0.60 && s.at("chunking").get<std::string>() == "10%";
    detail += std::string(detail.empty() ? "" : "; ") + fam + " n=" + std::to_string(n) + " mean " +
              fmt("%.3f", mean) + " std " + fmt("%.3f", sd) + " sufficient " + fmt("%.3f", suf);
  }
  return check(ok, detail);
}

Verdict gradients() {
  using namespace dcc::testing;
  Rng rng(17);
  std::vector<std::pair<std::string, double>> kernels{
      {"matmul", check_matmul(rng, 4, 5, 3)},
      {"row_bias", check_row_bias(rng, 4, 6)},
      {"softmax", check_softmax(rng, 3, 7)},
      {"layer_norm", check_layer_norm(rng, 3, 8)},
      {"gelu", check_gelu(rng, 4, 5)},
      {"cross_entropy", check_cross_entropy(rng, 3, 9)},
      {"attention", check_attention(rng, 3, 2, 2, 3)},
      {"probe_loss", check_probe_loss(rng, 12, 5)},
  };
  const auto model = check_transformer(13);
  kernels.push_back({"transformer", *std::max_element(model.begin(), model.end())});
  double worst = 0;
  std::string detail;
  for (const auto& [name, err] : kernels) {
    worst = std::max(worst, err);
    detail += (detail.empty() ? "" : " ") + name + "=" + fmt("%.1e", err);
  }
  return check(worst < kTol, "eps " + fmt("%.0e", kEps) + ", max relative error " + fmt("%.2e", worst) +
                                 " (" + detail + ")");
}

Verdict confidence_trend(Runner& r) {
  const auto t = read_json(r.root() / "eval" / "confidence_trend.json");
  if (t.at("spearman").is_null()) return {Verdict::flag, "spearman undefined"};
  const double rho = t.at("spearman").get<double>();
  return {rho > 0.8 ? Verdict::pass : Verdict::flag,
          "spearman " + fmt("%.3f", rho) + " over " + std::to_string(t.at("points").get<int>()) + " chunk indices"};
}

Verdict chunking_table(Runner& r) {
  const auto rows = read_tsv(r.root() / "eval" / "chunking_table.tsv");
  std::vector<std::string> want;
  for (const auto& s : r.pipeline().config().eval.chunking_table) want.push_back(s.label());
  std::vector<std::string> got;
  std::vector<std::pair<double, double>> chunks_steps;
  for (const auto& row : rows) {
    if (row.size() != 7) return check(false, "malformed row in chunking_table.tsv");
    got.push_back(row[0]);
    chunks_steps.push_back({std::stod(row[5]), std::stod(row[4])});
  }
  std::sort(chunks_steps.begin(), chunks_steps.end());
  bool monotone = true;
  std::string detail;
  for (std::size_t i = 0; i < chunks_steps.size(); ++i) {
    if (i > 0 && chunks_steps[i].second < chunks_steps[i - 1].second) monotone = false;
  }
  for (const auto& row : rows) detail += (detail.empty() ? "" : ", ") + row[0] + " steps " + row[4];
  return check(got == want && monotone, detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the dynamic context cutoff pipeline"};
  std::string work = "acceptance_work";
  std::string config_path;
  bool fresh = false;
  std::vector<std::string> known;
  app.add_option("--work", work, "Work directory; finished stages are reused");
  app.add_option("--known-failures", known, "Criterion ids (e.g. A3,A5) whose failure does not fail the run")
      ->delimiter(',');
  app.add_option("--config", config_path, "JSON config (defaults when omitted)");
  app.add_flag("--fresh", fresh, "Ignore cached stages");
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    cfg.out = work;
    cfg.validate();

    const std::vector<std::pair<const char*, std::function<Verdict()>>> pre{
        {"A1 cache equivalence", cache_equivalence},
        {"A7 metric oracles", metric_oracles},
        {"A9 gradient checks", gradients},
    };
    std::vector<std::pair<std::string, Verdict>> results;
    for (const auto& [name, fn] : pre) results.push_back({name, fn()});

    Runner runner(cfg, fresh);
    runner.run_all();
    const std::vector<std::pair<const char*, std::function<Verdict(Runner&)>>> post{
        {"A2 model competence", competence}, {"A3 probe vs control", probe_gap},
        {"A4 ensemble quality", ensemble_quality}, {"A5 cost reduction", efficiency},
        {"A6 k monotone in tau", monotone_k}, {"A8 gold locations", label_stats},
        {"A10 confidence trend", confidence_trend}, {"A11 chunking table", chunking_table},
    };
    for (const auto& [name, fn] : post) {
      try {
        results.push_back({name, fn(runner)});
      } catch (const std::exception& e) {
        results.push_back({name, check(false, e.what())});
      }
    }
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
      return std::stoi(a.first.substr(1)) < std::stoi(b.first.substr(1));
    });

    int failures = 0, unexpected = 0;
    for (const auto& [name, v] : results) {
      const char* tag = v.kind == Verdict::pass ? "PASS" : v.kind == Verdict::flag ? "FLAG" : "FAIL";
      const std::string id = name.substr(0, name.find(' '));
      const bool is_known = std::find(known.begin(), known.end(), id) != known.end();
      std::printf("%s %-22s %s%s\n", tag, name.c_str(), v.detail.c_str(),
                  v.kind == Verdict::fail && is_known ? " [known failure]" : "");
      failures += v.kind == Verdict::fail;
      unexpected += v.kind == Verdict::fail && !is_known;
    }
    std::printf("%d of %zu criteria failed (%d not in the known-failure list)\n", failures, results.size(),
                unexpected);
    return unexpected == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: %s\n", e.what());
    return 2;
  }
}
