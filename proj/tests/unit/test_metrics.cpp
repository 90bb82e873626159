#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dcc/errors.hpp"
#include "dcc/metrics.hpp"
#include "dcc/random.hpp"
#include "dcc/sufficiency.hpp"
#include "oracles.hpp"

using namespace dcc;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<int> gold;
  std::vector<int> pred;
};

// Scores on a coarse grid so ties are common.
Instance random_instance(Rng& rng, bool both_classes) {
  Instance in;
  const std::size_t n = 2 + rng.uniform_index(11);
  for (;;) {
    in.scores.assign(n, 0);
    in.gold.assign(n, 0);
    in.pred.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      in.scores[i] = static_cast<double>(rng.uniform_index(6)) / 5.0;
      in.gold[i] = rng.uniform() < 0.5;
      in.pred[i] = rng.uniform() < 0.5;
    }
    const auto pos = std::count(in.gold.begin(), in.gold.end(), 1);
    if (!both_classes || (pos > 0 && pos < static_cast<long>(n))) return in;
  }
}

CutoffTrace trace(std::size_t full, std::size_t processed) {
  CutoffTrace t;
  t.tokens_full = full;
  t.tokens_processed = processed;
  return t;
}

}  // namespace

TEST_CASE("f1 examples") {
  auto r = f1(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0});
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
  CHECK(f1(std::vector<int>{1, 0, 1}, std::vector<int>{1, 0, 1}).f1 == 1.0);
  CHECK(f1(std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1}).f1 == 0.0);
  CHECK_THROWS_AS(f1(std::vector<int>{}, std::vector<int>{}), ContractError);
  CHECK_THROWS_AS(f1(std::vector<int>{1}, std::vector<int>{1, 0}), ContractError);
}

TEST_CASE("recall at precision examples") {
  CHECK(recall_at_precision(std::vector<double>{0.9, 0.8, 0.7, 0.2}, std::vector<int>{1, 1, 0, 0}, 0.9) == 1.0);
  CHECK(recall_at_precision(std::vector<double>{0.9, 0.8, 0.7, 0.2}, std::vector<int>{1, 0, 1, 0}, 0.9) == 0.5);
  for (double p : {0.5, 0.9, 0.99, 1.0}) {
    CHECK(recall_at_precision(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}, p) == 1.0);
  }
  CHECK_THROWS_AS(recall_at_precision(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}, 0.9),
                  UndefinedMetricError);
}

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{0, 1, 1}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.3, 0.4}, std::vector<int>{0, 0}), UndefinedMetricError);
}

TEST_CASE("metrics match brute-force oracles on 1000 random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = random_instance(rng, true);
    const auto got = f1(in.pred, in.gold);
    const auto want = oracle::f1(in.pred, in.gold);
    CHECK(got.precision == want.precision);
    CHECK(got.recall == want.recall);
    CHECK(got.f1 == want.f1);
    for (double p : {0.5, 0.9, 0.95, 0.98}) {
      CHECK(recall_at_precision(in.scores, in.gold, p) == oracle::recall_at_precision(in.scores, in.gold, p));
    }
    CHECK(auc(in.scores, in.gold) == oracle::auc(in.scores, in.gold));
  }
}

TEST_CASE("metric properties") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_instance(rng, true);
    double prev = 2;
    for (double p : {0.0, 0.3, 0.6, 0.9, 0.95, 1.0}) {
      const double r = recall_at_precision(in.scores, in.gold, p);
      CHECK(r <= prev);
      prev = r;
    }
    // AUC ignores strictly increasing transforms.
    std::vector<double> warped;
    for (double s : in.scores) warped.push_back(std::exp(3 * s) - 7);
    CHECK(auc(warped, in.gold) == auc(in.scores, in.gold));
  }
}

TEST_CASE("token reduction and accuracy") {
  std::vector<CutoffTrace> t{trace(1000, 750)};
  CHECK(format_factor(token_reduction(t)) == "1.33x");
  t = {trace(100, 100), trace(80, 80)};
  CHECK(token_reduction(t) == 1.0);
  t = {trace(100, 50), trace(100, 100)};
  CHECK(format_factor(token_reduction(t)) == "1.33x");
  std::reverse(t.begin(), t.end());
  CHECK(format_factor(token_reduction(t)) == "1.33x");
  CHECK_THROWS_AS(token_reduction(std::vector<CutoffTrace>{}), ContractError);

  std::vector<AnswerResult> r(4);
  CHECK(accuracy(r) == 0.0);
  for (auto& a : r) a.exact_match = true;
  CHECK(accuracy(r) == 1.0);
  r[2].exact_match = false;
  CHECK(accuracy(r) == 0.75);
  CHECK_THROWS_AS(accuracy(std::vector<AnswerResult>{}), ContractError);
}

TEST_CASE("confidence curve and spearman") {
  CutoffTrace a, b;
  a.steps = {{1, 0.2, 0}, {2, 0.6, 0}, {3, 0.9, 1}};
  b.steps = {{1, 0.4, 0}};
  auto curve = confidence_curve(std::vector<CutoffTrace>{a});
  REQUIRE(curve.size() == 3);
  CHECK(curve[1].mean_confidence == 0.6);
  curve = confidence_curve(std::vector<CutoffTrace>{a, b});
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].mean_confidence == doctest::Approx(0.3));
  CHECK(curve[0].count == 2);
  CHECK(curve[2].count == 1);

  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0.1, 0.5, 0.7, 0.9}) == doctest::Approx(1.0));
  CHECK(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1}), UndefinedMetricError);
}

TEST_CASE("summarize and emit_report") {
  PolicyRun run;
  run.policy = "cutoff";
  run.tau = 0.9;
  for (int i = 0; i < 4; ++i) {
    CutoffTrace t;
    t.task_id = "t" + std::to_string(i);
    t.steps = {{1, 0.2, 0}, {2, 0.95, 1}};
    t.k = 2;
    t.m = 4;
    t.context_tokens = 50;
    t.generated_tokens = 2;
    t.tokens_processed = 52;
    t.tokens_full = 102;
    run.traces.push_back(t);
    AnswerResult r;
    r.task_id = t.task_id;
    r.exact_match = i != 0;
    run.results.push_back(r);
  }
  std::map<std::string, std::vector<int>> labels;
  for (int i = 0; i < 4; ++i) labels["t" + std::to_string(i)] = {0, i % 2, 1, 1};
  const auto row = summarize(run, labels);
  CHECK(row.accuracy == 0.75);
  CHECK(row.token_reduction == doctest::Approx(102.0 / 52.0));
  CHECK(row.mean_cutoff_fraction == doctest::Approx(0.5));
  CHECK(row.mean_steps == 2.0);
  CHECK(row.classifier_f1 == doctest::Approx(oracle::f1({0, 1, 0, 1, 0, 1, 0, 1}, {0, 0, 0, 1, 0, 0, 0, 1}).f1));

  ReportInputs in;
  in.rows = {row, row};
  in.rows[1].policy = "full";
  in.provenance = {{"seed", "7"}};
  const auto dir = std::filesystem::temp_directory_path() / "dcc_unit_report";
  std::filesystem::remove_all(dir);
  emit_report(in, dir);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  };
  const auto first = slurp(dir / "summary.json");
  emit_report(in, dir);
  CHECK(slurp(dir / "summary.json") == first);
  for (const char* f : {"metrics.tsv", "frontier.tsv", "confidence_curve.tsv", "cost_vs_cutoff.tsv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto metrics = slurp(dir / "metrics.tsv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);
  CHECK(first.find("phase_seconds") == std::string::npos);
  std::filesystem::remove_all(dir);
}
