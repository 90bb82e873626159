#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "dcc/chunking.hpp"
#include "dcc/errors.hpp"
#include "dcc/tasks.hpp"
#include "dcc/vocab.hpp"

using namespace dcc;

namespace {

// Brute-force scan: every statement on the query chain, found by matching
// keys without the library helper.
std::vector<std::size_t> scan_chain(const TaskInstance& t) {
  std::vector<std::size_t> out;
  int key = t.query.front();
  for (int hop = 0; hop < 16; ++hop) {
    bool found = false;
    for (std::size_t i = 0; i + 2 < t.context.size(); i += 3) {
      if (t.context[i] == key && t.context[i + 2] == vocab::kSep) {
        out.push_back(i);
        key = t.context[i + 1];
        found = true;
        break;
      }
    }
    if (!found || !vocab::is_key(key)) break;
  }
  return out;
}

}  // namespace

TEST_CASE("single-hop generation") {
  const auto tasks = gen_single_hop(50, LengthRange{64, 128}, 42);
  REQUIRE(tasks.size() == 50);
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    ids.insert(t.id);
    CHECK(t.context.size() >= 64);
    CHECK(t.context.size() <= 128);
    CHECK(t.hops == 1);
    REQUIRE(t.gold_end < t.context.size());
    // The gold statement holds the query key and the answer value.
    CHECK(t.context[t.gold_end - 1] == t.query[0]);
    CHECK(t.context[t.gold_end] == t.answer[0]);
    CHECK(t.answer[0] >= vocab::kFirstKey + vocab::kNumKeys);
    // Keys are unique within a context.
    std::set<int> keys;
    std::size_t statements = 0;
    for (std::size_t i = 0; i + 2 < t.context.size(); i += 3) {
      if (t.context[i + 2] != vocab::kSep) continue;
      keys.insert(t.context[i]);
      ++statements;
    }
    CHECK(keys.size() == statements);
  }
  CHECK(ids.size() == 50);
  CHECK(gen_single_hop(50, LengthRange{64, 128}, 42) == tasks);
  CHECK(gen_single_hop(0, 64, 1).empty());
  CHECK_THROWS_AS(gen_single_hop(1, 16, 1), ParameterError);
}

TEST_CASE("multi-hop generation and answerability") {
  for (int hops : {2, 3}) {
    const auto tasks = gen_multi_hop_kv(40, LengthRange{64, 128}, hops, 7);
    for (const auto& t : tasks) {
      CHECK(t.hops == hops);
      const auto chain = scan_chain(t);
      REQUIRE(chain.size() == static_cast<std::size_t>(hops));
      // The answer lists the slot of every link, and gold_end is the latest
      // required position.
      REQUIRE(t.answer.size() == chain.size());
      for (std::size_t i = 0; i < chain.size(); ++i) CHECK(t.context[chain[i] + 1] == t.answer[i]);
      CHECK(t.answer.back() >= vocab::kFirstKey + vocab::kNumKeys);
      std::size_t latest = 0;
      for (auto s : chain) latest = std::max(latest, s + 1);
      CHECK(t.gold_end == latest);
      const auto lib = chain_statements(t);
      REQUIRE(lib.size() == chain.size());
      for (std::size_t i = 0; i < chain.size(); ++i) CHECK(lib[i] * 3 == chain[i]);

      // Every link sits inside the sufficient prefix under 10% chunking.
      const auto plan = plan_chunks(t.context.size(), ChunkingSpec::percent(0.10));
      const auto labels = derive_labels(t, plan);
      const auto k = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), 1) - labels.begin());
      REQUIRE(k < labels.size());
      for (auto s : chain) CHECK(s + 1 < plan.boundaries[k]);
    }
  }
  CHECK_THROWS_AS(gen_multi_hop_kv(1, 32, 8, 1), ParameterError);
  CHECK_THROWS_AS(gen_multi_hop_kv(1, 64, 1, 1), ParameterError);
}

TEST_CASE("gold locations and label balance") {
  const auto single = gen_single_hop(600, LengthRange{64, 128}, 1);
  const auto g = gold_location_stats(single);
  CHECK(g.mean >= 0.45);
  CHECK(g.mean <= 0.55);
  CHECK(g.stddev >= 0.20);
  CHECK(g.stddev <= 0.30);
}

TEST_CASE("derive_labels examples") {
  TaskInstance t;
  t.context.assign(100, vocab::kFill);
  const auto plan = plan_chunks(100, ChunkingSpec::percent(0.10));
  t.gold_end = 35;  // chunk 4
  CHECK(derive_labels(t, plan) == std::vector<int>{0, 0, 0, 1, 1, 1, 1, 1, 1, 1});
  t.gold_end = 0;
  CHECK(derive_labels(t, plan) == std::vector<int>(10, 1));
  t.gold_end = 99;
  CHECK(derive_labels(t, plan) == std::vector<int>{0, 0, 0, 0, 0, 0, 0, 0, 0, 1});
  CHECK_THROWS_AS(derive_labels(t, plan_chunks(90, ChunkingSpec::percent(0.10))), ContractError);
}

TEST_CASE("dataset split") {
  const auto tasks = gen_single_hop(600, 64, 3);
  const auto s = split_dataset(tasks, 9);
  CHECK(s.train.size() == 480);
  CHECK(s.validation.size() == 60);
  CHECK(s.test.size() == 60);
  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 600);
  const auto again = split_dataset(tasks, 9);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);

  const auto ten = split_dataset(gen_single_hop(10, 64, 3), 1);
  CHECK(ten.train.size() == 8);
  CHECK(ten.validation.size() == 1);
  CHECK(ten.test.size() == 1);
  CHECK_THROWS_AS(split_dataset(gen_single_hop(9, 64, 3), 1), ContractError);
}

TEST_CASE("dataset files round trip") {
  const auto tasks = gen_multi_hop_kv(5, 64, 2, 4);
  const auto path = std::filesystem::temp_directory_path() / "dcc_unit_tasks.jsonl";
  save_dataset(tasks, path);
  CHECK(load_dataset(path) == tasks);
  CHECK(dataset_fingerprint(load_dataset(path)) == dataset_fingerprint(tasks));
  CHECK(dataset_fingerprint(tasks).size() == 16);
  CHECK_THROWS_AS(task_from_json_line("{\"id\": 3}"), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("prompt layout") {
  TaskInstance t;
  t.query = {20};
  t.answer = {300};
  t.context = {20, 300, vocab::kSep};
  CHECK(query_header(t) == std::vector<int>{vocab::kBos, vocab::kQuery, 20, vocab::kSep});
  CHECK(answer_prompt(t) == std::vector<int>{vocab::kQuery, 20, vocab::kAnswer});
  const auto seq = make_training_sequence(t, t.context, t.answer);
  CHECK(seq.tokens == std::vector<int>{vocab::kBos, vocab::kQuery, 20, vocab::kSep, 20, 300,
                                       vocab::kSep, vocab::kQuery, 20, vocab::kAnswer, 300,
                                       vocab::kEnd});
  CHECK(seq.answer_begin == 10);
}

TEST_CASE("training corpus options") {
  const auto tasks = gen_multi_hop_kv(200, LengthRange{64, 128}, 2, 5);
  const auto plain = build_training_corpus(tasks, {}, 1);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(plain[i].tokens == make_training_sequence(tasks[i], tasks[i].context, tasks[i].answer).tokens);
  }

  CorpusOptions cut;
  cut.insufficient_fraction = 0.5;
  std::size_t none = 0;
  for (const auto& s : build_training_corpus(tasks, cut, 1)) none += s.tokens[s.answer_begin] == vocab::kNone;
  CHECK(none > 60);
  CHECK(none < 140);

  CorpusOptions shorter;
  shorter.short_view_fraction = 1.0;
  shorter.short_view_extra = 2;
  const auto views = build_training_corpus(tasks, shorter, 1);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const auto& s = views[i];
    const std::size_t ctx = s.answer_begin - query_header(t).size() - answer_prompt(t).size();
    CHECK(ctx % 3 == 0);
    CHECK(ctx / 3 >= 2);
    CHECK(ctx / 3 <= 4);
    // The short view still answers the question.
    TaskInstance view = t;
    view.context.assign(s.tokens.begin() + 4, s.tokens.begin() + 4 + static_cast<std::ptrdiff_t>(ctx));
    CHECK(chain_statements(view).size() == 2);
    CHECK(s.tokens[s.answer_begin] == t.answer[0]);
  }
  CHECK(build_training_corpus(tasks, shorter, 1)[7].tokens == views[7].tokens);
}

// ---------------------------------------------------------------------------
// Chunking

TEST_CASE("percent chunking examples") {
  auto p = plan_chunks(100, ChunkingSpec::percent(0.10));
  CHECK(p.boundaries == std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90, 100});
  p = plan_chunks(105, ChunkingSpec::percent(0.10));
  CHECK(p.boundaries == std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90, 105});
  p = plan_chunks(7, ChunkingSpec::fixed(3));
  CHECK(p.boundaries == std::vector<std::size_t>{3, 6, 7});
  CHECK_THROWS_AS(plan_chunks(10, ChunkingSpec::percent(0.0)), ParameterError);
  CHECK_THROWS_AS(plan_chunks(10, ChunkingSpec::percent(1.5)), ParameterError);
}

TEST_CASE("boundary chunking ends after each separator") {
  const std::vector<int> ctx{9, 10, 2, 11, 12, 2, 13};
  const auto p = plan_chunks(ctx.size(), ChunkingSpec::boundary(2), ctx);
  CHECK(p.boundaries == std::vector<std::size_t>{3, 6, 7});
}

TEST_CASE("chunk plans partition the context") {
  const std::vector<ChunkingSpec> specs{ChunkingSpec::percent(0.01), ChunkingSpec::percent(0.05),
                                        ChunkingSpec::percent(0.10), ChunkingSpec::percent(0.2),
                                        ChunkingSpec::percent(0.3), ChunkingSpec::percent(1.0),
                                        ChunkingSpec::fixed(1), ChunkingSpec::fixed(7),
                                        ChunkingSpec::boundary(2)};
  const auto tasks = gen_single_hop(5, LengthRange{32, 300}, 1);
  for (const auto& spec : specs) {
    for (const auto& t : tasks) {
      const std::size_t len = t.context.size();
      const auto plan = plan_chunks(len, spec, t.context);
      REQUIRE(plan.length() == len);
      std::size_t covered = 0;
      for (std::size_t i = 1; i <= plan.num_chunks(); ++i) {
        const auto d = delta(plan, i);
        CHECK(d.begin == covered);
        CHECK(d.size() > 0);
        covered = d.end;
        const auto c = cumulative(plan, i);
        CHECK(c.range.begin == 0);
        CHECK(c.range.end == d.end);
        if (i > 1) CHECK(cumulative(plan, i - 1).range.end < c.range.end);
      }
      CHECK(covered == len);
      CHECK(delta(plan, 1) == cumulative(plan, 1).range);
      CHECK(cumulative(plan, plan.num_chunks()).range.end == len);
      if (spec.strategy == ChunkStrategy::percent) {
        const auto expect = static_cast<std::size_t>(std::ceil(1.0 / spec.value - 1e-9));
        if (len >= expect) CHECK(plan.num_chunks() == expect);
      }
      for (std::size_t pos = 0; pos < len; pos += 13) {
        const auto j = chunk_of(plan, pos);
        CHECK(delta(plan, j + 1).begin <= pos);
        CHECK(pos < delta(plan, j + 1).end);
      }
      CHECK_THROWS_AS(cumulative(plan, 0), ContractError);
      CHECK_THROWS_AS(cumulative(plan, plan.num_chunks() + 1), ContractError);
    }
  }
}

TEST_CASE("sufficient fraction under 10% chunking") {
  for (auto tasks : {gen_single_hop(600, LengthRange{64, 128}, 2),
                     gen_multi_hop_kv(600, LengthRange{64, 128}, 2, 2)}) {
    std::size_t ones = 0, total = 0;
    for (const auto& t : tasks) {
      const auto labels = derive_labels(t, plan_chunks(t.context.size(), ChunkingSpec::percent(0.10)));
      CHECK(std::is_sorted(labels.begin(), labels.end()));
      ones += static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
      total += labels.size();
    }
    const double frac = static_cast<double>(ones) / static_cast<double>(total);
    CHECK(frac >= 0.45);
    CHECK(frac <= 0.60);
  }
}
