#include "dcc/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "dcc/chunking.hpp"
#include "dcc/errors.hpp"
#include "dcc/random.hpp"
#include "dcc/vocab.hpp"

namespace dcc {

namespace {

/// `count` distinct key tokens in random order.
std::vector<int> sample_keys(std::size_t count, Rng& rng) {
  std::vector<int> pool(vocab::kNumKeys);
  std::iota(pool.begin(), pool.end(), vocab::kFirstKey);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

int sample_value(Rng& rng) {
  return vocab::kFirstValue + static_cast<int>(rng.uniform_index(vocab::kNumValues));
}

std::size_t statement_capacity(std::size_t ctx_len) { return ctx_len / kStatementLen; }

void check_length(std::size_t ctx_len, std::size_t min_statements) {
  if (ctx_len < kMinContextLen) {
    throw ParameterError("context length " + std::to_string(ctx_len) + " below minimum " +
                         std::to_string(kMinContextLen));
  }
  const std::size_t s = statement_capacity(ctx_len);
  if (s > static_cast<std::size_t>(vocab::kNumKeys)) {
    throw ParameterError("context length " + std::to_string(ctx_len) + " needs more than " +
                         std::to_string(vocab::kNumKeys) + " distinct keys");
  }
  if (s < min_statements) {
    throw ParameterError("context length " + std::to_string(ctx_len) +
                         " cannot hold the chain plus a distractor chain");
  }
}

std::vector<int> render(const std::vector<std::pair<int, int>>& statements, std::size_t ctx_len) {
  std::vector<int> ctx;
  ctx.reserve(ctx_len);
  for (const auto& [key, slot] : statements) {
    ctx.push_back(key);
    ctx.push_back(slot);
    ctx.push_back(vocab::kSep);
  }
  ctx.resize(ctx_len, vocab::kFill);
  return ctx;
}

std::size_t draw_length(LengthRange r, Rng& rng) {
  if (r.max_len < r.min_len) throw ParameterError("length range: max < min");
  return r.min_len + static_cast<std::size_t>(rng.uniform_index(r.max_len - r.min_len + 1));
}

TaskInstance make_single_hop(std::size_t index, std::size_t ctx_len, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t s = statement_capacity(ctx_len);
  const auto keys = sample_keys(s, rng);
  std::vector<std::pair<int, int>> statements(s);
  for (std::size_t i = 0; i < s; ++i) statements[i] = {keys[i], sample_value(rng)};
  const std::size_t gold = rng.uniform_index(s);

  TaskInstance t;
  t.id = "sh-" + std::to_string(index);
  t.context = render(statements, ctx_len);
  t.query = {statements[gold].first};
  t.answer = {statements[gold].second};
  t.gold_end = gold * kStatementLen + 1;
  t.hops = 1;
  t.seed = seed;
  return t;
}

TaskInstance make_multi_hop(std::size_t index, std::size_t ctx_len, int chain_len,
                            std::uint64_t seed) {
  Rng rng(seed);
  const auto c = static_cast<std::size_t>(chain_len);
  const std::size_t s = statement_capacity(ctx_len);
  const std::size_t n_chains = s / c;
  const std::size_t leftovers = s - n_chains * c;
  const auto keys = sample_keys(n_chains * c + leftovers, rng);

  // Chain j uses keys[j*c .. j*c+c); link i maps key i to key i+1, the last
  // link maps to a value. Chain 0 is the queried one.
  auto link = [&](std::size_t chain, std::size_t i) -> std::pair<int, int> {
    const int key = keys[chain * c + i];
    const int slot = i + 1 < c ? keys[chain * c + i + 1] : sample_value(rng);
    return {key, slot};
  };
  std::vector<std::pair<int, int>> gold_links;
  for (std::size_t i = 0; i < c; ++i) gold_links.push_back(link(0, i));

  // The latest gold link lands on a uniform slot in [c-1, s); the others on
  // distinct uniform slots before it, in random chain order.
  const std::size_t last_slot = (c - 1) + rng.uniform_index(s - (c - 1));
  std::vector<std::size_t> earlier(last_slot);
  std::iota(earlier.begin(), earlier.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < c; ++i) {
    const std::size_t j = i + rng.uniform_index(earlier.size() - i);
    std::swap(earlier[i], earlier[j]);
  }
  std::vector<std::size_t> gold_slots(earlier.begin(), earlier.begin() + static_cast<std::ptrdiff_t>(c - 1));
  gold_slots.push_back(last_slot);
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::pair<int, int>> statements(s, {-1, -1});
  for (std::size_t i = 0; i < c; ++i) statements[gold_slots[i]] = gold_links[order[i]];

  std::vector<std::pair<int, int>> distractors;
  for (std::size_t chain = 1; chain < n_chains; ++chain)
    for (std::size_t i = 0; i < c; ++i) distractors.push_back(link(chain, i));
  for (std::size_t i = 0; i < leftovers; ++i) {
    distractors.push_back({keys[n_chains * c + i], sample_value(rng)});
  }
  rng.shuffle(std::span<std::pair<int, int>>(distractors));
  std::size_t next = 0;
  for (auto& st : statements) {
    if (st.first < 0) st = distractors[next++];
  }

  TaskInstance t;
  t.id = "mh" + std::to_string(chain_len) + "-" + std::to_string(index);
  t.context = render(statements, ctx_len);
  t.query = {gold_links.front().first};
  // The answer spells out the chain: every intermediate key, then the value.
  for (const auto& l : gold_links) t.answer.push_back(l.second);
  t.gold_end = last_slot * kStatementLen + 1;
  t.hops = chain_len;
  t.seed = seed;
  return t;
}

}  // namespace

std::vector<TaskInstance> gen_single_hop(std::size_t n, std::size_t ctx_len, std::uint64_t seed) {
  return gen_single_hop(n, LengthRange{ctx_len, ctx_len}, seed);
}

std::vector<TaskInstance> gen_single_hop(std::size_t n, LengthRange lengths, std::uint64_t seed) {
  check_length(lengths.min_len, 1);
  check_length(lengths.max_len, 1);
  std::vector<TaskInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    Rng len_rng(derive_seed(s, "length"));
    out.push_back(make_single_hop(i, draw_length(lengths, len_rng), s));
  }
  return out;
}

std::vector<TaskInstance> gen_multi_hop_kv(std::size_t n, std::size_t ctx_len, int chain_len,
                                           std::uint64_t seed) {
  return gen_multi_hop_kv(n, LengthRange{ctx_len, ctx_len}, chain_len, seed);
}

std::vector<TaskInstance> gen_multi_hop_kv(std::size_t n, LengthRange lengths, int chain_len,
                                           std::uint64_t seed) {
  if (chain_len < 2) throw ParameterError("multi-hop chain length must be >= 2");
  const auto need = static_cast<std::size_t>(2 * chain_len);
  check_length(lengths.min_len, need);
  check_length(lengths.max_len, need);
  std::vector<TaskInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    Rng len_rng(derive_seed(s, "length"));
    out.push_back(make_multi_hop(i, draw_length(lengths, len_rng), chain_len, s));
  }
  return out;
}

std::vector<int> derive_labels(const TaskInstance& task, const ChunkPlan& plan) {
  if (plan.length() != task.context.size()) {
    throw ContractError("derive_labels: plan covers " + std::to_string(plan.length()) +
                        " tokens but context has " + std::to_string(task.context.size()));
  }
  std::vector<int> labels(plan.num_chunks());
  for (std::size_t j = 0; j < plan.num_chunks(); ++j) {
    labels[j] = plan.boundaries[j] > task.gold_end ? 1 : 0;
  }
  return labels;
}

DatasetSplit split_dataset(const std::vector<TaskInstance>& tasks, std::uint64_t seed) {
  if (tasks.size() < 10) throw ContractError("split_dataset: needs at least 10 tasks");
  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_train = tasks.size() * 8 / 10;
  const std::size_t n_val = tasks.size() / 10;
  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& id = tasks[order[i]].id;
    if (i < n_train) split.train.push_back(id);
    else if (i < n_train + n_val) split.validation.push_back(id);
    else split.test.push_back(id);
  }
  return split;
}

std::vector<TaskInstance> select_tasks(const std::vector<TaskInstance>& tasks,
                                       const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const TaskInstance*> by_id;
  for (const auto& t : tasks) by_id[t.id] = &t;
  std::vector<TaskInstance> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("unknown task id " + id);
    out.push_back(*it->second);
  }
  return out;
}

std::vector<int> query_header(const TaskInstance& task) {
  std::vector<int> out{vocab::kBos, vocab::kQuery};
  out.insert(out.end(), task.query.begin(), task.query.end());
  out.push_back(vocab::kSep);
  return out;
}

std::vector<int> answer_prompt(const TaskInstance& task) {
  std::vector<int> out{vocab::kQuery};
  out.insert(out.end(), task.query.begin(), task.query.end());
  out.push_back(vocab::kAnswer);
  return out;
}

TrainingSequence make_training_sequence(const TaskInstance& task, const std::vector<int>& context,
                                        const std::vector<int>& answer) {
  TrainingSequence seq;
  seq.tokens = query_header(task);
  seq.tokens.insert(seq.tokens.end(), context.begin(), context.end());
  const auto prompt = answer_prompt(task);
  seq.tokens.insert(seq.tokens.end(), prompt.begin(), prompt.end());
  seq.answer_begin = seq.tokens.size();
  seq.tokens.insert(seq.tokens.end(), answer.begin(), answer.end());
  seq.tokens.push_back(vocab::kEnd);
  return seq;
}

std::vector<std::size_t> chain_statements(const TaskInstance& task) {
  if (task.query.empty()) throw ContractError("task " + task.id + " has no query");
  const std::size_t n = task.context.size() / kStatementLen;
  std::unordered_map<int, std::size_t> by_key;
  for (std::size_t i = 0; i < n; ++i) by_key.emplace(task.context[i * kStatementLen], i);
  std::vector<std::size_t> chain;
  int key = task.query.front();
  while (vocab::is_key(key)) {
    const auto it = by_key.find(key);
    if (it == by_key.end() || chain.size() >= n) break;
    chain.push_back(it->second);
    key = task.context[it->second * kStatementLen + 1];
  }
  if (chain.empty()) throw ContractError("task " + task.id + ": query key not in context");
  return chain;
}

namespace {

std::vector<int> short_view(const TaskInstance& task, std::size_t max_extra, Rng& rng) {
  const auto chain = chain_statements(task);
  const std::size_t n = task.context.size() / kStatementLen;
  std::vector<char> keep(n, 0);
  for (auto i : chain) keep[i] = 1;
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) others.push_back(i);
  }
  const std::size_t extra = std::min(others.size(), rng.uniform_index(max_extra + 1));
  for (std::size_t i = 0; i < extra; ++i) {
    const std::size_t j = i + rng.uniform_index(others.size() - i);
    std::swap(others[i], others[j]);
    keep[others[i]] = 1;
  }
  std::vector<int> ctx;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    const auto at = task.context.begin() + static_cast<std::ptrdiff_t>(i * kStatementLen);
    ctx.insert(ctx.end(), at, at + kStatementLen);
  }
  return ctx;
}

}  // namespace

std::vector<TrainingSequence> build_training_corpus(const std::vector<TaskInstance>& tasks,
                                                    const CorpusOptions& options,
                                                    std::uint64_t seed) {
  std::vector<TrainingSequence> corpus;
  corpus.reserve(tasks.size());
  Rng rng(derive_seed(seed, "corpus"));
  for (const auto& task : tasks) {
    const bool cut = options.insufficient_fraction > 0 && task.gold_end >= 1 &&
                     rng.uniform() < options.insufficient_fraction;
    if (cut) {
      // Any prefix that ends before gold_end lacks the latest required fact.
      const std::size_t len = 1 + rng.uniform_index(task.gold_end);
      const std::vector<int> prefix(task.context.begin(),
                                    task.context.begin() + static_cast<std::ptrdiff_t>(len));
      corpus.push_back(make_training_sequence(task, prefix, {vocab::kNone}));
    } else if (options.short_view_fraction > 0 && rng.uniform() < options.short_view_fraction) {
      corpus.push_back(
          make_training_sequence(task, short_view(task, options.short_view_extra, rng), task.answer));
    } else {
      corpus.push_back(make_training_sequence(task, task.context, task.answer));
    }
  }
  return corpus;
}

std::string task_to_json_line(const TaskInstance& task) {
  const nlohmann::ordered_json j = {
      {"id", task.id},          {"context", task.context}, {"query", task.query},
      {"answer", task.answer},  {"gold_end", task.gold_end}, {"hops", task.hops},
      {"seed", task.seed},
  };
  return j.dump();
}

TaskInstance task_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    TaskInstance t;
    t.id = j.at("id").get<std::string>();
    t.context = j.at("context").get<std::vector<int>>();
    t.query = j.at("query").get<std::vector<int>>();
    t.answer = j.at("answer").get<std::vector<int>>();
    t.gold_end = j.at("gold_end").get<std::size_t>();
    t.hops = j.at("hops").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    if (t.gold_end >= t.context.size()) throw FormatError("gold_end outside context in " + t.id);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset record: ") + e.what());
  }
}

void save_dataset(const std::vector<TaskInstance>& tasks, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write dataset " + path.string());
  for (const auto& t : tasks) os << task_to_json_line(t) << '\n';
  if (!os) throw IoError("failed writing dataset " + path.string());
}

std::vector<TaskInstance> load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read dataset " + path.string());
  std::vector<TaskInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(task_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string dataset_fingerprint(const std::vector<TaskInstance>& tasks) {
  std::uint64_t h = fnv1a("");
  for (const auto& t : tasks) {
    h = mix64(h ^ fnv1a(task_to_json_line(t)));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GoldStats gold_location_stats(const std::vector<TaskInstance>& tasks) {
  GoldStats s;
  if (tasks.empty()) return s;
  s.min = 1.0;
  double sum = 0;
  std::vector<double> locs;
  locs.reserve(tasks.size());
  for (const auto& t : tasks) {
    const double loc = static_cast<double>(t.gold_end) / static_cast<double>(t.context.size());
    locs.push_back(loc);
    sum += loc;
    s.min = std::min(s.min, loc);
    s.max = std::max(s.max, loc);
  }
  s.mean = sum / static_cast<double>(locs.size());
  double var = 0;
  for (double l : locs) var += (l - s.mean) * (l - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(locs.size()));
  return s;
}

}  // namespace dcc
