#include "dcc/config.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "dcc/errors.hpp"

namespace dcc {

namespace {

using json = nlohmann::ordered_json;

// Reads the fields of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, field(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    std::vector<std::string> unknown;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) unknown.push_back(field(k.c_str()));
    }
    if (unknown.empty()) return;
    std::string msg = "unknown config key";
    msg += unknown.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw ConfigError(msg);
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ChunkingSpec chunking_from(const json& j, const std::string& path) {
  Section s(j, path);
  std::string strategy = "percent";
  double value = 0.10;
  s.read("strategy", strategy);
  s.read("value", value);
  s.finish();
  ChunkingSpec spec;
  try {
    spec.strategy = parse_strategy(strategy);
  } catch (const Error&) {
    throw ConfigError(path + ".strategy: unknown strategy '" + strategy + "'");
  }
  spec.value = value;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(path + ".value: " + e.what());
  }
  return spec;
}

json chunking_to(const ChunkingSpec& c) {
  return {{"strategy", c.strategy_name()}, {"value", c.value}};
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  require(train.steps >= 0, "train.steps", "must be >= 0");
  require(train.batch_size >= 1, "train.batch_size", "must be >= 1");
  require(train.lr > 0, "train.lr", "must be > 0");
  require(train.beta1 > 0 && train.beta1 < 1, "train.beta1", "must be in (0, 1)");
  require(train.beta2 > 0 && train.beta2 < 1, "train.beta2", "must be in (0, 1)");
  require(train.min_lr_ratio >= 0 && train.min_lr_ratio <= 1, "train.min_lr_ratio",
          "must be in [0, 1]");
  require(data.single_hop == 0 || data.single_hop >= 10, "data.single_hop", "must be 0 or >= 10");
  require(data.multi_hop == 0 || data.multi_hop >= 10, "data.multi_hop", "must be 0 or >= 10");
  require(data.single_hop + data.multi_hop > 0, "data", "needs at least one task family");
  require(data.min_len >= 32, "data.min_len", "must be >= 32");
  require(data.max_len >= data.min_len, "data.max_len", "must be >= data.min_len");
  require(data.chain_len >= 2, "data.chain_len", "must be >= 2");
  require(data.insufficient_fraction >= 0 && data.insufficient_fraction < 1,
          "data.insufficient_fraction", "must be in [0, 1)");
  require(data.short_view_fraction >= 0 && data.short_view_fraction <= 1,
          "data.short_view_fraction", "must be in [0, 1]");
  require(probe.epochs >= 1, "probe.epochs", "must be >= 1");
  require(probe.lr > 0, "probe.lr", "must be > 0");
  require(probe.train_fraction > 0 && probe.train_fraction < 1, "probe.train_fraction",
          "must be in (0, 1)");
  require(probe.heads >= 1 &&
              probe.heads <= static_cast<std::size_t>(model.n_layers * model.n_heads),
          "probe.heads", "must be in [1, n_layers * n_heads]");
  require(ensemble.select >= 1 && ensemble.select <= ensemble.pool, "ensemble.select",
          "must be in [1, ensemble.pool]");
  require(ensemble.folds >= 2, "ensemble.folds", "must be >= 2");
  require(!eval.tau_grid.empty(), "eval.tau_grid", "must not be empty");
  for (double t : eval.tau_grid) {
    require(t >= 0 && t <= 1, "eval.tau_grid", "tau " + std::to_string(t) + " outside [0, 1]");
  }
  static const std::set<std::string> known{"cutoff", "full", "static", "bm25", "oracle"};
  for (const auto& p : eval.policies) {
    require(known.count(p) > 0, "eval.policies", "unknown policy '" + p + "'");
  }
  require(eval.static_keep > 0 && eval.static_keep <= 1, "eval.static_keep", "must be in (0, 1]");
  require(eval.bm25_k >= 1, "eval.bm25_k", "must be >= 1");
  require(eval.max_answer_tokens >= 1, "eval.max_answer_tokens", "must be >= 1");
  require(!eval.chunking_table.empty(), "eval.chunking_table", "must not be empty");
  require(eval.competence_tasks >= 1, "eval.competence_tasks", "must be >= 1");
  require(eval.tune_tolerance >= 0, "eval.tune_tolerance", "must be >= 0");
  require(!out.empty(), "out", "must not be empty");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    j = json::object();
  } else {
    try {
      j = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(origin + ":" + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
  }

  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  root.read("out", c.out);

  auto m = root.child("model");
  m.read("n_layers", c.model.n_layers);
  m.read("n_heads", c.model.n_heads);
  m.read("d_model", c.model.d_model);
  m.read("d_ff", c.model.d_ff);
  m.read("vocab_size", c.model.vocab_size);
  m.read("max_positions", c.model.max_positions);
  m.finish();

  auto t = root.child("train");
  t.read("steps", c.train.steps);
  t.read("batch_size", c.train.batch_size);
  t.read("lr", c.train.lr);
  t.read("warmup_steps", c.train.warmup_steps);
  t.read("min_lr_ratio", c.train.min_lr_ratio);
  t.read("grad_clip", c.train.grad_clip);
  t.read("beta1", c.train.beta1);
  t.read("beta2", c.train.beta2);
  t.finish();

  auto d = root.child("data");
  d.read("single_hop", c.data.single_hop);
  d.read("multi_hop", c.data.multi_hop);
  d.read("min_len", c.data.min_len);
  d.read("max_len", c.data.max_len);
  d.read("chain_len", c.data.chain_len);
  d.read("model_corpus", c.data.model_corpus);
  d.read("insufficient_fraction", c.data.insufficient_fraction);
  d.read("short_view_fraction", c.data.short_view_fraction);
  d.read("short_view_extra", c.data.short_view_extra);
  d.finish();

  if (const auto* ch = root.raw("chunking")) c.chunking = chunking_from(*ch, "chunking");

  auto p = root.child("probe");
  p.read("epochs", c.probe.epochs);
  p.read("lr", c.probe.lr);
  p.read("train_fraction", c.probe.train_fraction);
  p.read("heads", c.probe.heads);
  p.finish();

  auto e = root.child("ensemble");
  e.read("pool", c.ensemble.pool);
  e.read("select", c.ensemble.select);
  e.read("folds", c.ensemble.folds);
  e.finish();

  auto v = root.child("eval");
  v.read("tau_grid", c.eval.tau_grid);
  v.read("policies", c.eval.policies);
  v.read("static_keep", c.eval.static_keep);
  v.read("bm25_k", c.eval.bm25_k);
  v.read("max_answer_tokens", c.eval.max_answer_tokens);
  v.read("tune_tolerance", c.eval.tune_tolerance);
  v.read("timing", c.eval.timing);
  v.read("table_train_tasks", c.eval.table_train_tasks);
  v.read("competence_tasks", c.eval.competence_tasks);
  if (const auto* table = v.raw("chunking_table")) {
    if (!table->is_array()) throw ConfigError("eval.chunking_table: expected an array");
    c.eval.chunking_table.clear();
    for (std::size_t i = 0; i < table->size(); ++i) {
      c.eval.chunking_table.push_back(
          chunking_from(table->at(i), "eval.chunking_table[" + std::to_string(i) + "]"));
    }
  }
  v.finish();
  root.finish();

  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string serialize_config(const RunConfig& c) {
  json table = json::array();
  for (const auto& s : c.eval.chunking_table) table.push_back(chunking_to(s));
  const json j = {
      {"seed", c.seed},
      {"out", c.out},
      {"model",
       {{"n_layers", c.model.n_layers},
        {"n_heads", c.model.n_heads},
        {"d_model", c.model.d_model},
        {"d_ff", c.model.d_ff},
        {"vocab_size", c.model.vocab_size},
        {"max_positions", c.model.max_positions}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"warmup_steps", c.train.warmup_steps},
        {"min_lr_ratio", c.train.min_lr_ratio},
        {"grad_clip", c.train.grad_clip},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2}}},
      {"data",
       {{"single_hop", c.data.single_hop},
        {"multi_hop", c.data.multi_hop},
        {"min_len", c.data.min_len},
        {"max_len", c.data.max_len},
        {"chain_len", c.data.chain_len},
        {"model_corpus", c.data.model_corpus},
        {"insufficient_fraction", c.data.insufficient_fraction},
        {"short_view_fraction", c.data.short_view_fraction},
        {"short_view_extra", c.data.short_view_extra}}},
      {"chunking", chunking_to(c.chunking)},
      {"probe",
       {{"epochs", c.probe.epochs},
        {"lr", c.probe.lr},
        {"train_fraction", c.probe.train_fraction},
        {"heads", c.probe.heads}}},
      {"ensemble",
       {{"pool", c.ensemble.pool}, {"select", c.ensemble.select}, {"folds", c.ensemble.folds}}},
      {"eval",
       {{"tau_grid", c.eval.tau_grid},
        {"policies", c.eval.policies},
        {"static_keep", c.eval.static_keep},
        {"bm25_k", c.eval.bm25_k},
        {"max_answer_tokens", c.eval.max_answer_tokens},
        {"tune_tolerance", c.eval.tune_tolerance},
        {"chunking_table", table},
        {"table_train_tasks", c.eval.table_train_tasks},
        {"competence_tasks", c.eval.competence_tasks},
        {"timing", c.eval.timing}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace dcc
